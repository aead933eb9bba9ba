"""Full segmentation network: encoder taps feeding three decoder branches.

Each branch reduces one encoder tap to a common width, enhances it with a
lattice-enhanced block against a pooled copy of the earliest tap, and the
branches are then aggregated deepest-first: the 1/32 branch absorbs global
context, is transformed and upsampled into the 1/16 branch, which in turn
feeds the 1/8 branch. Classification heads sit on all three aggregated maps;
the 1/8 head is the principal output, the other two are auxiliary outputs
used only by the training objective.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .blocks import (
    ConvBnRelu,
    FeatureTransformBlock,
    GlobalContextBlock,
    LatticeEnhancedBlock,
)
from .config import ModelConfig
from .encoder import ResNet18Encoder, init_module_
from .errors import ShapeError


class ModelOutputs(NamedTuple):
    """Per-head logits, each bilinearly restored to the input resolution."""

    principal: torch.Tensor
    aux_mid: torch.Tensor
    aux_high: torch.Tensor


def _up2(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class _Branch(nn.Module):
    """One decoder branch: two conv-bn-relu stages squeeze the encoder tap to
    the branch width, a pooled-and-projected copy of the 1/4-resolution tap
    supplies spatial detail, and the lattice-enhanced block's doubled output
    is projected back to the branch width."""

    def __init__(self, in_ch: int, channels: int, skip_ch: int,
                 detail_stride: int, rates: tuple[int, int]):
        super().__init__()
        self.reduce1 = ConvBnRelu(in_ch, channels)
        self.reduce2 = ConvBnRelu(channels, channels)
        self.detail_pool = nn.AvgPool2d(detail_stride)
        self.detail_proj = ConvBnRelu(skip_ch, skip_ch)
        self.lattice = LatticeEnhancedBlock(channels, skip_ch, rates)
        self.project = ConvBnRelu(2 * channels, channels)

    def forward(self, tap: torch.Tensor, detail: torch.Tensor) -> torch.Tensor:
        feats = self.reduce2(self.reduce1(tap))
        adapted = self.detail_proj(self.detail_pool(detail))
        return self.project(self.lattice(feats, adapted))


class DMANet(nn.Module):
    """Multi-branch aggregation segmentation network."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        widths = config.encoder_widths
        c = config.branch_channels
        skip = config.skip_channels
        rates = config.atrous_rates
        self.encoder = ResNet18Encoder(config)
        self.low_branch = _Branch(widths[1], c, skip, 2, rates)
        self.mid_branch = _Branch(widths[2], c, skip, 4, rates)
        self.high_branch = _Branch(widths[3], c, skip, 8, rates)
        self.global_context = GlobalContextBlock(widths[3], c)
        self.high_transform = FeatureTransformBlock(c, c)
        self.mid_transform = FeatureTransformBlock(c, c)
        self.head = nn.Conv2d(c, config.num_classes, 1, bias=True)
        self.aux_mid_head = nn.Conv2d(c, config.num_classes, 1, bias=True)
        self.aux_high_head = nn.Conv2d(c, config.num_classes, 1, bias=True)

    def forward_features(self, images: torch.Tensor):
        """Aggregated branch features at 1/8, 1/16, and 1/32 resolution."""
        taps = self.encoder(images)
        high = self.high_branch(taps.f32, taps.f4) + self.global_context(taps.f32)
        mid = self.mid_branch(taps.f16, taps.f4) + _up2(self.high_transform(high))
        low = self.low_branch(taps.f8, taps.f4) + _up2(self.mid_transform(mid))
        return low, mid, high

    def forward(self, images: torch.Tensor) -> ModelOutputs:
        low, mid, high = self.forward_features(images)
        size = images.shape[2:]
        def restore(logits):
            return F.interpolate(logits, size=size, mode="bilinear", align_corners=False)
        return ModelOutputs(
            principal=restore(self.head(low)),
            aux_mid=restore(self.aux_mid_head(mid)),
            aux_high=restore(self.aux_high_head(high)),
        )


def build_dma_net(config: ModelConfig, seed: int = 0) -> DMANet:
    """Construct and deterministically initialize the network: convolutions
    get a Kaiming-normal fill driven by ``seed``, batch norms start as the
    identity, and biases start at zero."""
    model = DMANet(config)
    gen = torch.Generator().manual_seed(seed)
    init_module_(model, gen)
    return model


@torch.no_grad()
def predict(model: DMANet, images: torch.Tensor) -> np.ndarray:
    """Class-id map of shape (N, H, W), int64. Ties on the logit maximum
    resolve to the lowest class id. Runs the network in eval mode and
    restores the previous mode afterwards."""
    if images.dim() != 4:
        raise ShapeError(f"expected (N, 3, H, W) input, got {tuple(images.shape)}")
    was_training = model.training
    model.eval()
    try:
        logits = model(images).principal
    finally:
        model.train(was_training)
    return np.argmax(logits.cpu().numpy(), axis=1).astype(np.int64)
