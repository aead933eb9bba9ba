"""Simplified ResNet-18 encoder exposing four multi-scale feature taps.

The classifier stage of the canonical network is dropped entirely: a 7x7
stem convolution, a 3x3 max-pool, and eight residual basic blocks grouped
into four sub-networks. The sub-network outputs at 1/4, 1/8, 1/16, and 1/32
of the input resolution are the interface consumed by the decoder.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import torch
from torch import nn
from torch.nn import functional as F

from .config import ModelConfig
from .errors import ShapeError


class EncoderTaps(NamedTuple):
    f4: torch.Tensor
    f8: torch.Tensor
    f16: torch.Tensor
    f32: torch.Tensor


def kaiming_normal_(tensor: torch.Tensor, generator: torch.Generator) -> None:
    """Kaiming-normal fill (fan-out, ReLU gain) with an explicit generator."""
    fan_out = tensor.shape[0] * int(torch.prod(torch.tensor(tensor.shape[2:])).item()) \
        if tensor.dim() > 2 else tensor.shape[0]
    std = math.sqrt(2.0 / fan_out)
    with torch.no_grad():
        tensor.normal_(0.0, std, generator=generator)


def init_module_(module: nn.Module, generator: torch.Generator) -> None:
    """Initialize every conv by the Kaiming-normal scheme, batch norms to
    identity, and biases to zero, in deterministic module order."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            kaiming_normal_(m.weight, generator)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


class _Stem(nn.Module):
    def __init__(self, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(3, out_ch, 7, stride=2, padding=3, bias=False)
        self.bn = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        return F.relu(self.bn(self.conv(x)), inplace=True)


class _Downsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False)
        self.bn = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        return self.bn(self.conv(x))


class BasicBlock(nn.Module):
    """Two 3x3 convolutions with an identity (or 1x1 projected) shortcut."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.down = _Downsample(in_ch, out_ch, stride) if (stride != 1 or in_ch != out_ch) else None

    def forward(self, x):
        identity = x if self.down is None else self.down(x)
        out = F.relu(self.bn1(self.conv1(x)), inplace=True)
        out = self.bn2(self.conv2(out))
        return F.relu(out + identity, inplace=True)


class _SubNetwork(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int):
        super().__init__()
        self.block1 = BasicBlock(in_ch, out_ch, stride)
        self.block2 = BasicBlock(out_ch, out_ch, 1)

    def forward(self, x):
        return self.block2(self.block1(x))


class ResNet18Encoder(nn.Module):
    """Weight-file keys follow the attribute path, e.g. ``stem.conv.weight``,
    ``sub3.block1.down.bn.running_var``."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        w = config.encoder_widths
        self.stem = _Stem(w[0])
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        self.sub1 = _SubNetwork(w[0], w[0], stride=1)
        self.sub2 = _SubNetwork(w[0], w[1], stride=2)
        self.sub3 = _SubNetwork(w[1], w[2], stride=2)
        self.sub4 = _SubNetwork(w[2], w[3], stride=2)

    def forward(self, images: torch.Tensor) -> EncoderTaps:
        if images.dim() != 4 or images.shape[1] != 3:
            raise ShapeError(f"expected (N, 3, H, W) input, got {tuple(images.shape)}")
        for axis, name in ((2, "height"), (3, "width")):
            if images.shape[axis] % 32 != 0:
                raise ShapeError(
                    f"{name} {images.shape[axis]} is not divisible by 32"
                )
        x = self.pool(self.stem(images))
        f4 = self.sub1(x)
        f8 = self.sub2(f4)
        f16 = self.sub3(f8)
        f32 = self.sub4(f16)
        return EncoderTaps(f4, f8, f16, f32)


def build_encoder(config: ModelConfig, seed: int) -> ResNet18Encoder:
    encoder = ResNet18Encoder(config)
    gen = torch.Generator().manual_seed(seed)
    init_module_(encoder, gen)
    return encoder


def load_pretrained(encoder: ResNet18Encoder, source) -> ResNet18Encoder:
    """Overwrite every encoder array from a weight archive (see ``weights``)."""
    from . import weights

    weights.load_archive(source, encoder)
    return encoder
