"""Decoder building blocks.

The lattice-enhanced block cross-mixes an identity path with an enhanced
path through two butterfly ("lattice") combines, each steered by a pair of
learned single-channel gate maps. A feature transform block rescales a map
with a joint spatial/channel attention tensor, and a global context block
injects an image-wide summary of the deepest encoder tap.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .errors import ShapeError


def _check_channels(x: torch.Tensor, expected: int, who: str) -> None:
    if x.dim() != 4:
        raise ShapeError(f"{who}: expected rank-4 input, got {tuple(x.shape)}")
    if x.shape[1] != expected:
        raise ShapeError(f"{who}: expected {expected} channels, got {x.shape[1]}")


class ConvBnRelu(nn.Module):
    """Conv + batch norm + ReLU; stride 1, padding chosen to preserve size."""

    def __init__(self, in_ch: int, out_ch: int, kernel_size: int = 3, dilation: int = 1):
        super().__init__()
        padding = dilation * (kernel_size // 2)
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size, stride=1,
                              padding=padding, dilation=dilation, bias=False)
        self.bn = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        _check_channels(x, self.conv.in_channels, "conv-bn-relu")
        return F.relu(self.bn(self.conv(x)), inplace=True)


class WeightLearningBlock(nn.Module):
    """1x1 convolution + sigmoid emitting two single-channel gate maps."""

    def __init__(self, in_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, 2, 1, bias=True)

    def forward(self, x) -> tuple[torch.Tensor, torch.Tensor]:
        _check_channels(x, self.conv.in_channels, "weight learning block")
        gates = torch.sigmoid(self.conv(x))
        return gates[:, 0:1], gates[:, 1:2]


def lattice_combine(skip, transformed, skip_gate, transform_gate):
    """Butterfly combine of an identity path and a transformed path.

    Returns ``(p, q, fused)`` where ``p = relu(skip + transform_gate * transformed)``,
    ``q = relu(skip_gate * skip + transformed)``, and ``fused = p + q``. The
    single-channel gates broadcast along the channel axis.
    """
    if skip.shape != transformed.shape:
        raise ShapeError(
            f"skip path {tuple(skip.shape)} and transformed path "
            f"{tuple(transformed.shape)} must match"
        )
    for name, gate in (("skip_gate", skip_gate), ("transform_gate", transform_gate)):
        if gate.shape[1] != 1 or gate.shape[2:] != skip.shape[2:] or gate.shape[0] != skip.shape[0]:
            raise ShapeError(f"{name} has shape {tuple(gate.shape)}, "
                             f"want (N, 1, {skip.shape[2]}, {skip.shape[3]})")
    p = F.relu(skip + transform_gate * transformed)
    q = F.relu(skip_gate * skip + transformed)
    return p, q, p + q


class ContextualModule(nn.Module):
    """Enhances context with two atrous convolutions, then lattice-combines
    the result with the input."""

    def __init__(self, channels: int, rates: tuple[int, int] = (2, 4)):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=rates[0],
                               dilation=rates[0], bias=False)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=rates[1],
                               dilation=rates[1], bias=False)
        self.bn2 = nn.BatchNorm2d(channels)
        self.gates = WeightLearningBlock(channels)

    def enhance(self, x):
        # no trailing ReLU: the lattice combine supplies the nonlinearity
        out = F.relu(self.bn1(self.conv1(x)), inplace=True)
        return self.bn2(self.conv2(out))

    def forward(self, x):
        _check_channels(x, self.conv1.in_channels, "contextual module")
        gate_a, gate_b = self.gates(x)
        _, _, fused = lattice_combine(x, self.enhance(x), gate_a, gate_b)
        return fused


class SpatialModule(nn.Module):
    """Enhances spatial detail from a concatenation with the early-stage
    encoder feature, then lattice-combines with the incoming map."""

    def __init__(self, channels: int, skip_ch: int):
        super().__init__()
        self.channels = channels
        self.skip_ch = skip_ch
        self.conv = nn.Conv2d(channels + skip_ch, channels, 3, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(channels)
        self.gates = WeightLearningBlock(channels)

    def forward(self, x, detail):
        _check_channels(x, self.channels, "spatial module")
        _check_channels(detail, self.skip_ch, "spatial module detail input")
        if x.shape[2:] != detail.shape[2:] or x.shape[0] != detail.shape[0]:
            raise ShapeError(
                f"spatial module: input {tuple(x.shape)} and detail feature "
                f"{tuple(detail.shape)} disagree on batch or spatial dims"
            )
        enhanced = self.bn(self.conv(torch.cat([x, detail], dim=1)))
        gate_a, gate_b = self.gates(x)
        # the gate roles are mirrored relative to the contextual lattice:
        # here gate_b scales the incoming map and gate_a the enhanced path
        _, _, fused = lattice_combine(enhanced, x, gate_a, gate_b)
        return fused


class LatticeEnhancedBlock(nn.Module):
    """Contextual module followed by a spatial module; the two fused maps are
    concatenated, doubling the channel count."""

    def __init__(self, channels: int, skip_ch: int, rates: tuple[int, int] = (2, 4)):
        super().__init__()
        self.context = ContextualModule(channels, rates)
        self.spatial = SpatialModule(channels, skip_ch)

    def forward(self, x, detail):
        context_out = self.context(x)
        spatial_out = self.spatial(context_out, detail)
        return torch.cat([context_out, spatial_out], dim=1)


class FeatureTransformBlock(nn.Module):
    """Rescales a feature map by a transformation tensor built from a spatial
    attention head and a channel attention head, fused by two softmax scalars.
    """

    def __init__(self, in_ch: int, out_ch: int, leaky_slope: float = 0.01):
        super().__init__()
        self.cbr = ConvBnRelu(in_ch, out_ch)
        self.spatial_conv = nn.Conv2d(out_ch, 1, 1, bias=True)
        self.channel_conv = nn.Conv2d(out_ch, out_ch, 1, bias=False)
        self.channel_bn = nn.BatchNorm2d(out_ch)
        self.channel_fc = nn.Conv2d(out_ch, out_ch, 1, bias=True)
        self.weight_fc = nn.Conv2d(out_ch, 2, 1, bias=True)
        self.leaky_slope = leaky_slope

    def fusion_weights(self, pooled) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-sample softmax pair weighting the spatial vs channel heads."""
        if pooled.shape[2:] != (1, 1):
            raise ShapeError(f"expected a pooled 1x1 map, got {tuple(pooled.shape)}")
        logits = self.weight_fc(pooled)
        pair = torch.softmax(logits[:, :2, 0, 0], dim=1)
        return pair[:, 0].view(-1, 1, 1, 1), pair[:, 1].view(-1, 1, 1, 1)

    def transformation(self, feats) -> torch.Tensor:
        """The multiplicative map applied to the transformed features: a
        sigmoid of the weighted spatial and channel heads, so always in (0, 1)."""
        spatial = F.leaky_relu(self.spatial_conv(feats), self.leaky_slope)
        pooled = feats.mean(dim=(2, 3), keepdim=True)
        channel = self.channel_fc(F.relu(self.channel_bn(self.channel_conv(pooled))))
        v, w = self.fusion_weights(pooled)
        return torch.sigmoid(v * spatial + w * channel)

    def forward(self, x):
        feats = self.cbr(x)
        return self.transformation(feats) * feats


class GlobalContextBlock(nn.Module):
    """Image-wide average of the deepest tap, projected and tiled back onto
    the 1/32 grid. A 1x1 projection kernel is used since the pooled map is
    a single position."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.cbr = ConvBnRelu(in_ch, out_ch, kernel_size=1)

    def forward(self, x):
        _check_channels(x, self.cbr.conv.in_channels, "global context block")
        pooled = x.mean(dim=(2, 3), keepdim=True)
        out = self.cbr(pooled)
        return out.expand(-1, -1, x.shape[2], x.shape[3])
