"""Analytic parameter/operation accounting and a wall-clock latency benchmark.

Parameter and floating-point-operation totals are computed in closed form by
walking the same graph the forward pass executes, so no tensors are ever
allocated. Operation costs follow one documented convention (inference, per
layer):

* convolution: ``2 * k^2 * C_in * C_out * H_out * W_out`` — one multiply and
  one add per MAC — plus ``C_out * H_out * W_out`` when biased
* batch norm: 2 per element (fused scale-and-shift)
* ReLU, leaky ReLU, sigmoid: 1 per element
* elementwise add or multiply: 1 per output element
* max/average pooling with a ``k x k`` window: ``k^2`` per output element
* global average pooling: 1 per input element
* bilinear resize: 8 per output element
* two-way softmax: 8 per sample

Channel concatenation and broadcast expansion move no floating-point values
and cost nothing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import ModelConfig
from .errors import ShapeError
from .network import DMANet


@dataclass(frozen=True)
class ProfileRow:
    name: str
    params: int
    flops: int


@dataclass
class ProfileReport:
    input_size: tuple[int, int]
    num_classes: int
    rows: list[ProfileRow] = field(default_factory=list)
    latency: dict[str, float] | None = None

    @property
    def total_params(self) -> int:
        return sum(row.params for row in self.rows)

    @property
    def total_flops(self) -> int:
        return sum(row.flops for row in self.rows)

    def params_of(self, prefix: str) -> int:
        return sum(row.params for row in self.rows
                   if row.name == prefix or row.name.startswith(prefix + "."))

    def flops_of(self, prefix: str) -> int:
        return sum(row.flops for row in self.rows
                   if row.name == prefix or row.name.startswith(prefix + "."))

    def text(self) -> str:
        height, width = self.input_size
        lines = [
            f"input {height}x{width}, {self.num_classes} classes",
            f"{'component':<24} {'params':>12} {'flops':>16}",
        ]
        for row in self.rows:
            lines.append(f"{row.name:<24} {row.params:>12,} {row.flops:>16,}")
        lines.append(f"{'total':<24} {self.total_params:>12,} "
                     f"{self.total_flops:>16,}")
        lines.append(f"total params {self.total_params / 1e6:.2f} M")
        lines.append(f"total flops  {self.total_flops / 1e9:.2f} G")
        if self.latency is not None:
            for key in ("mean_ms", "std_ms", "min_ms", "p50_ms", "max_ms", "fps"):
                lines.append(f"latency {key} {self.latency[key]:.3f}")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        out = {
            "input_height": self.input_size[0],
            "input_width": self.input_size[1],
            "num_classes": self.num_classes,
            "total_params": self.total_params,
            "total_flops": self.total_flops,
        }
        for row in self.rows:
            out[f"params.{row.name}"] = row.params
            out[f"flops.{row.name}"] = row.flops
        if self.latency is not None:
            for key, value in self.latency.items():
                out[f"latency.{key}"] = value
        return out


class _Tally:
    """Accumulates parameter and operation counts into named components."""

    def __init__(self):
        self.order: list[str] = []
        self.counts: dict[str, list[int]] = {}

    def add(self, name: str, params: int = 0, flops: int = 0) -> None:
        if name not in self.counts:
            self.order.append(name)
            self.counts[name] = [0, 0]
        self.counts[name][0] += params
        self.counts[name][1] += flops

    def conv(self, name, cin, cout, k, h, w, bias=False):
        params = k * k * cin * cout + (cout if bias else 0)
        flops = 2 * k * k * cin * cout * h * w + (cout * h * w if bias else 0)
        self.add(name, params, flops)

    def bn(self, name, c, h, w):
        self.add(name, 2 * c, 2 * c * h * w)

    def act(self, name, c, h, w):
        self.add(name, 0, c * h * w)

    def elementwise(self, name, c, h, w):
        self.add(name, 0, c * h * w)

    def pool(self, name, k, c, h_out, w_out):
        self.add(name, 0, k * k * c * h_out * w_out)

    def global_pool(self, name, c, h_in, w_in):
        self.add(name, 0, c * h_in * w_in)

    def bilinear(self, name, c, h_out, w_out):
        self.add(name, 0, 8 * c * h_out * w_out)

    def rows(self) -> list[ProfileRow]:
        return [ProfileRow(name, *self.counts[name]) for name in self.order]


def _cbr(t, name, cin, cout, k, h, w, dilation=1):
    del dilation  # same-size padding: dilation never changes the output grid
    t.conv(name, cin, cout, k, h, w)
    t.bn(name, cout, h, w)
    t.act(name, cout, h, w)


def _basic_block(t, name, cin, cout, stride, h_in, w_in):
    h, w = h_in // stride, w_in // stride
    t.conv(name, cin, cout, 3, h, w)
    t.bn(name, cout, h, w)
    t.act(name, cout, h, w)
    t.conv(name, cout, cout, 3, h, w)
    t.bn(name, cout, h, w)
    if stride != 1 or cin != cout:
        t.conv(name, cin, cout, 1, h, w)
        t.bn(name, cout, h, w)
    t.elementwise(name, cout, h, w)  # residual add
    t.act(name, cout, h, w)
    return h, w


def _encoder(t, widths, h, w):
    h2, w2 = h // 2, w // 2
    t.conv("encoder.stem", 3, widths[0], 7, h2, w2)
    t.bn("encoder.stem", widths[0], h2, w2)
    t.act("encoder.stem", widths[0], h2, w2)
    h4, w4 = h2 // 2, w2 // 2
    t.pool("encoder.stem", 3, widths[0], h4, w4)  # max pool
    sizes = {}
    cur_c, cur_h, cur_w = widths[0], h4, w4
    for index, (cout, stride, tap) in enumerate(
            zip(widths, (1, 2, 2, 2), ("f4", "f8", "f16", "f32")), start=1):
        name = f"encoder.sub{index}"
        cur_h, cur_w = _basic_block(t, name, cur_c, cout, stride, cur_h, cur_w)
        _basic_block(t, name, cout, cout, 1, cur_h, cur_w)
        cur_c = cout
        sizes[tap] = (cur_h, cur_w)
    return sizes


def _lattice(t, name, c, skip, h, w, rates):
    # contextual half: two atrous convolutions, gates, butterfly combine
    _cbr(t, name, c, c, 3, h, w, dilation=rates[0])
    t.conv(name, c, c, 3, h, w)
    t.bn(name, c, h, w)
    t.conv(name, c, 2, 1, h, w, bias=True)  # gate pair
    t.act(name, 2, h, w)                    # sigmoid
    t.add(name, 0, 7 * c * h * w)           # 2 gated muls, 3 adds, 2 relus
    # spatial half: fuse with the detail feature, gates, combine
    t.conv(name, c + skip, c, 3, h, w)
    t.bn(name, c, h, w)
    t.conv(name, c, 2, 1, h, w, bias=True)
    t.act(name, 2, h, w)
    t.add(name, 0, 7 * c * h * w)


def _branch(t, name, in_ch, c, skip, h, w, detail_stride, rates):
    _cbr(t, name, in_ch, c, 3, h, w)
    _cbr(t, name, c, c, 3, h, w)
    t.pool(name, detail_stride, skip, h, w)  # average-pool the detail tap
    _cbr(t, name, skip, skip, 3, h, w)
    _lattice(t, name, c, skip, h, w, rates)
    _cbr(t, name, 2 * c, c, 3, h, w)


def _feature_transform(t, name, c, h, w):
    _cbr(t, name, c, c, 3, h, w)
    t.conv(name, c, 1, 1, h, w, bias=True)   # spatial head
    t.act(name, 1, h, w)                     # leaky relu
    t.global_pool(name, c, h, w)
    t.conv(name, c, c, 1, 1, 1)              # channel head
    t.bn(name, c, 1, 1)
    t.act(name, c, 1, 1)
    t.conv(name, c, c, 1, 1, 1, bias=True)
    t.conv(name, c, 2, 1, 1, 1, bias=True)   # fusion-weight head
    t.add(name, 0, 8)                        # two-way softmax
    t.add(name, 0, h * w + c)                # scale each head by its weight
    t.elementwise(name, c, h, w)             # broadcast add
    t.act(name, c, h, w)                     # sigmoid
    t.elementwise(name, c, h, w)             # apply the transformation
    return name


def profile(config: ModelConfig, input_size: tuple[int, int]) -> ProfileReport:
    """Closed-form parameter and operation totals for a single image of the
    given size, grouped by network component."""
    height, width = input_size
    if height % 32 or width % 32:
        raise ShapeError(f"input size {input_size} must be divisible by 32")
    widths = config.encoder_widths
    c = config.branch_channels
    skip = config.skip_channels
    k = config.num_classes
    t = _Tally()
    sizes = _encoder(t, widths, height, width)
    (h8, w8), (h16, w16), (h32, w32) = sizes["f8"], sizes["f16"], sizes["f32"]
    _branch(t, "low_branch", widths[1], c, skip, h8, w8, 2, config.atrous_rates)
    _branch(t, "mid_branch", widths[2], c, skip, h16, w16, 4, config.atrous_rates)
    _branch(t, "high_branch", widths[3], c, skip, h32, w32, 8, config.atrous_rates)
    t.global_pool("global_context", widths[3], h32, w32)
    t.conv("global_context", widths[3], c, 1, 1, 1)
    t.bn("global_context", c, 1, 1)
    t.act("global_context", c, 1, 1)
    t.elementwise("aggregation", c, h32, w32)       # high branch + context
    _feature_transform(t, "high_transform", c, h32, w32)
    t.bilinear("aggregation", c, h16, w16)
    t.elementwise("aggregation", c, h16, w16)       # mid branch + transform
    _feature_transform(t, "mid_transform", c, h16, w16)
    t.bilinear("aggregation", c, h8, w8)
    t.elementwise("aggregation", c, h8, w8)         # low branch + transform
    for name, (hh, ww) in (("heads.principal", (h8, w8)),
                           ("heads.aux_mid", (h16, w16)),
                           ("heads.aux_high", (h32, w32))):
        t.conv(name, c, k, 1, hh, ww, bias=True)
        t.bilinear(name, k, height, width)
    return ProfileReport(input_size=(height, width), num_classes=k,
                         rows=t.rows())


@torch.no_grad()
def benchmark_latency(model: DMANet, input_size: tuple[int, int] = (1024, 2048),
                      warmup: int = 10, iters: int = 50,
                      seed: int = 0) -> dict[str, float]:
    """Wall-clock forward-pass statistics in eval mode on a fixed random
    input; ``fps = 1000 / mean_ms``."""
    if warmup < 0 or iters < 1:
        raise ValueError(f"need warmup >= 0 and iters >= 1, "
                         f"got {warmup} and {iters}")
    was_training = model.training
    model.eval()
    try:
        gen = torch.Generator().manual_seed(seed)
        image = torch.randn(1, 3, *input_size, generator=gen)
        for _ in range(warmup):
            model(image)
        samples_ms = []
        for _ in range(iters):
            start = time.perf_counter()
            model(image)
            samples_ms.append((time.perf_counter() - start) * 1000.0)
    finally:
        model.train(was_training)
    arr = np.asarray(samples_ms)
    mean_ms = float(arr.mean())
    return {
        "mean_ms": mean_ms,
        "std_ms": float(arr.std()),
        "min_ms": float(arr.min()),
        "p50_ms": float(np.median(arr)),
        "max_ms": float(arr.max()),
        "fps": 1000.0 / mean_ms,
    }
