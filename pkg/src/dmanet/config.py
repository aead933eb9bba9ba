"""Configuration dataclasses shared by the model, trainer, and data pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

IGNORE_ID = 255

# Canonical encoder stage widths; toy configs divide them uniformly.
ENCODER_WIDTHS = (64, 128, 256, 512)


@dataclass(frozen=True)
class ModelConfig:
    """Single source of truth for graph construction.

    ``width_divisor`` shrinks every width in the network uniformly so that
    desk-scale tests (oracle sweeps, gradient checks, overfit runs) stay fast;
    the reference configuration keeps ``width_divisor=1``.
    """

    num_classes: int
    branch_width: int = 128
    atrous_rates: tuple[int, int] = (2, 4)
    aux_weight: float = 1.0
    width_divisor: int = 1

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.width_divisor < 1:
            raise ConfigError(f"width_divisor must be >= 1, got {self.width_divisor}")
        if self.branch_width % self.width_divisor != 0:
            raise ConfigError(
                f"branch_width {self.branch_width} not divisible by "
                f"width_divisor {self.width_divisor}"
            )
        if ENCODER_WIDTHS[0] % self.width_divisor != 0:
            raise ConfigError(
                f"width_divisor {self.width_divisor} must divide {ENCODER_WIDTHS[0]}"
            )
        if len(self.atrous_rates) != 2 or any(r < 1 for r in self.atrous_rates):
            raise ConfigError(f"atrous_rates must be two positive ints, got {self.atrous_rates}")
        if self.aux_weight < 0:
            raise ConfigError(f"aux_weight must be >= 0, got {self.aux_weight}")

    @property
    def encoder_widths(self) -> tuple[int, int, int, int]:
        d = self.width_divisor
        return tuple(w // d for w in ENCODER_WIDTHS)

    @property
    def branch_channels(self) -> int:
        return self.branch_width // self.width_divisor

    @property
    def skip_channels(self) -> int:
        """Channels of the detail feature taken from the first encoder stage."""
        return ENCODER_WIDTHS[0] // self.width_divisor


@dataclass(frozen=True)
class OhemConfig:
    """Hard-pixel mining: keep pixels whose true-class probability falls below
    ``prob_threshold``, but never fewer than ``min_keep_fraction`` of the valid
    pixels."""

    prob_threshold: float = 0.7
    min_keep_fraction: float = 1.0 / 16.0

    def __post_init__(self):
        if not 0.0 < self.prob_threshold <= 1.0:
            raise ConfigError(f"prob_threshold must be in (0, 1], got {self.prob_threshold}")
        if not 0.0 < self.min_keep_fraction <= 1.0:
            raise ConfigError(
                f"min_keep_fraction must be in (0, 1], got {self.min_keep_fraction}"
            )


@dataclass(frozen=True)
class TrainConfig:
    total_iters: int
    batch_size: int
    base_lr: float = 0.005
    momentum: float = 0.9
    weight_decay: float = 0.0005
    power: float = 0.9
    aux_weight: float = 1.0
    seed: int = 0
    ohem: OhemConfig = field(default_factory=OhemConfig)

    def __post_init__(self):
        if self.total_iters < 1:
            raise ConfigError(f"total_iters must be >= 1, got {self.total_iters}")
        if self.batch_size < 2:
            # batch statistics of the transform block's channel path are taken
            # over the batch axis alone, which degenerates at batch size 1
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr}")
        if self.aux_weight < 0:
            raise ConfigError(f"aux_weight must be >= 0, got {self.aux_weight}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class AugConfig:
    crop: tuple[int, int]
    hflip_prob: float = 0.5
    scale_range: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        if self.crop[0] % 32 != 0 or self.crop[1] % 32 != 0:
            raise ConfigError(f"crop dims must be divisible by 32, got {self.crop}")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ConfigError(f"invalid scale_range {self.scale_range}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ConfigError(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")
