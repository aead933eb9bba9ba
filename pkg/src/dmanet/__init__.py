"""Real-time street-scene segmentation with a multi-branch aggregation
decoder over a simplified residual encoder, plus training, evaluation,
profiling, and prediction tooling."""

from .config import (
    IGNORE_ID,
    AugConfig,
    ModelConfig,
    OhemConfig,
    TrainConfig,
)
from .encoder import EncoderTaps, ResNet18Encoder, build_encoder, load_pretrained
from .errors import ConfigError, DataError, ShapeError, WeightsError
from .losses import LossParts, joint_loss, ohem_cross_entropy, pixel_cross_entropy
from .metrics import ConfusionMatrix
from .network import DMANet, ModelOutputs, build_dma_net, predict
from .profiler import ProfileReport, ProfileRow, benchmark_latency, profile
from .train import MomentumSGD, TrainResult, poly_lr, train_loop
from .weights import load_archive, load_checkpoint, save_archive, save_checkpoint

__all__ = [
    "IGNORE_ID",
    "AugConfig",
    "ModelConfig",
    "OhemConfig",
    "TrainConfig",
    "EncoderTaps",
    "ResNet18Encoder",
    "build_encoder",
    "load_pretrained",
    "ConfigError",
    "DataError",
    "ShapeError",
    "WeightsError",
    "LossParts",
    "joint_loss",
    "ohem_cross_entropy",
    "pixel_cross_entropy",
    "ConfusionMatrix",
    "DMANet",
    "ModelOutputs",
    "build_dma_net",
    "predict",
    "ProfileReport",
    "ProfileRow",
    "benchmark_latency",
    "profile",
    "MomentumSGD",
    "TrainResult",
    "poly_lr",
    "train_loop",
    "load_archive",
    "load_checkpoint",
    "save_archive",
    "save_checkpoint",
]

__version__ = "0.1.0"
