"""Shared fixtures: toy-scale configurations, randomized module states, and
one session-wide desk-scale training run reused by every test that needs a
trained model."""

from __future__ import annotations

import sys
import time
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent))

from dmanet import (
    AugConfig,
    ConfusionMatrix,
    ModelConfig,
    TrainConfig,
    build_dma_net,
    predict,
    train_loop,
)
from dmanet.data import make_synthetic_toy, normalize_image

TOY_CLASSES = 4
TOY_SIZE = (64, 128)

# the desk-scale training recipe shared by the learning tests
OVERFIT_MODEL = ModelConfig(num_classes=TOY_CLASSES, width_divisor=8)
OVERFIT_TRAIN = TrainConfig(total_iters=300, batch_size=4, base_lr=0.01, seed=0)
OVERFIT_AUG = AugConfig(crop=TOY_SIZE, hflip_prob=0.0, scale_range=(1.0, 1.0))


def randomize_running_stats_(model: torch.nn.Module, seed: int) -> None:
    """Give every batch norm non-trivial affine parameters and running
    statistics so eval-mode comparisons exercise all four arrays."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, torch.nn.BatchNorm2d):
                module.running_mean.normal_(0.0, 0.5, generator=gen)
                module.running_var.uniform_(0.5, 1.5, generator=gen)
                module.weight.uniform_(0.5, 1.5, generator=gen)
                module.bias.normal_(0.0, 0.3, generator=gen)


def evaluate_on(model, samples, num_classes=TOY_CLASSES) -> ConfusionMatrix:
    matrix = ConfusionMatrix(num_classes)
    for sample in samples:
        batch = torch.from_numpy(normalize_image(sample.image)).unsqueeze(0)
        matrix.update(predict(model, batch)[0], sample.label)
    return matrix


@pytest.fixture(scope="session")
def toy_samples():
    return make_synthetic_toy(8, TOY_SIZE, TOY_CLASSES, seed=0)


@pytest.fixture(scope="session")
def overfit_run(toy_samples):
    """Train the desk-scale model once for the whole session; returns the
    model, its loss history, and the wall-clock duration."""
    model = build_dma_net(OVERFIT_MODEL, seed=OVERFIT_TRAIN.seed)
    start = time.monotonic()
    result = train_loop(model, toy_samples, OVERFIT_TRAIN, OVERFIT_AUG)
    seconds = time.monotonic() - start
    return {"model": model, "history": result.history, "seconds": seconds,
            "velocities": result.velocities}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from acceptance_log import recorded_lines

    lines = recorded_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
