"""Iteration-based training loop.

The optimizer is stochastic gradient descent with classical momentum and
decoupled-by-exclusion weight decay::

    velocity <- momentum * velocity + grad + weight_decay * param
    param    <- param - lr * velocity

where the decay term is omitted for batch-norm parameters and all biases.
The learning rate follows a polynomial decay over the full iteration budget.

Training is resumable to the bit: batches are a pure function of
``(seed, iteration)`` (see ``data.training_batches``) and the optimizer
velocities travel with checkpoints, so restarting from iteration ``t``
continues the exact trajectory of an uninterrupted run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import torch
from torch import nn

from . import data
from .config import AugConfig, TrainConfig
from .losses import joint_loss
from .network import DMANet


def poly_lr(base_lr: float, iteration: int, total_iters: int,
            power: float = 0.9) -> float:
    """Polynomially decayed rate: ``base_lr * (1 - iteration/total)**power``;
    exactly ``base_lr`` at iteration 0 and exactly 0 at ``total_iters``."""
    if not 0 <= iteration <= total_iters:
        raise ValueError(
            f"iteration {iteration} outside [0, {total_iters}]"
        )
    return base_lr * (1.0 - iteration / total_iters) ** power


def decay_excluded_params(model: nn.Module) -> set[str]:
    """Names of parameters exempt from weight decay: batch-norm affine
    parameters and every bias."""
    excluded = set()
    for module_name, module in model.named_modules():
        if isinstance(module, nn.BatchNorm2d):
            for param_name, _ in module.named_parameters(recurse=False):
                excluded.add(f"{module_name}.{param_name}" if module_name
                             else param_name)
    for name, _ in model.named_parameters():
        if name.endswith(".bias"):
            excluded.add(name)
    return excluded


class MomentumSGD:
    """Momentum SGD with per-parameter velocity buffers keyed by parameter
    name so they can travel with checkpoints."""

    def __init__(self, model: nn.Module, momentum: float, weight_decay: float,
                 velocities: dict[str, torch.Tensor] | None = None):
        self.params = dict(model.named_parameters())
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.excluded = decay_excluded_params(model)
        if velocities is None:
            velocities = {name: torch.zeros_like(p)
                          for name, p in self.params.items()}
        else:
            for name, p in self.params.items():
                if name not in velocities:
                    raise ValueError(f"missing velocity buffer for {name}")
                if velocities[name].shape != p.shape:
                    raise ValueError(
                        f"velocity for {name} has shape "
                        f"{tuple(velocities[name].shape)}, parameter has "
                        f"{tuple(p.shape)}"
                    )
        self.velocities = velocities

    @torch.no_grad()
    def step(self, lr: float) -> None:
        for name, param in self.params.items():
            if param.grad is None:
                continue
            grad = param.grad
            if self.weight_decay and name not in self.excluded:
                grad = grad + self.weight_decay * param
            velocity = self.velocities[name]
            velocity.mul_(self.momentum).add_(grad)
            # two separately rounded ops, exactly the documented recurrence
            # (a fused add-with-alpha can differ in the last ulp)
            param.sub_(lr * velocity)


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    velocities: dict[str, torch.Tensor] = field(default_factory=dict)


IterationCallback = Callable[[int, DMANet, dict[str, torch.Tensor], dict], None]


def train_loop(model: DMANet, samples: list[data.Sample], train: TrainConfig,
               aug: AugConfig, start_iter: int = 0,
               velocities: dict[str, torch.Tensor] | None = None,
               on_iteration: IterationCallback | None = None) -> TrainResult:
    """Run iterations ``start_iter`` .. ``total_iters - 1``.

    Each history row records the iteration, learning rate, and the joint
    loss with its three per-head terms. ``on_iteration`` (if given) fires
    after every optimizer step with the model, the velocity buffers, and the
    history row — the hook used for periodic checkpointing.
    """
    model.train()
    sgd = MomentumSGD(model, train.momentum, train.weight_decay, velocities)
    result = TrainResult(velocities=sgd.velocities)
    batches = data.training_batches(samples, aug, train.batch_size,
                                    train.total_iters, train.seed, start_iter)
    for iteration, images, labels in batches:
        lr = poly_lr(train.base_lr, iteration, train.total_iters, train.power)
        model.zero_grad(set_to_none=True)
        parts = joint_loss(model(images), labels, train.aux_weight, train.ohem)
        parts.total.backward()
        sgd.step(lr)
        row = {
            "iteration": iteration,
            "lr": lr,
            "total": parts.total.item(),
            "principal": parts.principal.item(),
            "aux_mid": parts.aux_mid.item(),
            "aux_high": parts.aux_high.item(),
        }
        result.history.append(row)
        if on_iteration is not None:
            on_iteration(iteration, model, sgd.velocities, row)
    return result
