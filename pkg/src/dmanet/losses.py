"""Training objectives.

All losses operate on full-resolution logits ``(N, K, H, W)`` and integer
label maps ``(N, H, W)`` where ``IGNORE_ID`` marks pixels excluded from the
objective. The joint objective sums the principal head's loss with a
weighted sum of the two auxiliary heads' losses.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import torch
from torch.nn import functional as F

from .config import IGNORE_ID, OhemConfig
from .errors import ShapeError


class LossParts(NamedTuple):
    total: torch.Tensor
    principal: torch.Tensor
    aux_mid: torch.Tensor
    aux_high: torch.Tensor


def _flatten_valid(logits: torch.Tensor, labels: torch.Tensor, ignore_id: int):
    """Per-pixel (P, K) logits and (P,) labels restricted to non-ignored
    pixels, after validating shapes and label range."""
    if logits.dim() != 4:
        raise ShapeError(f"expected (N, K, H, W) logits, got {tuple(logits.shape)}")
    if labels.shape != (logits.shape[0], logits.shape[2], logits.shape[3]):
        raise ShapeError(
            f"labels {tuple(labels.shape)} do not match logits {tuple(logits.shape)}"
        )
    num_classes = logits.shape[1]
    flat_labels = labels.reshape(-1)
    valid = flat_labels != ignore_id
    picked = flat_labels[valid]
    if picked.numel() and (picked.min() < 0 or picked.max() >= num_classes):
        bad = picked[(picked < 0) | (picked >= num_classes)][0].item()
        raise ShapeError(
            f"label value {bad} outside [0, {num_classes}) and not the "
            f"ignore id {ignore_id}"
        )
    flat_logits = logits.permute(0, 2, 3, 1).reshape(-1, num_classes)
    return flat_logits[valid], picked


def pixel_cross_entropy(logits: torch.Tensor, labels: torch.Tensor,
                        ignore_id: int = IGNORE_ID) -> torch.Tensor:
    """Mean cross entropy over non-ignored pixels; zero (still attached to
    the graph) when every pixel is ignored."""
    flat_logits, flat_labels = _flatten_valid(logits, labels, ignore_id)
    if flat_labels.numel() == 0:
        return logits.sum() * 0.0
    # reduce the per-pixel vector directly so that a keep-everything mined
    # loss is bitwise identical to this one
    return F.cross_entropy(flat_logits, flat_labels, reduction="none").mean()


def ohem_cross_entropy(logits: torch.Tensor, labels: torch.Tensor,
                       ohem: OhemConfig = OhemConfig(),
                       ignore_id: int = IGNORE_ID) -> torch.Tensor:
    """Cross entropy averaged over hard pixels only.

    A pixel is hard when the probability assigned to its true class falls
    below ``ohem.prob_threshold``. If fewer than
    ``ceil(min_keep_fraction * valid)`` pixels qualify, the hardest pixels
    by per-pixel loss are kept up to that floor instead. Selection is done
    on detached values, so gradients flow only through the kept pixels'
    losses.
    """
    flat_logits, flat_labels = _flatten_valid(logits, labels, ignore_id)
    num_valid = flat_labels.numel()
    if num_valid == 0:
        return logits.sum() * 0.0
    losses = F.cross_entropy(flat_logits, flat_labels, reduction="none")
    with torch.no_grad():
        true_prob = torch.softmax(flat_logits, dim=1).gather(
            1, flat_labels.unsqueeze(1)).squeeze(1)
        hard = true_prob < ohem.prob_threshold
        min_keep = min(num_valid, math.ceil(ohem.min_keep_fraction * num_valid))
        if int(hard.sum()) < min_keep:
            _, keep_idx = torch.topk(losses.detach(), min_keep)
        else:
            keep_idx = hard.nonzero(as_tuple=True)[0]
    return losses[keep_idx].mean()


def joint_loss(outputs, labels: torch.Tensor, aux_weight: float = 1.0,
               ohem: OhemConfig | None = OhemConfig(),
               ignore_id: int = IGNORE_ID) -> LossParts:
    """Principal-head loss plus ``aux_weight`` times the summed auxiliary
    losses. With ``ohem=None`` each head uses plain pixel cross entropy."""
    if aux_weight < 0:
        raise ValueError(f"aux_weight must be >= 0, got {aux_weight}")
    if ohem is None:
        def head_loss(logits):
            return pixel_cross_entropy(logits, labels, ignore_id)
    else:
        def head_loss(logits):
            return ohem_cross_entropy(logits, labels, ohem, ignore_id)
    principal = head_loss(outputs.principal)
    aux_mid = head_loss(outputs.aux_mid)
    aux_high = head_loss(outputs.aux_high)
    return LossParts(
        total=principal + aux_weight * (aux_mid + aux_high),
        principal=principal,
        aux_mid=aux_mid,
        aux_high=aux_high,
    )
