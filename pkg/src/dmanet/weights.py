"""Weight archives and training checkpoints.

Both are NumPy ``.npz`` files holding little-endian float32 arrays. A weight
archive maps each module array to its attribute path (``encoder.stem.conv.weight``,
``head.bias``, batch-norm running statistics included; the batch counters are
derivable bookkeeping and are excluded). A checkpoint additionally carries
the optimizer velocity buffers and the number of completed iterations, under
``model/``, ``velocity/``, and ``meta/`` key prefixes.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .errors import WeightsError


def _module_arrays(module: nn.Module) -> dict[str, torch.Tensor]:
    return {key: value for key, value in module.state_dict().items()
            if not key.endswith("num_batches_tracked")}


def save_archive(path, module: nn.Module) -> None:
    arrays = {key: value.detach().cpu().numpy().astype(np.float32)
              for key, value in _module_arrays(module).items()}
    np.savez(path, **arrays)


def _copy_into(module: nn.Module, stored: dict[str, np.ndarray], what: str) -> None:
    expected = _module_arrays(module)
    missing = sorted(set(expected) - set(stored))
    if missing:
        raise WeightsError(f"{what} is missing array {missing[0]!r}"
                           + (f" and {len(missing) - 1} more" if len(missing) > 1 else ""))
    unknown = sorted(set(stored) - set(expected))
    if unknown:
        raise WeightsError(f"{what} contains unknown arrays: {', '.join(unknown)}")
    for key, target in expected.items():
        source = stored[key]
        if tuple(source.shape) != tuple(target.shape):
            raise WeightsError(
                f"{what}: array {key!r} has shape {tuple(source.shape)}, "
                f"module expects {tuple(target.shape)}"
            )
        with torch.no_grad():
            target.copy_(torch.from_numpy(np.ascontiguousarray(source)))


def load_archive(source, module: nn.Module) -> None:
    """Overwrite every module array from an archive created by
    ``save_archive``. Missing, unknown, or misshapen arrays raise
    ``WeightsError`` naming the offending key."""
    with np.load(source) as archive:
        stored = {key: archive[key] for key in archive.files}
    _copy_into(module, stored, f"archive {getattr(source, 'name', source)}")


def save_checkpoint(path, model: nn.Module,
                    velocities: dict[str, torch.Tensor],
                    completed_iters: int) -> None:
    param_names = {name for name, _ in model.named_parameters()}
    if set(velocities) != param_names:
        raise WeightsError("velocity buffers do not match the model parameters")
    arrays = {f"model/{key}": value.detach().cpu().numpy().astype(np.float32)
              for key, value in _module_arrays(model).items()}
    for key, value in velocities.items():
        arrays[f"velocity/{key}"] = value.detach().cpu().numpy().astype(np.float32)
    arrays["meta/iteration"] = np.asarray(completed_iters, dtype=np.int64)
    np.savez(path, **arrays)


def load_checkpoint(path, model: nn.Module):
    """Restore the model in place; returns ``(velocities, completed_iters)``
    so training can resume with ``start_iter=completed_iters``."""
    with np.load(path) as archive:
        stored = {key: archive[key] for key in archive.files}
    if "meta/iteration" not in stored:
        raise WeightsError(f"checkpoint {path} has no meta/iteration entry")
    completed = int(stored.pop("meta/iteration"))
    model_arrays = {key[len("model/"):]: value for key, value in stored.items()
                    if key.startswith("model/")}
    velocity_arrays = {key[len("velocity/"):]: value for key, value in stored.items()
                       if key.startswith("velocity/")}
    leftover = [key for key in stored
                if not key.startswith(("model/", "velocity/"))]
    if leftover:
        raise WeightsError(f"checkpoint {path} contains unknown arrays: "
                           f"{', '.join(sorted(leftover))}")
    _copy_into(model, model_arrays, f"checkpoint {path}")
    param_names = {name for name, _ in model.named_parameters()}
    if set(velocity_arrays) != param_names:
        missing = sorted(param_names - set(velocity_arrays))
        unknown = sorted(set(velocity_arrays) - param_names)
        detail = "; ".join(filter(None, [
            f"missing velocities: {', '.join(missing)}" if missing else "",
            f"unknown velocities: {', '.join(unknown)}" if unknown else "",
        ]))
        raise WeightsError(f"checkpoint {path} velocity buffers do not match "
                           f"the model parameters ({detail})")
    velocities = {key: torch.from_numpy(np.ascontiguousarray(value))
                  for key, value in velocity_arrays.items()}
    return velocities, completed
