"""Command-line interface.

Four subcommands share one flat config format::

    dmanet train   --config PATH [--set key=value ...] [--checkpoint PATH]
                   [--lambda-sweep v1,v2,...]
    dmanet eval    --config PATH --checkpoint PATH [--set key=value ...]
    dmanet profile --config PATH [--input-size HxW]
                   [--latency [--warmup N] [--iters M]]
    dmanet predict --config PATH --checkpoint PATH [--set key=value ...]

Config files are plain text, one ``key = value`` per line, ``#`` starting a
comment; every key is dotted, flat, and validated against a typed schema —
unknown keys are hard errors. ``--set key=value`` applies the same grammar
on top of the file. The resolved configuration is echoed to stdout and
written next to the run's artifacts. Relative output directories resolve
against ``$DMANET_OUTPUT_ROOT`` when that variable is set.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import data, profiler, weights
from .config import AugConfig, ModelConfig, OhemConfig, TrainConfig
from .errors import ConfigError, DataError, ShapeError, WeightsError
from .metrics import ConfusionMatrix
from .network import DMANet, build_dma_net, predict
from .train import train_loop

_REQUIRED = object()

# key -> (parser, default); the parser doubles as the value validator
_SCHEMA: dict = {}


def _register(key, parse, default=_REQUIRED):
    _SCHEMA[key] = (parse, default)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_pair(text: str) -> tuple[int, int]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated ints, got {text!r}")
    return int(parts[0]), int(parts[1])


_register("model.num_classes", int)
_register("model.branch_width", int, 128)
_register("model.width_divisor", int, 1)
_register("model.atrous_rates", _parse_int_pair, (2, 4))
_register("train.total_iters", int, 1000)
_register("train.batch_size", int, 8)
_register("train.base_lr", float, 0.005)
_register("train.momentum", float, 0.9)
_register("train.weight_decay", float, 0.0005)
_register("train.power", float, 0.9)
_register("train.aux_weight", float, 1.0)
_register("train.seed", int, 0)
_register("train.ohem", _parse_bool, True)
_register("train.ohem_threshold", float, 0.7)
_register("train.min_keep_fraction", float, 1.0 / 16.0)
_register("aug.crop", _parse_int_pair, (512, 1024))
_register("aug.hflip_prob", float, 0.5)
_register("aug.scale_min", float, 0.5)
_register("aug.scale_max", float, 2.0)
_register("data.layout", str, "toy")
_register("data.root", str, "")
_register("data.train_split", str, "train")
_register("data.eval_split", str, "val")
_register("data.toy_images", int, 8)
_register("data.toy_height", int, 64)
_register("data.toy_width", int, 128)
_register("data.toy_seed", int, 0)
_register("output.dir", str, "run")
_register("checkpoint.every", int, 0)


def parse_assignment(line: str, source: str):
    if "=" not in line:
        raise ConfigError(f"{source}: expected 'key = value', got {line!r}")
    key, _, raw = line.partition("=")
    key = key.strip()
    raw = raw.strip()
    if key not in _SCHEMA:
        raise ConfigError(f"{source}: unknown config key {key!r}")
    parse, _ = _SCHEMA[key]
    try:
        return key, parse(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: bad value for {key}: {exc}") from exc


def load_config(path, overrides: list[str] | None = None) -> dict:
    """Parse a config file plus ``--set`` overrides into a fully-defaulted
    dict; missing required keys and unknown keys are errors."""
    values: dict = {}
    text = Path(path).read_text()
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = parse_assignment(line, f"{path}:{number}")
        values[key] = value
    for item in overrides or []:
        key, value = parse_assignment(item, "--set")
        values[key] = value
    for key, (_, default) in _SCHEMA.items():
        if key not in values:
            if default is _REQUIRED:
                raise ConfigError(f"{path}: missing required key {key!r}")
            values[key] = default
    return values


def render_config(values: dict) -> str:
    def fmt(value):
        if isinstance(value, tuple):
            return ",".join(str(v) for v in value)
        if isinstance(value, bool):
            return "true" if value else "false"
        return str(value)

    return "\n".join(f"{key} = {fmt(values[key])}" for key in _SCHEMA) + "\n"


def _model_config(values: dict) -> ModelConfig:
    return ModelConfig(
        num_classes=values["model.num_classes"],
        branch_width=values["model.branch_width"],
        atrous_rates=values["model.atrous_rates"],
        aux_weight=values["train.aux_weight"],
        width_divisor=values["model.width_divisor"],
    )


def _train_config(values: dict) -> TrainConfig:
    return TrainConfig(
        total_iters=values["train.total_iters"],
        batch_size=values["train.batch_size"],
        base_lr=values["train.base_lr"],
        momentum=values["train.momentum"],
        weight_decay=values["train.weight_decay"],
        power=values["train.power"],
        aux_weight=values["train.aux_weight"],
        seed=values["train.seed"],
        ohem=OhemConfig(prob_threshold=values["train.ohem_threshold"],
                        min_keep_fraction=values["train.min_keep_fraction"]),
    )


def _aug_config(values: dict) -> AugConfig:
    return AugConfig(
        crop=values["aug.crop"],
        hflip_prob=values["aug.hflip_prob"],
        scale_range=(values["aug.scale_min"], values["aug.scale_max"]),
    )


def _load_samples(values: dict, split_key: str) -> list[data.Sample]:
    layout = values["data.layout"]
    if layout == "toy":
        return data.make_synthetic_toy(
            num_images=values["data.toy_images"],
            size=(values["data.toy_height"], values["data.toy_width"]),
            num_classes=values["model.num_classes"],
            seed=values["data.toy_seed"],
        )
    return data.load_dataset(values["data.root"], values[split_key], layout)


def _output_dir(values: dict) -> Path:
    out = Path(values["output.dir"])
    root = os.environ.get("DMANET_OUTPUT_ROOT")
    if root and not out.is_absolute():
        out = Path(root) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(values: dict, out_dir: Path) -> None:
    text = render_config(values)
    sys.stdout.write(text)
    (out_dir / "resolved.cfg").write_text(text)


def _load_model_arrays(model: DMANet, path):
    """Accept either a plain weight archive or a full checkpoint."""
    with np.load(path) as archive:
        is_checkpoint = "meta/iteration" in archive.files
    if is_checkpoint:
        weights.load_checkpoint(path, model)
    else:
        weights.load_archive(path, model)


def _write_history(rows: list[dict], path: Path) -> None:
    columns = ["iteration", "lr", "total", "principal", "aux_mid", "aux_high"]
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


def _run_training(values: dict, out_dir: Path, checkpoint: str | None) -> list[dict]:
    model_cfg = _model_config(values)
    train_cfg = _train_config(values)
    aug_cfg = _aug_config(values)
    samples = _load_samples(values, "data.train_split")
    model = build_dma_net(model_cfg, seed=train_cfg.seed)
    start_iter = 0
    velocities = None
    if checkpoint:
        velocities, start_iter = weights.load_checkpoint(checkpoint, model)
        print(f"resumed from {checkpoint} at iteration {start_iter}")
    every = values["checkpoint.every"]

    def on_iteration(iteration, live_model, live_velocities, row):
        done = iteration + 1
        if every > 0 and done % every == 0 and done < train_cfg.total_iters:
            weights.save_checkpoint(out_dir / f"checkpoint_{done:06d}.npz",
                                    live_model, live_velocities, done)

    result = train_loop(model, samples, train_cfg, aug_cfg,
                        start_iter=start_iter, velocities=velocities,
                        on_iteration=on_iteration)
    weights.save_archive(out_dir / "weights.npz", model)
    weights.save_checkpoint(out_dir / "checkpoint_last.npz", model,
                            result.velocities, train_cfg.total_iters)
    _write_history(result.history, out_dir / "history.csv")
    if result.history:
        last = result.history[-1]
        print(f"finished at iteration {last['iteration']}: "
              f"total {last['total']:.4f} principal {last['principal']:.4f}")
    return result.history


def _cmd_train(args) -> int:
    values = load_config(args.config, args.set)
    out_dir = _output_dir(values)
    _echo_config(values, out_dir)
    if args.lambda_sweep:
        sweep = [float(v) for v in args.lambda_sweep.split(",")]
        summary = []
        for aux_weight in sweep:
            run_values = dict(values)
            run_values["train.aux_weight"] = aux_weight
            run_values["output.dir"] = str(Path(values["output.dir"])
                                           / f"lambda_{aux_weight:g}")
            run_dir = _output_dir(run_values)
            _echo_config(run_values, run_dir)
            history = _run_training(run_values, run_dir, args.checkpoint)
            last = history[-1]
            summary.append({"aux_weight": aux_weight,
                            "final_total": last["total"],
                            "final_principal": last["principal"]})
        with (out_dir / "sweep_summary.csv").open("w", newline="") as handle:
            writer = csv.DictWriter(
                handle, fieldnames=["aux_weight", "final_total", "final_principal"])
            writer.writeheader()
            writer.writerows(summary)
        for row in summary:
            print(f"lambda {row['aux_weight']:g}: total {row['final_total']:.4f} "
                  f"principal {row['final_principal']:.4f}")
    else:
        _run_training(values, out_dir, args.checkpoint)
    return 0


def _predict_one(model: DMANet, image: np.ndarray) -> np.ndarray:
    padded, (height, width) = data.pad_to_multiple(image)
    batch = torch.from_numpy(data.normalize_image(padded)).unsqueeze(0)
    mask = predict(model, batch)[0]
    return mask[:height, :width]


def _cmd_eval(args) -> int:
    values = load_config(args.config, args.set)
    out_dir = _output_dir(values)
    _echo_config(values, out_dir)
    model_cfg = _model_config(values)
    samples = _load_samples(values, "data.eval_split")
    model = build_dma_net(model_cfg, seed=values["train.seed"])
    _load_model_arrays(model, args.checkpoint)
    matrix = ConfusionMatrix(model_cfg.num_classes)
    for sample in samples:
        matrix.update(_predict_one(model, sample.image), sample.label)
    names = None
    if values["data.layout"] == "cityscapes":
        names = list(data.CITYSCAPES_CLASSES)
    elif values["data.layout"] == "camvid":
        names = list(data.CAMVID_CLASSES)
    report = matrix.report(names)
    print(report)
    (out_dir / "metrics.txt").write_text(report + "\n")
    return 0


def _cmd_predict(args) -> int:
    values = load_config(args.config, args.set)
    out_dir = _output_dir(values)
    _echo_config(values, out_dir)
    model_cfg = _model_config(values)
    samples = _load_samples(values, "data.eval_split")
    model = build_dma_net(model_cfg, seed=values["train.seed"])
    _load_model_arrays(model, args.checkpoint)
    palette = data.palette_for(values["data.layout"], model_cfg.num_classes)
    mask_dir = out_dir / "masks"
    composite_dir = out_dir / "composites"
    mask_dir.mkdir(exist_ok=True)
    composite_dir.mkdir(exist_ok=True)
    for sample in samples:
        mask = _predict_one(model, sample.image).astype(np.uint8)
        indexed = Image.fromarray(mask, mode="P")
        indexed.putpalette(palette.flatten().tolist())
        indexed.save(mask_dir / f"{sample.name}.png")
        colored = data.colorize_labels(mask, palette)
        composite = np.concatenate([sample.image, colored], axis=1)
        Image.fromarray(composite).save(composite_dir / f"{sample.name}.png")
        print(f"wrote masks/{sample.name}.png")
    return 0


def _parse_input_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ConfigError(f"expected HxW, got {text!r}")
    return int(parts[0]), int(parts[1])


def _cmd_profile(args) -> int:
    values = load_config(args.config, args.set)
    out_dir = _output_dir(values)
    _echo_config(values, out_dir)
    input_size = _parse_input_size(args.input_size)
    report = profiler.profile(_model_config(values), input_size)
    if args.latency:
        model = build_dma_net(_model_config(values), seed=values["train.seed"])
        report.latency = profiler.benchmark_latency(
            model, input_size, warmup=args.warmup, iters=args.iters)
    text = report.text()
    print(text)
    (out_dir / "profile.txt").write_text(text + "\n")
    with (out_dir / "profile.kv").open("w") as handle:
        for key, value in report.as_dict().items():
            handle.write(f"{key} = {value}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmanet",
        description="Train, evaluate, profile, and run the segmentation network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint_required=False):
        p.add_argument("--config", required=True, help="path to a config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry")
        p.add_argument("--checkpoint", required=checkpoint_required,
                       help="weight archive or checkpoint to load")

    train_p = sub.add_parser("train", help="run the training loop")
    common(train_p)
    train_p.add_argument("--lambda-sweep", metavar="V1,V2,...",
                         help="train once per auxiliary-loss weight")
    train_p.set_defaults(handler=_cmd_train)

    eval_p = sub.add_parser("eval", help="evaluate a trained model")
    common(eval_p, checkpoint_required=True)
    eval_p.set_defaults(handler=_cmd_eval)

    profile_p = sub.add_parser("profile", help="report params, flops, latency")
    common(profile_p)
    profile_p.add_argument("--input-size", default="1024x2048", metavar="HxW")
    profile_p.add_argument("--latency", action="store_true",
                           help="also benchmark wall-clock latency")
    profile_p.add_argument("--warmup", type=int, default=10)
    profile_p.add_argument("--iters", type=int, default=50)
    profile_p.set_defaults(handler=_cmd_profile)

    predict_p = sub.add_parser("predict", help="write predicted masks as PNGs")
    common(predict_p, checkpoint_required=True)
    predict_p.set_defaults(handler=_cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, DataError, ShapeError, WeightsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
