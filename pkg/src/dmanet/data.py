"""Dataset loading, augmentation, batching, and a synthetic toy dataset.

Images are carried as ``(H, W, 3)`` uint8 arrays and labels as ``(H, W)``
uint8 arrays whose value 255 marks ignored pixels, until the batching step
converts them to normalized float32 ``(N, 3, H, W)`` tensors and int64
``(N, H, W)`` tensors.

Training batches are a pure function of ``(seed, iteration)``: the epoch's
sample permutation and the iteration's augmentation draws are derived from
dedicated seed streams, so a run resumed from any iteration reproduces the
original batch sequence exactly.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import IGNORE_ID, AugConfig
from .errors import ConfigError, DataError

NORM_MEAN = (0.485, 0.456, 0.406)
NORM_STD = (0.229, 0.224, 0.225)

# Seed streams keeping shuffling, augmentation, and toy-data synthesis
# statistically independent while remaining reproducible per iteration.
_SHUFFLE_STREAM = 101
_AUG_STREAM = 202
_TOY_STREAM = 303

CITYSCAPES_CLASSES = (
    "road", "sidewalk", "building", "wall", "fence", "pole",
    "traffic light", "traffic sign", "vegetation", "terrain", "sky",
    "person", "rider", "car", "truck", "bus", "train", "motorcycle",
    "bicycle",
)

# Raw annotation id -> training id for the 19 evaluated street-scene
# classes; everything else collapses to the ignore id.
_CITYSCAPES_RAW_TO_TRAIN = {
    7: 0, 8: 1, 11: 2, 12: 3, 13: 4, 17: 5, 19: 6, 20: 7, 21: 8, 22: 9,
    23: 10, 24: 11, 25: 12, 26: 13, 27: 14, 28: 15, 31: 16, 32: 17, 33: 18,
}

CITYSCAPES_PALETTE = np.array([
    (128, 64, 128), (244, 35, 232), (70, 70, 70), (102, 102, 156),
    (190, 153, 153), (153, 153, 153), (250, 170, 30), (220, 220, 0),
    (107, 142, 35), (152, 251, 152), (70, 130, 180), (220, 20, 60),
    (255, 0, 0), (0, 0, 142), (0, 0, 70), (0, 60, 100), (0, 80, 100),
    (0, 0, 230), (119, 11, 32),
], dtype=np.uint8)

CAMVID_CLASSES = (
    "sky", "building", "pole", "road", "pavement", "tree", "sign symbol",
    "fence", "car", "pedestrian", "bicyclist",
)

CAMVID_PALETTE = np.array([
    (128, 128, 128), (128, 0, 0), (192, 192, 128), (128, 64, 128),
    (60, 40, 222), (128, 128, 0), (192, 128, 128), (64, 64, 128),
    (64, 0, 128), (64, 64, 0), (0, 128, 192),
], dtype=np.uint8)


@dataclass(frozen=True)
class Sample:
    name: str
    image: np.ndarray  # (H, W, 3) uint8
    label: np.ndarray  # (H, W) uint8, 255 = ignore


def cityscapes_train_id_table() -> np.ndarray:
    table = np.full(256, IGNORE_ID, dtype=np.uint8)
    for raw, train in _CITYSCAPES_RAW_TO_TRAIN.items():
        table[raw] = train
    return table


def make_palette(num_classes: int) -> np.ndarray:
    """Well-separated colors for arbitrary class counts: hues advance by the
    golden-ratio angle so neighbours never look alike."""
    colors = []
    for i in range(num_classes):
        hue = (i * 0.61803398875) % 1.0
        rgb = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
        colors.append(tuple(round(255 * c) for c in rgb))
    return np.array(colors, dtype=np.uint8)


def palette_for(layout: str, num_classes: int) -> np.ndarray:
    if layout == "cityscapes" and num_classes == len(CITYSCAPES_CLASSES):
        return CITYSCAPES_PALETTE
    if layout == "camvid" and num_classes == len(CAMVID_CLASSES):
        return CAMVID_PALETTE
    return make_palette(num_classes)


def colorize_labels(label: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """(H, W) class ids -> (H, W, 3) uint8; ignored pixels render black."""
    out = np.zeros(label.shape + (3,), dtype=np.uint8)
    valid = label != IGNORE_ID
    out[valid] = palette[label[valid].astype(np.int64)]
    return out


# ---------------------------------------------------------------------------
# resizing (numpy, matching the center-aligned sampling used by the network's
# bilinear upsampling: source = (i + 0.5) * in / out - 0.5, clamped)
# ---------------------------------------------------------------------------

def _source_coords(out_size: int, in_size: int):
    src = np.maximum((np.arange(out_size) + 0.5) * in_size / out_size - 0.5, 0.0)
    lo = np.minimum(src.astype(np.int64), in_size - 1)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize an (H, W, 3) uint8 image with center-aligned bilinear sampling."""
    in_h, in_w = image.shape[:2]
    out_h, out_w = size
    if (in_h, in_w) == (out_h, out_w):
        return image.copy()
    y0, y1, wy = _source_coords(out_h, in_h)
    x0, x1, wx = _source_coords(out_w, in_w)
    grid = image.astype(np.float32)
    top = grid[y0][:, x0] * (1 - wx)[None, :, None] + grid[y0][:, x1] * wx[None, :, None]
    bottom = grid[y1][:, x0] * (1 - wx)[None, :, None] + grid[y1][:, x1] * wx[None, :, None]
    blended = top * (1 - wy)[:, None, None] + bottom * wy[:, None, None]
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def resize_nearest(label: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize an (H, W) label map by center-aligned nearest sampling, which
    never invents class ids."""
    in_h, in_w = label.shape
    out_h, out_w = size
    if (in_h, in_w) == (out_h, out_w):
        return label.copy()
    ys = np.clip(np.floor((np.arange(out_h) + 0.5) * in_h / out_h).astype(np.int64),
                 0, in_h - 1)
    xs = np.clip(np.floor((np.arange(out_w) + 0.5) * in_w / out_w).astype(np.int64),
                 0, in_w - 1)
    return label[ys][:, xs]


# ---------------------------------------------------------------------------
# augmentation and normalization
# ---------------------------------------------------------------------------

_PAD_COLOR = tuple(round(255 * m) for m in NORM_MEAN)


def _pad_to_at_least(image, label, min_h, min_w):
    pad_h = max(0, min_h - image.shape[0])
    pad_w = max(0, min_w - image.shape[1])
    if pad_h == 0 and pad_w == 0:
        return image, label
    image = np.pad(image, ((0, pad_h), (0, pad_w), (0, 0)), mode="constant",
                   constant_values=0)
    for c, value in enumerate(_PAD_COLOR):
        if pad_h:
            image[-pad_h:, :, c] = value
        if pad_w:
            image[:, -pad_w:, c] = value
    label = np.pad(label, ((0, pad_h), (0, pad_w)), mode="constant",
                   constant_values=IGNORE_ID)
    return image, label


def augment(sample: Sample, aug: AugConfig, rng: np.random.Generator):
    """Random scale, horizontal flip, and crop; returns ``(image, label)``
    at exactly ``aug.crop``. Regions exposed by padding take the
    normalization mean color and the ignore label."""
    image, label = sample.image, sample.label
    lo, hi = aug.scale_range
    scale = rng.uniform(lo, hi)
    new_size = (max(1, round(image.shape[0] * scale)),
                max(1, round(image.shape[1] * scale)))
    image = resize_bilinear(image, new_size)
    label = resize_nearest(label, new_size)
    if rng.uniform() < aug.hflip_prob:
        image = image[:, ::-1]
        label = label[:, ::-1]
    crop_h, crop_w = aug.crop
    image, label = _pad_to_at_least(image, label, crop_h, crop_w)
    y0 = int(rng.integers(0, image.shape[0] - crop_h + 1))
    x0 = int(rng.integers(0, image.shape[1] - crop_w + 1))
    return (np.ascontiguousarray(image[y0:y0 + crop_h, x0:x0 + crop_w]),
            np.ascontiguousarray(label[y0:y0 + crop_h, x0:x0 + crop_w]))


def normalize_image(image: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> channel-first float32, standardized per channel."""
    scaled = image.astype(np.float32) / 255.0
    mean = np.asarray(NORM_MEAN, dtype=np.float32)
    std = np.asarray(NORM_STD, dtype=np.float32)
    return ((scaled - mean) / std).transpose(2, 0, 1)


def pad_to_multiple(image: np.ndarray, multiple: int = 32):
    """Replicate-pad an (H, W, 3) image on the bottom/right so both spatial
    dims divide ``multiple``; returns the padded image and the original size
    for cropping predictions back."""
    h, w = image.shape[:2]
    pad_h = (-h) % multiple
    pad_w = (-w) % multiple
    if pad_h or pad_w:
        image = np.pad(image, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    return image, (h, w)


# ---------------------------------------------------------------------------
# datasets on disk
# ---------------------------------------------------------------------------

def _read_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _read_label(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise DataError(f"label {path} is not a single-channel image")
    return arr.astype(np.uint8)


def _pair_by_stem(images: dict[str, Path], labels: dict[str, Path], what: str):
    unmatched_images = sorted(set(images) - set(labels))
    unmatched_labels = sorted(set(labels) - set(images))
    if unmatched_images or unmatched_labels:
        problems = [f"image without label: {images[s]}" for s in unmatched_images]
        problems += [f"label without image: {labels[s]}" for s in unmatched_labels]
        raise DataError(f"unpaired files in {what}:\n  " + "\n  ".join(problems))
    if not images:
        raise DataError(f"no samples found in {what}")
    return [(stem, images[stem], labels[stem]) for stem in sorted(images)]


def load_dataset(root, split: str, layout: str) -> list[Sample]:
    """Read one split of an on-disk dataset.

    ``layout`` selects the directory convention:

    * ``cityscapes``: ``leftImg8bit/<split>/<city>/*_leftImg8bit.png`` with
      ``gtFine/<split>/<city>/*_gtFine_labelIds.png``; raw annotation ids are
      remapped to the 19 training classes.
    * ``camvid``: ``<split>/*.png`` with ``<split>annot/*.png``; annotation
      ids at or above the 11 classes become the ignore id.
    * ``generic``: ``<split>/images/*.png`` with ``<split>/labels/*.png``
      matched by filename; label values are taken as-is.
    """
    root = Path(root)
    if layout == "cityscapes":
        image_root = root / "leftImg8bit" / split
        label_root = root / "gtFine" / split
        images = {p.name.replace("_leftImg8bit.png", ""): p
                  for p in sorted(image_root.rglob("*_leftImg8bit.png"))}
        labels = {p.name.replace("_gtFine_labelIds.png", ""): p
                  for p in sorted(label_root.rglob("*_gtFine_labelIds.png"))}
        table = cityscapes_train_id_table()
        remap = lambda raw: table[raw]
    elif layout == "camvid":
        images = {p.stem: p for p in sorted((root / split).glob("*.png"))}
        labels = {p.stem: p for p in sorted((root / f"{split}annot").glob("*.png"))}
        num = len(CAMVID_CLASSES)
        remap = lambda raw: np.where(raw < num, raw, np.uint8(IGNORE_ID))
    elif layout == "generic":
        images = {p.stem: p for p in sorted((root / split / "images").glob("*.png"))}
        labels = {p.stem: p for p in sorted((root / split / "labels").glob("*.png"))}
        remap = lambda raw: raw
    else:
        raise ConfigError(f"unknown dataset layout {layout!r}")
    samples = []
    for stem, image_path, label_path in _pair_by_stem(images, labels,
                                                      f"{layout}:{split} under {root}"):
        image = _read_image(image_path)
        label = remap(_read_label(label_path))
        if image.shape[:2] != label.shape:
            raise DataError(
                f"{image_path} is {image.shape[:2]} but its label is {label.shape}"
            )
        samples.append(Sample(stem, image, label.astype(np.uint8)))
    return samples


# ---------------------------------------------------------------------------
# synthetic toy dataset
# ---------------------------------------------------------------------------

def make_synthetic_toy(num_images: int = 8, size: tuple[int, int] = (64, 128),
                       num_classes: int = 4, seed: int = 0) -> list[Sample]:
    """Small images of solid rectangles over a background.

    Rectangle corners snap to an 8-pixel grid so region boundaries coincide
    with the principal head's 1/8-resolution grid, every class is guaranteed
    to appear, and each class keeps a fixed distinctive color with mild
    pixel noise — an easily separable dataset a correct network can overfit
    quickly.
    """
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    height, width = size
    if height % 32 or width % 32:
        raise ConfigError(f"toy image dims must be divisible by 32, got {size}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _TOY_STREAM]))
    palette = make_palette(num_classes)
    samples = []
    for index in range(num_images):
        label = np.zeros((height, width), dtype=np.uint8)
        for j in range(3):
            cls = 1 + (index + j) % (num_classes - 1)
            rect_h = 8 * int(rng.integers(2, max(3, height // 16)))
            rect_w = 8 * int(rng.integers(2, max(3, width // 16)))
            y0 = 8 * int(rng.integers(0, (height - rect_h) // 8 + 1))
            x0 = 8 * int(rng.integers(0, (width - rect_w) // 8 + 1))
            label[y0:y0 + rect_h, x0:x0 + rect_w] = cls
        image = palette[label].astype(np.float32)
        image += rng.normal(0.0, 8.0, size=image.shape)
        image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
        samples.append(Sample(f"toy_{index:03d}", image, label))
    return samples


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

def training_batches(samples: list[Sample], aug: AugConfig, batch_size: int,
                     total_iters: int, seed: int, start_iter: int = 0):
    """Yield ``(iteration, images, labels)`` for the requested iteration
    range. Each epoch shuffles the samples with a permutation derived from
    the epoch index, and incomplete trailing batches are dropped; every
    batch depends only on ``(seed, iteration)``."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if len(samples) < batch_size:
        raise DataError(
            f"need at least {batch_size} samples for one batch, got {len(samples)}"
        )
    per_epoch = len(samples) // batch_size
    for iteration in range(start_iter, total_iters):
        epoch, slot = divmod(iteration, per_epoch)
        order = np.random.default_rng(
            np.random.SeedSequence([seed, _SHUFFLE_STREAM, epoch])
        ).permutation(len(samples))
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, _AUG_STREAM, iteration])
        )
        images, labels = [], []
        for sample_index in order[slot * batch_size:(slot + 1) * batch_size]:
            image, label = augment(samples[sample_index], aug, rng)
            images.append(normalize_image(image))
            labels.append(label.astype(np.int64))
        yield (iteration,
               torch.from_numpy(np.stack(images)),
               torch.from_numpy(np.stack(labels)))


def eval_batches(samples: list[Sample], batch_size: int):
    """Yield ``(names, images, labels)`` in dataset order without
    augmentation. A batch is flushed early when the next sample's size
    differs, and the final partial batch is kept."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    pending: list[Sample] = []

    def flush(batch):
        names = [s.name for s in batch]
        images = torch.from_numpy(np.stack([normalize_image(s.image) for s in batch]))
        labels = torch.from_numpy(np.stack([s.label.astype(np.int64) for s in batch]))
        return names, images, labels

    for sample in samples:
        if pending and sample.image.shape != pending[0].image.shape:
            yield flush(pending)
            pending = []
        pending.append(sample)
        if len(pending) == batch_size:
            yield flush(pending)
            pending = []
    if pending:
        yield flush(pending)
