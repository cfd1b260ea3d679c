"""Sample handling: augmentation, deterministic splits, synthetic scenes.

Augmentations are restricted to flips and 90-degree rotations so both the
RGB raster and the label raster transform by the same pure pixel
permutation, without interpolation.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, ParameterError
from .palette import Palette, decode_labels, default_palette
from .rng import XorShift64Star

AUGMENT_OPS = ("hflip", "vflip", "rot90", "rot180", "rot270")


def augment(image: np.ndarray, labels: np.ndarray, op: str):
    """Apply one geometric op to an (image, labels) pair.

    hflip maps (y, x) -> (y, W-1-x), vflip maps (y, x) -> (H-1-y, x), and
    rot90/rot180/rot270 rotate counterclockwise in 90-degree steps (rot90
    and rot270 swap width and height).
    """
    image = np.asarray(image)
    labels = np.asarray(labels)
    if image.shape[:2] != labels.shape[:2]:
        raise DataError(
            f"image dims {image.shape[:2]} != label dims {labels.shape[:2]}"
        )
    if op == "hflip":
        out = np.flip(image, axis=1), np.flip(labels, axis=1)
    elif op == "vflip":
        out = np.flip(image, axis=0), np.flip(labels, axis=0)
    elif op in ("rot90", "rot180", "rot270"):
        k = {"rot90": 1, "rot180": 2, "rot270": 3}[op]
        out = np.rot90(image, k), np.rot90(labels, k)
    else:
        raise ParameterError(f"unknown augmentation {op!r}, expected one of {AUGMENT_OPS}")
    return np.ascontiguousarray(out[0]), np.ascontiguousarray(out[1])


@dataclass
class DatasetSplit:
    train: list
    val: list
    ratio: float


def split_dataset(sample_ids, ratio: float, seed: int = 42) -> DatasetSplit:
    """Deterministic shuffled partition; first ceil(ratio*n) ids go to train."""
    ids = list(sample_ids)
    if not ids:
        raise DataError("cannot split an empty sample list")
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"split ratio must lie in (0, 1), got {ratio}")
    rng = XorShift64Star(seed)
    rng.shuffle(ids)
    # the tiny slack keeps ceil() immune to float noise in ratio*n
    n_train = math.ceil(ratio * len(ids) - 1e-9)
    return DatasetSplit(train=ids[:n_train], val=ids[n_train:], ratio=ratio)


def save_split(split: DatasetSplit, path) -> None:
    """Write 'train <id>' / 'val <id>' lines, UTF-8."""
    lines = [f"train {i}" for i in split.train] + [f"val {i}" for i in split.val]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_split(path) -> DatasetSplit:
    train, val = [], []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        parts = line.split(maxsplit=1)
        if len(parts) != 2 or parts[0] not in ("train", "val"):
            raise FormatError(f"{path}: line {lineno}: expected 'train <id>' or 'val <id>'")
        (train if parts[0] == "train" else val).append(parts[1])
    total = len(train) + len(val)
    if total == 0:
        raise DataError(f"{path}: split file lists no samples")
    return DatasetSplit(train=train, val=val, ratio=len(train) / total)


def _fill_rect(labels, y0, y1, x0, x1, cls):
    h, w = labels.shape
    labels[max(0, y0):min(h, y1), max(0, x0):min(w, x1)] = cls


def _fill_ellipse(labels, cy, cx, ry, rx, cls):
    h, w = labels.shape
    yy, xx = np.ogrid[:h, :w]
    mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    labels[mask] = cls


def generate_synthetic_scene(width: int, height: int, seed: int,
                             palette: Palette | None = None):
    """Draw a layered geometric street scene and its exact label map.

    Bands for sky, road, and sidewalk, then rectangles and ellipses for
    buildings, trees, poles, signs, fences, cars, pedestrians, bicyclists,
    and an occasional void patch, all painted in palette colors. The image
    is rendered from the label map, so encode_labels(image) reproduces the
    labels exactly. Deterministic per seed.
    """
    if palette is None:
        palette = default_palette()
    if width < 16 or height < 16:
        raise ParameterError(f"scene must be at least 16x16, got {width}x{height}")
    if len(palette) < 12:
        raise DataError("scene generation needs a palette with at least 12 classes")
    (sky, building, pole, road, sidewalk, tree,
     sign, fence, car, pedestrian, bicyclist, void) = range(12)
    rng = XorShift64Star(seed)
    lab = np.full((height, width), sky, dtype=np.uint8)

    horizon = int(height * rng.uniform(0.38, 0.58))
    side_h = max(3, round(height * 0.14))
    lab[horizon:, :] = road
    lab[horizon:horizon + side_h, :] = sidewalk

    for _ in range(1 + rng.randrange(3)):
        bw = max(4, round(width * rng.uniform(0.18, 0.32)))
        bh = max(4, round(horizon * rng.uniform(0.4, 0.85)))
        x0 = rng.randrange(max(1, width - bw))
        _fill_rect(lab, horizon - bh, horizon, x0, x0 + bw, building)

    if rng.random() < 0.85:
        ry = max(3, round(height * rng.uniform(0.08, 0.15)))
        rx = max(3, round(width * rng.uniform(0.08, 0.15)))
        cy = ry + rng.randrange(max(1, horizon - 2 * ry))
        cx = rx + rng.randrange(max(1, width - 2 * rx))
        _fill_ellipse(lab, cy, cx, ry, rx, tree)

    if rng.random() < 0.75:
        fw = max(4, round(width * rng.uniform(0.3, 0.55)))
        fh = max(2, round(height * 0.07))
        x0 = rng.randrange(max(1, width - fw))
        _fill_rect(lab, horizon, horizon + fh, x0, x0 + fw, fence)

    if rng.random() < 0.85:
        pw = max(2, round(width * 0.06))
        ph = max(5, round(height * rng.uniform(0.3, 0.45)))
        x0 = rng.randrange(max(1, width - pw))
        base = horizon + side_h
        _fill_rect(lab, base - ph, base, x0, x0 + pw, pole)
        if rng.random() < 0.8:
            sw = max(3, round(width * 0.11))
            sh = max(3, round(height * 0.09))
            cx = x0 + pw // 2
            _fill_rect(lab, base - ph, base - ph + sh, cx - sw // 2,
                       cx - sw // 2 + sw, sign)

    road_top = horizon + side_h
    for _ in range(1 + rng.randrange(2)):
        if rng.random() < 0.9 and road_top < height - 4:
            cw = max(5, round(width * rng.uniform(0.18, 0.28)))
            ch = max(4, round(height * rng.uniform(0.10, 0.16)))
            y0 = road_top + rng.randrange(max(1, height - road_top - ch))
            x0 = rng.randrange(max(1, width - cw))
            _fill_rect(lab, y0, y0 + ch, x0, x0 + cw, car)

    if rng.random() < 0.8:
        pw = max(3, round(width * 0.07))
        ph = max(5, round(height * 0.18))
        x0 = rng.randrange(max(1, width - pw))
        base = horizon + side_h
        _fill_rect(lab, base - ph, base, x0, x0 + pw, pedestrian)

    if rng.random() < 0.75 and road_top < height - 4:
        bw = max(4, round(width * 0.10))
        bh = max(4, round(height * 0.12))
        y0 = road_top + rng.randrange(max(1, height - road_top - bh))
        x0 = rng.randrange(max(1, width - bw))
        _fill_rect(lab, y0, y0 + bh, x0, x0 + bw, bicyclist)

    if rng.random() < 0.6:
        vw = max(3, round(width * rng.uniform(0.08, 0.14)))
        vh = max(3, round(height * rng.uniform(0.08, 0.14)))
        y0 = rng.randrange(max(1, height - vh))
        x0 = rng.randrange(max(1, width - vw))
        _fill_rect(lab, y0, y0 + vh, x0, x0 + vw, void)

    return decode_labels(lab, palette), lab
