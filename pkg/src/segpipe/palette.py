"""Class palette: the bijection class index <-> name <-> RGB color.

The default palette has 12 urban scene classes with fixed colors, so a
palette-pure rendering of a label map can be decoded back to the exact
labels. Palettes round-trip through a small CSV format.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, FormatError

PALETTE_CSV_HEADER = ["class_index", "name", "r", "g", "b"]


@dataclass(frozen=True)
class PaletteEntry:
    index: int
    name: str
    rgb: tuple[int, int, int]


class Palette:
    """Ordered class entries; indices must be exactly 0..C-1, colors distinct."""

    def __init__(self, entries):
        entries = sorted(entries, key=lambda e: e.index)
        indices = [e.index for e in entries]
        if indices != list(range(len(entries))):
            raise DataError(f"palette indices must be exactly 0..C-1, got {indices}")
        colors = set()
        for e in entries:
            if len(e.rgb) != 3 or any(not 0 <= v <= 255 for v in e.rgb):
                raise DataError(f"palette color out of byte range: {e.rgb}")
            if tuple(e.rgb) in colors:
                raise DataError(f"palette colors must be pairwise distinct: {e.rgb}")
            colors.add(tuple(e.rgb))
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, Palette) and self.entries == other.entries

    @property
    def names(self) -> list:
        return [e.name for e in self.entries]

    def color_array(self) -> np.ndarray:
        """(C, 3) uint8 array indexed by class index."""
        return np.array([e.rgb for e in self.entries], dtype=np.uint8)


# 12 urban classes with fixed, documented colors. Index 11 ("void") covers
# anything that fits no other class.
_DEFAULT_CLASSES = [
    (0, "sky", (128, 128, 128)),
    (1, "building", (128, 0, 0)),
    (2, "pole", (192, 192, 128)),
    (3, "road", (128, 64, 128)),
    (4, "sidewalk", (60, 40, 222)),
    (5, "tree", (128, 128, 0)),
    (6, "sign", (192, 128, 128)),
    (7, "fence", (64, 64, 128)),
    (8, "car", (64, 0, 128)),
    (9, "pedestrian", (64, 64, 0)),
    (10, "bicyclist", (0, 128, 192)),
    (11, "void", (0, 0, 0)),
]


def default_palette() -> Palette:
    """The built-in 12-class palette."""
    return Palette([PaletteEntry(i, n, c) for i, n, c in _DEFAULT_CLASSES])


def save_palette(palette: Palette, path) -> None:
    """Write a palette as UTF-8 CSV with header class_index,name,r,g,b."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(PALETTE_CSV_HEADER)
        for e in palette.entries:
            writer.writerow([e.index, e.name, *e.rgb])


def load_palette(path) -> Palette:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty palette file") from None
        if header != PALETTE_CSV_HEADER:
            raise FormatError(
                f"{path}: expected header {','.join(PALETTE_CSV_HEADER)}, "
                f"got {','.join(header)}"
            )
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise FormatError(f"{path}: line {lineno}: expected 5 fields")
            try:
                entries.append(PaletteEntry(int(row[0]), row[1],
                                            (int(row[2]), int(row[3]), int(row[4]))))
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from None
    return Palette(entries)


def encode_labels(image: np.ndarray, palette: Palette) -> np.ndarray:
    """Map every pixel to the class of its nearest palette color.

    Exact palette colors map to their own class; any other color maps to
    the class at minimum squared RGB distance, lowest index on ties.
    Distances are computed in exact integer arithmetic.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"image must be (H, W, 3), got {image.shape}")
    h, w = image.shape[:2]
    flat = image.reshape(-1, 3).astype(np.int64)
    best_d = np.full(flat.shape[0], np.iinfo(np.int64).max, dtype=np.int64)
    best_c = np.zeros(flat.shape[0], dtype=np.uint8)
    for entry in palette.entries:
        d = ((flat - np.array(entry.rgb, dtype=np.int64)) ** 2).sum(axis=1)
        closer = d < best_d  # strict: earlier (lower) index wins ties
        best_d[closer] = d[closer]
        best_c[closer] = entry.index
    return best_c.reshape(h, w)


def decode_labels(labels: np.ndarray, palette: Palette) -> np.ndarray:
    """Pure palette lookup: label map -> RGB image."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DimensionError(f"label map must be (H, W), got {labels.shape}")
    if labels.size and int(labels.max()) >= len(palette):
        raise DataError(
            f"label {int(labels.max())} out of range for a "
            f"{len(palette)}-class palette"
        )
    return palette.color_array()[labels]
