"""Binary PPM (P6) and PGM (P5) readers and writers.

These are the on-disk interchange formats: P6 for RGB images, P5 for label
maps (gray value = class index). Only maxval 255 is accepted, round trips
are bit exact, and parse errors report the byte offset that failed.
"""

from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, FormatError

_WHITESPACE = b" \t\n\r\x0b\x0c"


def _parse_pnm_header(data: bytes, magic: bytes, path: str):
    """Parse 'magic width height maxval' and return (width, height, raster offset)."""
    if data[:2] != magic:
        raise FormatError(
            f"{path}: expected magic {magic.decode()} at byte offset 0, "
            f"found {data[:2]!r}"
        )
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data):
            byte = data[pos]
            if byte in _WHITESPACE:
                pos += 1
            elif byte == ord("#"):  # comment runs to end of line
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            else:
                break
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        token = data[start:pos]
        if not token or not token.isdigit():
            raise FormatError(f"{path}: bad header token at byte offset {start}")
        fields.append((int(token), start))
    (width, _), (height, _), (maxval, maxval_at) = fields
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: non-positive image size {width}x{height}")
    if maxval != 255:
        raise FormatError(
            f"{path}: maxval must be 255, got {maxval} at byte offset {maxval_at}"
        )
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise FormatError(
            f"{path}: expected whitespace after maxval at byte offset {pos}"
        )
    return width, height, pos + 1


def _load_raster(path, magic, channels):
    data = Path(path).read_bytes()
    width, height, offset = _parse_pnm_header(data, magic, str(path))
    need = width * height * channels
    raster = data[offset : offset + need]
    if len(raster) < need:
        raise FormatError(
            f"{path}: truncated raster at byte offset {offset + len(raster)}, "
            f"expected {need} bytes from byte offset {offset}"
        )
    arr = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width).copy()
    return arr.reshape(height, width, channels).copy()


def load_image(path) -> np.ndarray:
    """Read a binary PPM (P6) file into an (H, W, 3) uint8 array."""
    return _load_raster(path, b"P6", 3)


def load_label_map(path) -> np.ndarray:
    """Read a binary PGM (P5) file into an (H, W) uint8 array."""
    return _load_raster(path, b"P5", 1)


def _check_uint8(name, arr):
    if arr.dtype != np.uint8:
        raise DataError(f"{name} must be uint8, got {arr.dtype}")


def save_image(image: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM (P6), maxval 255."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"image must be (H, W, 3), got {image.shape}")
    _check_uint8("image", image)
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(image).tobytes())


def save_label_map(labels: np.ndarray, path) -> None:
    """Write an (H, W) uint8 array as binary PGM (P5), maxval 255."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DimensionError(f"label map must be (H, W), got {labels.shape}")
    _check_uint8("label map", labels)
    h, w = labels.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(labels).tobytes())
