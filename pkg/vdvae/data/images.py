"""Image export: binary PPM (P6), sample grids and optional PNG."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..errors import DatasetError, ShapeError

GUTTER = 2


def _as_rgb(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ShapeError(f"images must be uint8, got {image.dtype}")
    if image.ndim == 3 and image.shape[2] == 1:
        image = np.repeat(image, 3, axis=2)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) image, got {image.shape}")
    return image


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 image as "P6\\n{W} {H}\\n255\\n" + RGB bytes."""
    image = _as_rgb(image)
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image).tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DatasetError(f"{path}: truncated PPM header")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace byte before the raster
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != b"P6" or maxval != 255:
        raise DatasetError(f"{path}: only 8-bit P6 is supported")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h * 3, offset=pos)
    return data.reshape(h, w, 3).copy()


def tile_grid(images: np.ndarray, columns: int | None = None, gutter: int = GUTTER) -> np.ndarray:
    """Tile (n, H, W, C) images on a black canvas with `gutter`-pixel gaps."""
    images = np.asarray(images)
    if images.ndim != 4:
        raise ShapeError(f"expected (n, H, W, C) images, got {images.shape}")
    n, h, w, c = images.shape
    columns = columns or math.ceil(math.sqrt(n))
    rows = math.ceil(n / columns)
    canvas = np.zeros((rows * h + (rows - 1) * gutter, columns * w + (columns - 1) * gutter, c), dtype=images.dtype)
    for i in range(n):
        r, col = divmod(i, columns)
        top, left = r * (h + gutter), col * (w + gutter)
        canvas[top:top + h, left:left + w] = images[i]
    return canvas


def write_ppm_grid(path: str | Path, images: np.ndarray, columns: int | None = None) -> np.ndarray:
    grid = tile_grid(images, columns)
    write_ppm(path, grid)
    return grid


def write_png_grid(path: str | Path, images: np.ndarray, columns: int | None = None) -> np.ndarray:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    grid = _as_rgb(tile_grid(images, columns))
    plt.imsave(str(path), grid)
    return grid


def chw_to_hwc(images: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(images).transpose(0, 2, 3, 1))
