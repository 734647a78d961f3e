"""First-layer filter visualization as binary PGM tile grids."""
from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError
from .nn import Conv2D, Dense, Params


def filters_as_images(params: Params, layer_index: int) -> np.ndarray:
    """Filters of a layer as an (F, h, w) stack.

    Dense rows are reshaped to the square image they read from; Conv2D shows
    each filter's first input channel.
    """
    if not 0 <= layer_index < len(params.spec.layers):
        raise ParameterError(f"layer index {layer_index} out of range")
    layer = params.spec.layers[layer_index]
    w = params.weights[layer_index]
    if isinstance(layer, Dense):
        side = math.isqrt(layer.in_dim)
        if side * side != layer.in_dim:
            raise ParameterError(f"Dense layer input {layer.in_dim} is not a square image")
        return w.reshape(layer.out_dim, side, side)
    if isinstance(layer, Conv2D):
        return w[:, 0, :, :]
    raise ParameterError(f"layer {layer_index} ({type(layer).__name__}) has no filters to export")


def filter_grid(filters: np.ndarray) -> np.ndarray:
    """Tile (F, h, w) filters into a near-square uint8 grid.

    Each tile is min-max normalized to [0, 255] independently (constant tiles
    become mid-gray 128); tiles are laid out row-major with 1-pixel black
    separators and black padding for unused cells.
    """
    f, h, w = filters.shape
    cols = math.ceil(math.sqrt(f))
    rows = math.ceil(f / cols)
    img = np.zeros((rows * h + rows - 1, cols * w + cols - 1), dtype=np.uint8)
    for i in range(f):
        r, c = divmod(i, cols)
        tile = filters[i]
        lo, hi = tile.min(), tile.max()
        if hi > lo:
            scaled = np.rint((tile - lo) / (hi - lo) * 255.0).astype(np.uint8)
        else:
            scaled = np.full((h, w), 128, dtype=np.uint8)
        img[r * (h + 1):r * (h + 1) + h, c * (w + 1):c * (w + 1) + w] = scaled
    return img


def to_pgm_bytes(img: np.ndarray) -> bytes:
    """Binary PGM (P5, maxval 255)."""
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.astype(np.uint8).tobytes()
