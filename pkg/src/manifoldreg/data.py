"""Dataset ingestion (MNIST IDX), splits for semi-supervised protocols, and
synthetic corpora for fast tests.

IDX is big-endian: images carry magic 0x00000803 and dims (N, rows, cols),
labels carry magic 0x00000801 and dim (N); pixel bytes map to [0, 1] by /255.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ConsistencyError, ContractError, FormatError, LengthError, ParameterError
from .tensor import RngState

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801

_SPLIT_STREAM = 11
_HOLDOUT_STREAM = 12
_BLOB_STREAM = 13
_DIGIT_STREAM = 14


@dataclass
class Dataset:
    """Feature tensor (N, ...) with values in [0, 1]; labels absent => unlabeled."""

    features: np.ndarray
    labels: Optional[np.ndarray]
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.size:
            lo, hi = self.features.min(), self.features.max()
            if not np.isfinite(lo) or not np.isfinite(hi) or lo < 0.0 or hi > 1.0:
                raise ParameterError(f"features must lie in [0, 1], got range [{lo}, {hi}]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ParameterError("labels must be one class index per instance")
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
                raise ParameterError(f"labels must lie in [0, {self.class_count})")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def subset(self, idx: np.ndarray, drop_labels: bool = False) -> "Dataset":
        labels = None if (drop_labels or self.labels is None) else self.labels[idx]
        return Dataset(self.features[idx], labels, self.class_count)


@dataclass(frozen=True)
class SplitSpec:
    labeled_count: int
    seed: int
    class_balanced: bool = True


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise LengthError(f"{what}: expected {n} bytes, file truncated")
    return data


def load_idx(images_path, labels_path) -> Dataset:
    with open(images_path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, "image header"))
        if magic != _IMAGE_MAGIC:
            raise FormatError(f"image file magic 0x{magic:08x}, expected 0x{_IMAGE_MAGIC:08x}")
        raw = _read_exact(f, n * rows * cols, "image data")
        if f.read(1):
            raise LengthError("image file has trailing bytes")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols)
    with open(labels_path, "rb") as f:
        magic, n_labels = struct.unpack(">II", _read_exact(f, 8, "label header"))
        if magic != _LABEL_MAGIC:
            raise FormatError(f"label file magic 0x{magic:08x}, expected 0x{_LABEL_MAGIC:08x}")
        if n_labels != n:
            raise ConsistencyError(f"{n} images but {n_labels} labels")
        labels = np.frombuffer(_read_exact(f, n_labels, "label data"), dtype=np.uint8)
        if f.read(1):
            raise LengthError("label file has trailing bytes")
    class_count = int(labels.max()) + 1 if n else 10
    return Dataset(pixels.astype(np.float64) / 255.0, labels.astype(np.int64), class_count)


def save_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Inverse of load_idx; bit-exact round trip for /255-normalized data."""
    if dataset.features.ndim != 3:
        raise ParameterError("IDX export needs (N, rows, cols) features")
    if dataset.labels is None:
        raise ContractError("IDX export needs labels")
    n, rows, cols = dataset.features.shape
    pixels = np.rint(dataset.features * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", _IMAGE_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", _LABEL_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def split_semi(train: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Sample a labeled subset (class-balanced when asked); strip the rest's labels."""
    if train.labels is None:
        raise ContractError("semi-supervised split needs a labeled training set")
    if spec.labeled_count > train.n:
        raise ParameterError(f"labeled_count {spec.labeled_count} exceeds dataset size {train.n}")
    gen = RngState(spec.seed, _SPLIT_STREAM).generator()
    if spec.class_balanced:
        k = train.class_count
        if spec.labeled_count % k:
            raise ParameterError(f"labeled_count {spec.labeled_count} not divisible by {k} classes")
        per_class = spec.labeled_count // k
        chosen = []
        for c in range(k):
            pool = np.flatnonzero(train.labels == c)
            if len(pool) < per_class:
                raise ParameterError(f"class {c} has only {len(pool)} instances, need {per_class}")
            chosen.append(gen.choice(pool, size=per_class, replace=False))
        labeled_idx = np.sort(np.concatenate(chosen))
    else:
        labeled_idx = np.sort(gen.choice(train.n, size=spec.labeled_count, replace=False))
    mask = np.zeros(train.n, dtype=bool)
    mask[labeled_idx] = True
    return train.subset(labeled_idx), train.subset(np.flatnonzero(~mask), drop_labels=True)


def holdout_split(train: Dataset, validation_count: int, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic disjoint (train, validation) partition."""
    if not 0 <= validation_count < train.n:
        raise ParameterError(f"validation_count {validation_count} out of range for N={train.n}")
    perm = RngState(seed, _HOLDOUT_STREAM).generator().permutation(train.n)
    valid_idx = np.sort(perm[:validation_count])
    train_idx = np.sort(perm[validation_count:])
    return train.subset(train_idx), train.subset(valid_idx)


def synth_blobs(k: int, d: int, per_class: int, separation: float, noise: float,
                seed: int) -> Dataset:
    """k Gaussian clusters with pairwise center distance `separation`,
    cluster std `noise`, rescaled into [0, 1]."""
    if min(k, d, per_class) <= 0 or separation <= 0 or noise <= 0:
        raise ParameterError("blob parameters must be positive")
    gen = RngState(seed, _BLOB_STREAM).generator()
    if k <= d:
        dirs = np.eye(k, d)
    else:
        dirs = gen.normal(size=(k, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dists = np.linalg.norm(dirs[:, None] - dirs[None, :], axis=-1)
        dirs *= 1.0 / max(dists[np.triu_indices(k, 1)].min(), 1e-9)
    centers = dirs * (separation / np.sqrt(2.0))
    labels = np.repeat(np.arange(k), per_class)
    points = centers[labels] + gen.normal(0.0, noise, size=(k * per_class, d))
    lo, hi = points.min(), points.max()
    points = (points - lo) / max(hi - lo, 1e-12)
    return Dataset(points, labels, k)


# --- procedural handwritten-digit-like corpus ------------------------------
#
# Ten 7x5 glyphs deformed by smooth random affine maps, blur and pixel noise:
# each class is a low-dimensional smooth manifold plus isotropic noise, which
# is the regime the regularizers target. Serves as a desk-scale MNIST
# stand-in that flows through the same IDX files.

_GLYPHS = [
    "01110 10001 10011 10101 11001 10001 01110",
    "00100 01100 00100 00100 00100 00100 01110",
    "01110 10001 00001 00010 00100 01000 11111",
    "11111 00010 00100 00010 00001 10001 01110",
    "00010 00110 01010 10010 11111 00010 00010",
    "11111 10000 11110 00001 00001 10001 01110",
    "00110 01000 10000 11110 10001 10001 01110",
    "11111 00001 00010 00100 01000 01000 01000",
    "01110 10001 10001 01110 10001 10001 01110",
    "01110 10001 10001 01111 00001 00010 01100",
]


def _glyph_canvas(digit: int, side: int) -> np.ndarray:
    rows = _GLYPHS[digit].split()
    bitmap = np.array([[float(ch) for ch in row] for row in rows])
    scale = max(1, (side - 1) // bitmap.shape[0])
    art = np.kron(bitmap, np.ones((scale, scale)))
    if art.shape[0] > side or art.shape[1] > side:
        raise ParameterError(f"side {side} too small for the glyph bitmaps")
    canvas = np.zeros((side, side))
    r0 = (side - art.shape[0]) // 2
    c0 = (side - art.shape[1]) // 2
    canvas[r0:r0 + art.shape[0], c0:c0 + art.shape[1]] = art
    return canvas


def _render_digit(digit: int, gen: np.random.Generator, side: int,
                  deform: float, pixel_noise: float) -> np.ndarray:
    canvas = _glyph_canvas(digit, side)
    theta = gen.uniform(-0.35, 0.35) * deform
    log_sx, log_sy = gen.uniform(-0.22, 0.22, size=2) * deform
    shear = gen.uniform(-0.25, 0.25) * deform
    shift = gen.uniform(-1.0, 1.0, size=2) * deform * side / 8.0
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    mat = rot @ np.array([[1.0, shear], [0.0, 1.0]]) @ np.diag(np.exp([log_sx, log_sy]))
    center = (side - 1) / 2.0
    # affine_transform maps output coords through `matrix` into the input
    inv = np.linalg.inv(mat)
    offset = center - inv @ (np.array([center, center]) + shift)
    img = ndimage.affine_transform(canvas, inv, offset=offset, order=1, mode="constant")
    img = ndimage.gaussian_filter(img, sigma=gen.uniform(0.6, 1.1) * side / 28.0)
    peak = img.max()
    if peak > 0:
        img *= gen.uniform(0.75, 1.0) / peak
    img += gen.normal(0.0, pixel_noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synth_digits(count: int, seed: int, side: int = 28, deform: float = 1.0,
                 pixel_noise: float = 0.2) -> Dataset:
    """Deterministic digit-like corpus; class of instance i is i mod 10."""
    if count <= 0:
        raise ParameterError("count must be positive")
    base = RngState(seed, _DIGIT_STREAM)
    features = np.empty((count, side, side))
    labels = np.arange(count, dtype=np.int64) % 10
    for i in range(count):
        gen = base.derive(i).generator()
        features[i] = _render_digit(int(labels[i]), gen, side, deform, pixel_noise)
    return Dataset(features, labels, 10)
