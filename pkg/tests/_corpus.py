"""Desk-scale digit corpora for the acceptance protocol.

Real MNIST IDX files are used when $MREG_DATA_DIR points at them; otherwise a
deterministic procedurally-generated handwritten-digit-like corpus stands in.
Either way the subsets are written as IDX files so every run flows through the
production loader.
"""
import os
from pathlib import Path

import numpy as np

from manifoldreg import load_idx, save_idx, synth_digits
from manifoldreg.config import DATA_DIR_ENV

_MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")

# difficulty chosen so a 128x128x128 MLP overfits 5000 examples (~16% test
# error, ~0% train error), leaving the regularizers room to act while keeping
# strength sensitivity visible between weak and chosen settings
DEFORM = 1.4
PIXEL_NOISE = 0.32


def _real_mnist_dir():
    root = os.environ.get(DATA_DIR_ENV, "")
    if root and all((Path(root) / f).exists() for f in _MNIST_FILES):
        return Path(root)
    return None


def _source(total: int, seed: int):
    real = _real_mnist_dir()
    if real is not None:
        ds = load_idx(real / _MNIST_FILES[0], real / _MNIST_FILES[1])
        if ds.n >= total:
            return ds.subset(np.arange(total))
    return synth_digits(total, seed=seed, deform=DEFORM, pixel_noise=PIXEL_NOISE)


def write_corpus(out_dir: Path, train_count: int, test_count: int, seed: int) -> Path:
    """Write train/test IDX pairs under out_dir; cached by directory existence."""
    out_dir = Path(out_dir)
    marker = out_dir / "ready"
    if not marker.exists():
        out_dir.mkdir(parents=True, exist_ok=True)
        ds = _source(train_count + test_count, seed)
        save_idx(ds.subset(np.arange(train_count)),
                 out_dir / "train-img", out_dir / "train-lab")
        save_idx(ds.subset(np.arange(train_count, train_count + test_count)),
                 out_dir / "test-img", out_dir / "test-lab")
        marker.write_text("ok")
    return out_dir
