"""Dense float64 tensor helpers and counter-based deterministic random streams.

All numeric state in the library is little more than numpy float64 arrays;
this module pins the conventions (row-major, 64-bit) and owns the seeded
sampling machinery. Random streams are derived, not sequential: the noise
for instance i at iteration t comes from a stream id hashed out of (t, i),
so results do not depend on batch scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, ParameterError

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


# Philox construction bypasses the (urandom-backed) default SeedSequence:
# generator() is called per instance per step, so the syscall would dominate.
_NO_ENTROPY = np.random.SeedSequence(0)
_ZEROS4 = np.zeros(4, dtype=np.uint64)


@dataclass(frozen=True)
class RngState:
    """A (seed, stream) pair; identical pairs yield identical sample sequences."""

    seed: int
    stream: int = 0

    def derive(self, *ids: int) -> "RngState":
        """Child stream keyed by the given ids (order-sensitive, collision-resistant)."""
        stream = self.stream
        for i in ids:
            stream = _splitmix64((stream ^ _splitmix64(i & _MASK64)) + 0x1F123BB5)
        return RngState(self.seed, stream)

    def generator(self) -> np.random.Generator:
        bitgen = np.random.Philox(seed=_NO_ENTROPY)
        bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": _ZEROS4,
                      "key": np.array([self.seed & _MASK64, self.stream & _MASK64],
                                      dtype=np.uint64)},
            "buffer": _ZEROS4, "buffer_pos": 4, "has_uint32": 0, "uinteger": 0,
        }
        return np.random.Generator(bitgen)


def as_tensor(data) -> np.ndarray:
    """Coerce to a float64 ndarray (no copy when already one)."""
    return np.asarray(data, dtype=np.float64)


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def frobenius_norm_sq(a) -> float:
    """Sum of squared elements, any rank."""
    a = as_tensor(a)
    flat = a.ravel()
    return float(np.dot(flat, flat))


def gaussian_sample(rng: RngState, shape: Sequence[int], sigma: float) -> np.ndarray:
    """I.i.d. N(0, sigma^2) entries, deterministic given rng."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    return rng.generator().normal(0.0, sigma, size=tuple(shape))


_BINARY = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def elementwise(kind: str, a, b=None) -> np.ndarray:
    """Pointwise ops: add/sub/mul (equal shapes), scale (scalar b), relu, relu_mask.

    relu_mask is 1 where the input is strictly positive, else 0 (the ReLU
    subgradient convention used throughout the backward passes).
    """
    a = as_tensor(a)
    if kind in _BINARY:
        b = as_tensor(b)
        if a.shape != b.shape:
            raise DimensionError(f"elementwise {kind}: shapes {a.shape} and {b.shape} differ")
        return _BINARY[kind](a, b)
    if kind == "scale":
        return a * float(b)
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "relu_mask":
        return (a > 0.0).astype(np.float64)
    raise ParameterError(f"unknown elementwise op {kind!r}")
