"""Built-in numerical oracles: finite-difference gradient checks, Monte-Carlo
validation of the stochastic penalties, and the random-direction projection
identity. Shared by the test suite and the `diag` CLI verb."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .loss import LossKind
from .nn import Dense, NetworkSpec, Params, Relu, forward, init_glorot
from .optimizer import objective_grad
from .regularizer import (RegConfig, RegKind, lamr_exact, limr_exact,
                          stochastic_penalty_mc)
from .tensor import RngState, frobenius_norm_sq


@dataclass
class DiagResult:
    name: str
    # (case label, measured relative error, tolerance) per sub-check
    checks: list[tuple[str, float, float]] = field(default_factory=list)

    def add(self, label: str, err: float, tol: float) -> None:
        self.checks.append((label, float(err), tol))

    @property
    def ok(self) -> bool:
        return all(err <= tol for _, err, tol in self.checks)

    @property
    def max_rel_err(self) -> float:
        return max(err for _, err, _ in self.checks)

    @property
    def tolerance(self) -> float:
        return min(tol for _, _, tol in self.checks)

    @property
    def lines(self) -> list[str]:
        return [f"{self.name}[{label}] rel err {err:.3e} (tol {tol:g})"
                for label, err, tol in self.checks]


def tiny_mlp(seed: int = 0, in_dim: int = 4, hidden: int = 5, out_dim: int = 3) -> Params:
    spec = NetworkSpec((in_dim,), (Dense(in_dim, hidden), Relu(), Dense(hidden, out_dim)))
    return init_glorot(spec, RngState(seed, 7))


def rel_err(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_param_grad(f, params: Params, h: float = 1e-5) -> Params:
    """Central finite differences of a scalar function of the parameters."""
    grads = params.copy()
    for store in ("weights", "biases"):
        for arr, out in zip(getattr(params, store), getattr(grads, store)):
            if arr is None:
                continue
            flat = arr.reshape(-1)
            gflat = out.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                up = f(params)
                flat[j] = orig - h
                down = f(params)
                flat[j] = orig
                gflat[j] = (up - down) / (2.0 * h)
    return grads


def max_grad_rel_err(analytic: Params, numeric: Params, floor: float = 1e-8) -> float:
    worst = 0.0
    for store in ("weights", "biases"):
        for a, b in zip(getattr(analytic, store), getattr(numeric, store)):
            if a is None:
                continue
            denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
            worst = max(worst, float((np.abs(a - b) / denom).max()))
    return worst


def gradcheck(seed: int = 0, h: float = 1e-5, tolerance: float = 1e-5) -> DiagResult:
    """FD check of the full objective gradient for no-reg, LAMR and LIMR
    stochastic penalties with fixed noise draws."""
    params = tiny_mlp(seed)
    gen = RngState(seed, 33).generator()
    x = gen.uniform(0.0, 1.0, size=(6, 4))
    y = gen.integers(0, 3, size=6)
    rng = RngState(seed).derive(1234)
    result = DiagResult("gradcheck")
    configs = {
        "none": RegConfig(),
        "lamr": RegConfig(kind=RegKind.LAMR, lam=0.3, sigma=0.4),
        "limr": RegConfig(kind=RegKind.LIMR, lam=0.5, sigma=0.4),
    }
    for name, reg in configs.items():
        _, _, analytic = objective_grad(params, x, y, None, LossKind.SQUARED_HINGE, reg, rng)
        numeric = fd_param_grad(
            lambda p: objective_grad(p, x, y, None, LossKind.SQUARED_HINGE, reg, rng)[0],
            params, h)
        result.add(name, max_grad_rel_err(analytic, numeric), tolerance)
    return result


def _safe_point(params: Params, rng: RngState, sigma: float, margin: float = 10.0) -> np.ndarray:
    """An input whose ReLU pre-activations all sit well clear of zero, so the
    first-order expansion of the penalties is valid at scale sigma."""
    spec = params.spec
    gen = rng.generator()
    for _ in range(200):
        x = gen.uniform(0.0, 1.0, size=spec.input_shape)
        _, trace = forward(params, x[None])
        ok = True
        for i, layer in enumerate(spec.layers):
            if not isinstance(layer, Relu):
                continue
            pre = trace.inputs[i][0]
            row_norms = np.linalg.norm(params.weights[i - 1], axis=1)
            if np.any(np.abs(pre) < margin * sigma * np.maximum(row_norms, 1e-12)):
                ok = False
                break
        if ok:
            return x
    raise RuntimeError("could not find a kink-free evaluation point")


def approxcheck(seed: int = 0, sigma: float = 1e-3, draws: int = 10 ** 5,
                tolerance: float = 0.05) -> DiagResult:
    """Monte-Carlo means of the stochastic penalties divided by sigma^2 must
    match the exact penalties; a pure linear network must match the closed
    form sigma^2 ||W||_F^2 within 2% (exact there, so a tighter bar)."""
    params = tiny_mlp(seed)
    rng = RngState(seed, 55)
    x = _safe_point(params, rng.derive(1), sigma)
    y = 1
    kind = LossKind.SQUARED_HINGE
    result = DiagResult("approxcheck")

    mc = stochastic_penalty_mc(params, x, None, kind, sigma, draws, rng.derive(2))
    result.add("limr", rel_err(mc / sigma ** 2, limr_exact(params, x)), tolerance)

    mc = stochastic_penalty_mc(params, x, y, kind, sigma, draws, rng.derive(3))
    result.add("lamr", rel_err(mc / sigma ** 2, lamr_exact(params, x, y, kind)), tolerance)

    linear = init_glorot(NetworkSpec((4,), (Dense(4, 3),)), RngState(seed, 77))
    closed = sigma ** 2 * frobenius_norm_sq(linear.weights[0])
    mc = stochastic_penalty_mc(linear, x, None, kind, sigma, draws, rng.derive(4))
    result.add("linear", rel_err(mc, closed), 0.02)
    return result


def mtccheck(seed: int = 0, draws: int = 10 ** 5, directions: int = 10,
             sigma: float = 0.7, tolerance: float = 0.03) -> DiagResult:
    """E[(u^T g)^2] over u ~ N(0, sigma^2 I) equals sigma^2 ||g||^2: projecting
    onto random directions in expectation recovers the full gradient norm."""
    gen = RngState(seed, 88).generator()
    result = DiagResult("mtccheck")
    for i in range(directions):
        g = gen.normal(size=12)
        u = gen.normal(0.0, sigma, size=(draws, 12))
        mc = float(np.mean((u @ g) ** 2))
        result.add(f"g{i}", rel_err(mc, sigma ** 2 * float(g @ g)), tolerance)
    return result
