"""Manifold regularization penalties.

Two penalties, each in two flavours:

  * label-aware (LAMR): squared L2 norm of the loss gradient w.r.t. the input;
  * label-independent (LIMR): squared Frobenius norm of the score Jacobian
    w.r.t. the input, which never touches the label and therefore applies to
    unlabeled data as well.

Exact evaluation backpropagates through the network (diagnostics only:
training through it would need second-order backprop). The training path uses
the stochastic form instead: squared differences between a clean forward pass
and a Gaussian-perturbed one. The sigma^2 scale of that estimator is absorbed
into the strength constants, i.e. stochastic penalties are *not* divided by
sigma^2; divide explicitly when comparing against exact values.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParameterError
from .loss import LossKind, loss_grad_scores_batch, loss_value_batch
from .nn import (ForwardTrace, Params, backward_input, backward_params, forward,
                 input_jacobian, params_add_, zeros_like_params)
from .tensor import RngState, as_tensor, frobenius_norm_sq, gaussian_sample

# stream tags for noise derivation inside one batch-penalty call
NOISE_LABELED = 101
NOISE_UNLABELED = 102


class RegKind(enum.Enum):
    NONE = "none"
    LAMR = "lamr"
    LIMR = "limr"
    FEATURE_NOISE = "feature_noise"


class RegMode(enum.Enum):
    EXACT = "exact"
    STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class RegConfig:
    kind: RegKind = RegKind.NONE
    mode: RegMode = RegMode.STOCHASTIC
    lam: float = 0.0  # labeled-term strength (the paper-facing "lambda" knob)
    beta: float = 0.0  # unlabeled-term strength, LIMR only
    sigma: float = 0.5
    samples_per_instance: int = 1

    def __post_init__(self):
        if self.lam < 0 or self.beta < 0:
            raise ParameterError("regularization strengths must be nonnegative")
        if self.sigma <= 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if self.samples_per_instance < 1:
            raise ParameterError("samples_per_instance must be >= 1")
        if self.beta > 0 and self.kind is not RegKind.LIMR:
            raise ConfigError("beta > 0 requires kind = LIMR (other penalties need labels)")


def lamr_exact(params: Params, x, y: int, kind: LossKind) -> float:
    """|| d loss / d input ||^2 for one instance. Unscaled (no lambda)."""
    x = as_tensor(x)
    scores, trace = forward(params, x[None])
    upstream = loss_grad_scores_batch(kind, scores, np.array([y]))
    return frobenius_norm_sq(backward_input(trace, upstream))


def limr_exact(params: Params, x) -> float:
    """Squared Frobenius norm of the input Jacobian for one instance. Label-free."""
    return frobenius_norm_sq(input_jacobian(params, x))


def lamr_stochastic(params: Params, x, y: int, kind: LossKind, eps) -> tuple[float, Params]:
    """One-draw estimator (loss(x+eps) - loss(x))^2 and its parameter gradient.

    Gradient is 2*(delta loss)*(grad_theta loss(x+eps) - grad_theta loss(x)):
    two ordinary backward passes, no second-order terms.
    """
    x = as_tensor(x)
    eps = as_tensor(eps)
    labels = np.array([y])
    clean_scores, clean_trace = forward(params, x[None])
    noisy_scores, noisy_trace = forward(params, (x + eps)[None])
    dl = float(loss_value_batch(kind, noisy_scores, labels)[0]
               - loss_value_batch(kind, clean_scores, labels)[0])
    grads = backward_params(noisy_trace, 2.0 * dl * loss_grad_scores_batch(kind, noisy_scores, labels))
    params_add_(grads, backward_params(clean_trace, -2.0 * dl * loss_grad_scores_batch(kind, clean_scores, labels)))
    return dl * dl, grads


def limr_stochastic(params: Params, x, eps) -> tuple[float, Params]:
    """One-draw estimator ||f(x+eps) - f(x)||^2 and its parameter gradient."""
    x = as_tensor(x)
    eps = as_tensor(eps)
    clean_scores, clean_trace = forward(params, x[None])
    noisy_scores, noisy_trace = forward(params, (x + eps)[None])
    delta = noisy_scores - clean_scores
    grads = backward_params(noisy_trace, 2.0 * delta)
    params_add_(grads, backward_params(clean_trace, -2.0 * delta))
    return frobenius_norm_sq(delta), grads


def feature_noise_augment(x, eps) -> np.ndarray:
    """x + eps; the caller trains the plain loss on the noisy input."""
    x = as_tensor(x)
    eps = as_tensor(eps)
    if x.shape != eps.shape:
        raise ParameterError(f"noise shape {eps.shape} does not match input {x.shape}")
    return x + eps


def draw_instance_noise(rng: RngState, tag: int, count: int, shape: tuple[int, ...],
                        sigma: float, sample: int) -> np.ndarray:
    """Stack of per-instance Gaussian draws, one derived stream per instance."""
    return np.stack([
        gaussian_sample(rng.derive(tag, i, sample), shape, sigma) for i in range(count)
    ])


def _stochastic_term(params: Params, x: np.ndarray, y, kind: LossKind,
                     config: RegConfig, rng: RngState, tag: int,
                     clean: tuple[np.ndarray, ForwardTrace] | None = None):
    """Mean stochastic penalty over a batch (LAMR when y given, else LIMR),
    averaged over samples_per_instance draws, with its parameter gradient."""
    bsz = x.shape[0]
    s = config.samples_per_instance
    clean_scores, clean_trace = clean if clean is not None else forward(params, x)
    if y is not None:
        clean_losses = loss_value_batch(kind, clean_scores, y)
        clean_lgrads = loss_grad_scores_batch(kind, clean_scores, y)
    grads = zeros_like_params(params.spec)
    total = 0.0
    norm = 1.0 / (bsz * s)
    shape = params.spec.input_shape
    for draw in range(s):
        eps = draw_instance_noise(rng, tag, bsz, shape, config.sigma, draw)
        noisy_scores, noisy_trace = forward(params, x + eps)
        if y is None:
            delta = noisy_scores - clean_scores
            total += float(np.sum(delta * delta)) * norm
            up_noisy = (2.0 * norm) * delta
            up_clean = -up_noisy
        else:
            dl = loss_value_batch(kind, noisy_scores, y) - clean_losses
            total += float(np.dot(dl, dl)) * norm
            coeff = (2.0 * norm) * dl
            up_noisy = coeff[:, None] * loss_grad_scores_batch(kind, noisy_scores, y)
            up_clean = -coeff[:, None] * clean_lgrads
        params_add_(grads, backward_params(noisy_trace, up_noisy))
        params_add_(grads, backward_params(clean_trace, up_clean))
    return total, grads


def batch_penalty(params: Params, x_labeled, y_labeled, x_unlabeled,
                  config: RegConfig, kind: LossKind, rng: RngState,
                  labeled_clean: tuple[np.ndarray, ForwardTrace] | None = None,
                  ) -> tuple[float, Params]:
    """Mini-batch penalty: lambda * mean over the labeled batch plus
    beta * mean over the unlabeled batch, with the summed parameter gradient.

    Fresh per-instance noise comes from streams derived off `rng`, so the
    value is reproducible given (params, batches, rng). FEATURE_NOISE carries
    no penalty term (the augmentation happens in the data-loss path); NONE is
    identically zero. `labeled_clean` lets the caller reuse an existing clean
    forward pass over the labeled batch.
    """
    x_labeled = as_tensor(x_labeled)
    n_unlabeled = 0 if x_unlabeled is None else len(x_unlabeled)
    if n_unlabeled and config.kind is not RegKind.LIMR:
        raise ConfigError(f"unlabeled batch requires kind = LIMR, got {config.kind.value}")
    grads = zeros_like_params(params.spec)
    if config.kind in (RegKind.NONE, RegKind.FEATURE_NOISE):
        return 0.0, grads
    if config.mode is not RegMode.STOCHASTIC:
        raise ConfigError("training-path penalties require mode = stochastic "
                          "(exact evaluation is diagnostic-only)")
    penalty = 0.0
    if config.lam > 0 and len(x_labeled):
        y = np.asarray(y_labeled, dtype=np.int64) if config.kind is RegKind.LAMR else None
        p, g = _stochastic_term(params, x_labeled, y, kind, config, rng, NOISE_LABELED,
                                clean=labeled_clean)
        penalty += config.lam * p
        params_add_(grads, g, config.lam)
    if config.kind is RegKind.LIMR and config.beta > 0 and n_unlabeled:
        p, g = _stochastic_term(params, as_tensor(x_unlabeled), None, kind, config, rng,
                                NOISE_UNLABELED)
        penalty += config.beta * p
        params_add_(grads, g, config.beta)
    return penalty, grads


def stochastic_penalty_draws(params: Params, x, y, kind: LossKind, eps_draws) -> np.ndarray:
    """Per-draw stochastic penalties for one instance under many noise draws.

    Vectorizes the draws through a single batched forward pass; row d equals
    lamr_stochastic/limr_stochastic's penalty for eps_draws[d]. Used by the
    Monte-Carlo diagnostics.
    """
    x = as_tensor(x)
    eps_draws = as_tensor(eps_draws)
    clean_scores, _ = forward(params, x[None])
    noisy_scores, _ = forward(params, x[None] + eps_draws)
    if y is None:
        delta = noisy_scores - clean_scores
        return np.sum(delta * delta, axis=1)
    labels = np.full(len(eps_draws), y, dtype=np.int64)
    clean_loss = loss_value_batch(kind, clean_scores, np.array([y]))[0]
    dl = loss_value_batch(kind, noisy_scores, labels) - clean_loss
    return dl * dl


def stochastic_penalty_mc(params: Params, x, y, kind: LossKind, sigma: float,
                          draws: int, rng: RngState, chunk: int = 20000) -> float:
    """Monte-Carlo mean of the stochastic penalty over `draws` fresh draws.

    y = None gives the LIMR estimator, otherwise LAMR. Divide by sigma^2 to
    compare against the exact penalties.
    """
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    gen = rng.generator()
    shape = params.spec.input_shape
    total = 0.0
    left = draws
    while left > 0:
        n = min(chunk, left)
        eps = gen.normal(0.0, sigma, size=(n, *shape))
        total += float(np.sum(stochastic_penalty_draws(params, x, y, kind, eps)))
        left -= n
    return total / draws
