"""Parameter update rules (Adadelta, plain SGD) and full-objective gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .loss import LossKind, loss_grad_scores_batch, loss_value_batch
from .nn import Params, backward_params, forward, params_add_, zeros_like_params
from .regularizer import (NOISE_LABELED, RegConfig, RegKind, batch_penalty,
                          draw_instance_noise, feature_noise_augment)
from .tensor import RngState, as_tensor


@dataclass(frozen=True)
class AdadeltaConfig:
    rho: float = 0.95
    epsilon: float = 1e-6


class AdadeltaState:
    """Decaying accumulators of squared gradients and squared updates,
    shaped exactly like the Params they drive."""

    def __init__(self, params: Params, config: AdadeltaConfig = AdadeltaConfig()):
        self.rho = config.rho
        self.epsilon = config.epsilon
        self.sq_grad = zeros_like_params(params.spec)
        self.sq_update = zeros_like_params(params.spec)


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} differ")


def adadelta_step(state: AdadeltaState, params: Params, grads: Params) -> Params:
    """One Adadelta update; mutates the accumulators, returns new Params.

    Per element: E[g2] <- rho E[g2] + (1-rho) g2;
    delta = -sqrt(E[d2]+eps)/sqrt(E[g2]+eps) * g;
    E[d2] <- rho E[d2] + (1-rho) delta2.
    """
    rho, eps = state.rho, state.epsilon
    out = params.copy()
    for store in ("weights", "biases"):
        ps = getattr(out, store)
        gs = getattr(grads, store)
        eg = getattr(state.sq_grad, store)
        ed = getattr(state.sq_update, store)
        for i in range(len(ps)):
            if ps[i] is None:
                continue
            _check_same_shape(ps[i], gs[i], f"adadelta {store}[{i}]")
            eg[i] *= rho
            eg[i] += (1.0 - rho) * gs[i] * gs[i]
            delta = -np.sqrt(ed[i] + eps) / np.sqrt(eg[i] + eps) * gs[i]
            ed[i] *= rho
            ed[i] += (1.0 - rho) * delta * delta
            ps[i] += delta
    return out


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")


def sgd_step(config: SgdConfig, params: Params, grads: Params) -> Params:
    out = params.copy()
    for store in ("weights", "biases"):
        ps = getattr(out, store)
        gs = getattr(grads, store)
        for i in range(len(ps)):
            if ps[i] is None:
                continue
            _check_same_shape(ps[i], gs[i], f"sgd {store}[{i}]")
            ps[i] -= config.learning_rate * gs[i]
    return out


def objective_grad(params: Params, x_labeled, y_labeled, x_unlabeled,
                   kind: LossKind, config: RegConfig, rng: RngState,
                   ) -> tuple[float, float, Params]:
    """(objective, penalty, parameter gradient) for one mini-batch.

    objective = mean labeled loss + penalty, exactly. For FEATURE_NOISE the
    labeled loss is taken on noise-augmented inputs and the penalty is zero.
    """
    x_labeled = as_tensor(x_labeled)
    labels = np.asarray(y_labeled, dtype=np.int64)
    bsz = x_labeled.shape[0]
    if config.kind is RegKind.FEATURE_NOISE:
        eps = draw_instance_noise(rng, NOISE_LABELED, bsz, params.spec.input_shape,
                                  config.sigma, 0)
        x_train = feature_noise_augment(x_labeled, eps)
    else:
        x_train = x_labeled
    scores, trace = forward(params, x_train)
    data_loss = float(np.mean(loss_value_batch(kind, scores, labels)))
    grads = backward_params(trace, loss_grad_scores_batch(kind, scores, labels) / bsz)
    clean = (scores, trace) if config.kind is not RegKind.FEATURE_NOISE else None
    penalty, pgrads = batch_penalty(params, x_labeled, labels, x_unlabeled,
                                    config, kind, rng, labeled_clean=clean)
    params_add_(grads, pgrads)
    return data_loss + penalty, penalty, grads
