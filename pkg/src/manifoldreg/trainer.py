"""Mini-batch training loop, evaluation, and strength/noise sweeps.

Seeded streams key every random choice: init, per-epoch shuffles, per-step
noise (epoch, step), and the independently cycling unlabeled stream. Two runs
with the same config produce bit-identical parameter and metric histories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .data import Dataset
from .errors import ConfigError, ContractError, DimensionError, ParameterError
from .loss import LossKind
from .nn import NetworkSpec, Params, forward, init_glorot, predict
from .optimizer import (AdadeltaConfig, AdadeltaState, SgdConfig, adadelta_step,
                        objective_grad, sgd_step)
from .regularizer import RegConfig, RegKind
from .tensor import RngState

_INIT_STREAM = 21
_SHUFFLE_STREAM = 22
_NOISE_STREAM = 23
_UNLABELED_STREAM = 24

OptimizerConfig = Union[AdadeltaConfig, SgdConfig]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 100
    seed: int = 0
    loss: LossKind = LossKind.SQUARED_HINGE
    reg: RegConfig = RegConfig()
    optimizer: OptimizerConfig = AdadeltaConfig()
    unlabeled_batch_size: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise ParameterError("epochs >= 0, batch_size >= 1, eval_every >= 1 required")
        if self.unlabeled_batch_size < 0:
            raise ParameterError("unlabeled_batch_size must be nonnegative")
        if self.unlabeled_batch_size > 0 and self.reg.kind is not RegKind.LIMR:
            raise ConfigError("unlabeled batches are only consumed by kind = LIMR")


@dataclass
class MetricsRecord:
    epoch: int
    objective: float
    penalty: float
    train_err: float
    valid_err: float
    test_err: Optional[float] = None


@dataclass
class TrainResult:
    final_params: Params
    best_params: Params
    history: list[MetricsRecord]

    def best_record(self) -> Optional[MetricsRecord]:
        if not self.history:
            return None
        return min(self.history, key=lambda r: r.valid_err)


def _shaped(features: np.ndarray, input_shape: tuple[int, ...]) -> np.ndarray:
    want = int(np.prod(input_shape))
    have = int(np.prod(features.shape[1:]))
    if want != have:
        raise DimensionError(f"feature size {have} does not match network input {input_shape}")
    return features.reshape((features.shape[0],) + input_shape)


class _UnlabeledCycler:
    """Endless stream of unlabeled mini-batches, reshuffled each full pass."""

    def __init__(self, features: np.ndarray, rng: RngState):
        self.features = features
        self.rng = rng
        self.pass_no = 0
        self.pos = 0
        self.order = rng.derive(_UNLABELED_STREAM, 0).generator().permutation(len(features))

    def next_batch(self, size: int) -> np.ndarray:
        idx = np.empty(size, dtype=np.int64)
        got = 0
        while got < size:
            take = min(size - got, len(self.order) - self.pos)
            idx[got:got + take] = self.order[self.pos:self.pos + take]
            got += take
            self.pos += take
            if self.pos == len(self.order):
                self.pass_no += 1
                self.pos = 0
                self.order = self.rng.derive(_UNLABELED_STREAM, self.pass_no).generator() \
                                 .permutation(len(self.order))
        return self.features[idx]


def evaluate(params: Params, dataset: Dataset, chunk: int = 2048) -> float:
    """Fraction of instances whose argmax score disagrees with the label."""
    if dataset.labels is None:
        raise ContractError("evaluate needs a fully labeled dataset")
    features = _shaped(dataset.features, params.spec.input_shape)
    wrong = 0
    for start in range(0, dataset.n, chunk):
        scores, _ = forward(params, features[start:start + chunk])
        wrong += int(np.sum(predict(scores) != dataset.labels[start:start + chunk]))
    return wrong / dataset.n


def train(spec: NetworkSpec, labeled: Dataset, unlabeled: Optional[Dataset],
          valid: Dataset, config: TrainConfig, test: Optional[Dataset] = None,
          ) -> TrainResult:
    """Minimize mean labeled loss plus the configured penalty.

    Each labeled mini-batch is paired with the next batch of an independently
    shuffled, cycling unlabeled stream (when configured). Metrics are recorded
    every `eval_every` epochs; best params are tracked by validation error.
    """
    if labeled.labels is None:
        raise ContractError("training needs a labeled dataset")
    if config.unlabeled_batch_size > 0 and (unlabeled is None or unlabeled.n == 0):
        raise ConfigError("unlabeled_batch_size > 0 but no unlabeled pool given")
    x_all = _shaped(labeled.features, spec.input_shape)
    y_all = labeled.labels
    rng = RngState(config.seed)
    params = init_glorot(spec, rng.derive(_INIT_STREAM))
    opt_state = AdadeltaState(params, config.optimizer) \
        if isinstance(config.optimizer, AdadeltaConfig) else None
    cycler = None
    if config.unlabeled_batch_size > 0:
        cycler = _UnlabeledCycler(_shaped(unlabeled.features, spec.input_shape), rng)
    best_params = params
    best_valid = math.inf
    history: list[MetricsRecord] = []
    n = labeled.n
    steps = math.ceil(n / config.batch_size)
    for epoch in range(config.epochs):
        order = rng.derive(_SHUFFLE_STREAM, epoch).generator().permutation(n)
        obj_sum = 0.0
        pen_sum = 0.0
        for step in range(steps):
            idx = order[step * config.batch_size:(step + 1) * config.batch_size]
            x_u = cycler.next_batch(config.unlabeled_batch_size) if cycler else None
            objective, penalty, grads = objective_grad(
                params, x_all[idx], y_all[idx], x_u, config.loss, config.reg,
                rng.derive(_NOISE_STREAM, epoch, step))
            if opt_state is not None:
                params = adadelta_step(opt_state, params, grads)
            else:
                params = sgd_step(config.optimizer, params, grads)
            obj_sum += objective * len(idx)
            pen_sum += penalty * len(idx)
        if (epoch + 1) % config.eval_every == 0:
            record = MetricsRecord(
                epoch=epoch + 1,
                objective=obj_sum / n,
                penalty=pen_sum / n,
                train_err=evaluate(params, labeled),
                valid_err=evaluate(params, valid),
                test_err=evaluate(params, test) if test is not None else None,
            )
            history.append(record)
            if record.valid_err < best_valid:
                best_valid = record.valid_err
                best_params = params
    return TrainResult(final_params=params, best_params=best_params, history=history)


_SWEEP_FIELDS = {"lambda": "lam", "beta": "beta", "sigma": "sigma"}


def sweep(spec: NetworkSpec, labeled: Dataset, unlabeled: Optional[Dataset],
          valid: Dataset, config: TrainConfig, param: str, values,
          test: Optional[Dataset] = None) -> list[tuple[float, MetricsRecord]]:
    """Independent seeded runs varying one regularizer knob; returns the
    best-by-validation record per value."""
    if param not in _SWEEP_FIELDS:
        raise ParameterError(f"sweep parameter must be one of {sorted(_SWEEP_FIELDS)}, got {param!r}")
    out = []
    for value in values:
        reg = replace(config.reg, **{_SWEEP_FIELDS[param]: float(value)})
        result = train(spec, labeled, unlabeled, valid, replace(config, reg=reg), test=test)
        record = result.best_record()
        if record is None:
            raise ConfigError("sweep runs must evaluate at least once (epochs/eval_every)")
        out.append((float(value), record))
    return out
