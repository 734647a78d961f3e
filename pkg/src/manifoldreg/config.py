"""Flat key=value experiment configs.

One key per line, `#` comments, UTF-8. Unknown keys are a hard error so typos
never pass silently; keys under the reserved `result.` prefix are ignored,
which lets a run's summary file be fed straight back in as a config. Every
key can be overridden by a CLI flag of the same name.

Note on strengths: the squared hinge sums over classes and the stochastic
penalties keep the absorbed sigma^2 factor, so `lambda`/`beta` values are on
the scale used with those conventions (e.g. lambda=0.1 for the label-aware
penalty at sigma=0.5).
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

from .errors import ConfigError
from .loss import LossKind
from .nn import (Conv2D, Dense, Flatten, LayerSpec, MaxPool2D, NetworkSpec,
                 Relu, _chain_shape)
from .optimizer import AdadeltaConfig, SgdConfig
from .regularizer import RegConfig, RegKind, RegMode
from .trainer import TrainConfig

DATA_DIR_ENV = "MREG_DATA_DIR"
RESULT_PREFIX = "result."


def _parse_int(s: str) -> int:
    return int(s)


def _parse_float(s: str) -> float:
    return float(s)


def _parse_str(s: str) -> str:
    return s


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], object]
    default: object
    help: str


SCHEMA: dict[str, _Key] = {
    # network
    "input_shape": _Key(_parse_str, "784", "input dims, e.g. 784 or 1x28x28"),
    "layers": _Key(_parse_str, "dense:500 relu dense:500 relu dense:500 relu dense:10",
                   "layer tokens: dense:OUT relu flatten conv:FxKHxKW pool:PHxPW"),
    # loss / regularizer
    "loss": _Key(_parse_str, "squared_hinge", "squared_hinge | cross_entropy"),
    "reg_kind": _Key(_parse_str, "none", "none | lamr | limr | feature_noise"),
    "reg_mode": _Key(_parse_str, "stochastic", "stochastic | exact (exact is diagnostic-only)"),
    "lambda": _Key(_parse_float, 0.0, "labeled penalty strength"),
    "beta": _Key(_parse_float, 0.0, "unlabeled penalty strength (limr only)"),
    "sigma": _Key(_parse_float, 0.5, "input noise std"),
    "samples_per_instance": _Key(_parse_int, 1, "noise draws averaged per instance per step"),
    # optimizer
    "optimizer": _Key(_parse_str, "adadelta", "adadelta | sgd"),
    "rho": _Key(_parse_float, 0.95, "adadelta decay"),
    "epsilon": _Key(_parse_float, 1e-6, "adadelta conditioning constant"),
    "lr": _Key(_parse_float, 0.1, "sgd learning rate"),
    # training
    "epochs": _Key(_parse_int, 100, "training epochs"),
    "batch_size": _Key(_parse_int, 100, "labeled mini-batch size"),
    "unlabeled_batch_size": _Key(_parse_int, 0, "unlabeled mini-batch size (0 = none)"),
    "eval_every": _Key(_parse_int, 1, "epochs between evaluations"),
    "seed": _Key(_parse_int, 0, "master seed for init/shuffles/noise"),
    # data
    "data_dir": _Key(_parse_str, "", f"dataset directory (default ${DATA_DIR_ENV} or .)"),
    "train_images": _Key(_parse_str, "train-images-idx3-ubyte", "train images IDX file"),
    "train_labels": _Key(_parse_str, "train-labels-idx1-ubyte", "train labels IDX file"),
    "test_images": _Key(_parse_str, "t10k-images-idx3-ubyte", "test images IDX file"),
    "test_labels": _Key(_parse_str, "t10k-labels-idx1-ubyte", "test labels IDX file"),
    "valid_count": _Key(_parse_int, 10000, "validation instances held out of train"),
    "labeled_count": _Key(_parse_int, 0, "labeled subset size (0 = fully supervised)"),
    "split_seed": _Key(_parse_int, 0, "seed for holdout and semi-supervised splits"),
    # output
    "out_dir": _Key(_parse_str, "run", "artifact directory"),
}


def default_config() -> dict:
    return {key: field.default for key, field in SCHEMA.items()}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    cfg = default_config()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key.startswith(RESULT_PREFIX):
            continue
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            cfg[key] = SCHEMA[key].parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    return cfg


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read(), source=str(path))


def apply_overrides(cfg: dict, overrides: dict[str, str]) -> dict:
    out = dict(cfg)
    for key, value in overrides.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            out[key] = SCHEMA[key].parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
    return out


def render_config(cfg: dict) -> str:
    lines = [f"{key}={cfg[key]}" for key in SCHEMA]
    return "\n".join(lines) + "\n"


def resolve_data_dir(cfg: dict) -> str:
    return cfg["data_dir"] or os.environ.get(DATA_DIR_ENV, "") or "."


def parse_input_shape(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"bad input_shape {text!r}") from exc
    if not dims or any(d <= 0 for d in dims):
        raise ConfigError(f"bad input_shape {text!r}")
    return dims


def parse_layers(text: str, input_shape: tuple[int, ...]) -> tuple[LayerSpec, ...]:
    """Layer tokens with inferred fan-in: dense:OUT, relu, flatten,
    conv:FxKHxKW, pool:PHxPW."""
    layers: list[LayerSpec] = []
    shape = input_shape
    for token in text.replace(",", " ").split():
        name, _, arg = token.partition(":")
        if name == "dense":
            if len(shape) != 1:
                raise ConfigError(f"dense after non-flat shape {shape}; add flatten first")
            layers.append(Dense(shape[0], _token_dims(token, arg, 1)[0]))
        elif name == "relu":
            layers.append(Relu())
        elif name == "flatten":
            layers.append(Flatten())
        elif name == "conv":
            if len(shape) != 3:
                raise ConfigError(f"conv needs a CxHxW shape, have {shape}")
            f, kh, kw = _token_dims(token, arg, 3)
            layers.append(Conv2D(f, kh, kw, shape[0]))
        elif name == "pool":
            ph, pw = _token_dims(token, arg, 2)
            layers.append(MaxPool2D(ph, pw))
        else:
            raise ConfigError(f"unknown layer token {token!r}")
        shape = _chain_shape(shape, layers[-1], len(layers) - 1)
    return tuple(layers)


def _token_dims(token: str, arg: str, count: int) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in arg.split("x"))
    except ValueError:
        dims = ()
    if len(dims) != count or any(d <= 0 for d in dims):
        raise ConfigError(f"bad layer token {token!r}")
    return dims


def make_network_spec(cfg: dict) -> NetworkSpec:
    input_shape = parse_input_shape(cfg["input_shape"])
    return NetworkSpec(input_shape, parse_layers(cfg["layers"], input_shape))


_LOSSES = {"squared_hinge": LossKind.SQUARED_HINGE, "cross_entropy": LossKind.CROSS_ENTROPY}
_REG_KINDS = {k.value: k for k in RegKind}
_REG_MODES = {m.value: m for m in RegMode}


def _lookup(table: dict, value: str, what: str):
    if value not in table:
        raise ConfigError(f"unknown {what} {value!r} (choose from {sorted(table)})")
    return table[value]


def make_train_config(cfg: dict) -> TrainConfig:
    reg = RegConfig(
        kind=_lookup(_REG_KINDS, cfg["reg_kind"], "reg_kind"),
        mode=_lookup(_REG_MODES, cfg["reg_mode"], "reg_mode"),
        lam=cfg["lambda"],
        beta=cfg["beta"],
        sigma=cfg["sigma"],
        samples_per_instance=cfg["samples_per_instance"],
    )
    if cfg["optimizer"] == "adadelta":
        opt = AdadeltaConfig(rho=cfg["rho"], epsilon=cfg["epsilon"])
    elif cfg["optimizer"] == "sgd":
        opt = SgdConfig(learning_rate=cfg["lr"])
    else:
        raise ConfigError(f"unknown optimizer {cfg['optimizer']!r}")
    return TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        loss=_lookup(_LOSSES, cfg["loss"], "loss"),
        reg=reg,
        optimizer=opt,
        unlabeled_batch_size=cfg["unlabeled_batch_size"],
        eval_every=cfg["eval_every"],
    )
