"""Command-line entry point: train, eval, sweep, export-filters, diag.

Exit codes: 0 success, 1 diagnostic tolerance breach, 2 usage/config/data
error. Artifacts are written atomically (temp file + rename) so interrupted
runs never leave truncated outputs.
"""
from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from . import config as cfgmod
from .config import (SCHEMA, apply_overrides, load_config, make_network_spec,
                     make_train_config, render_config, resolve_data_dir)
from .data import SplitSpec, holdout_split, load_idx, split_semi
from .diagnostics import approxcheck, gradcheck, mtccheck
from .errors import ConfigError
from .nn import load_params, params_to_bytes
from .pgm import filter_grid, filters_as_images, to_pgm_bytes
from .trainer import MetricsRecord, evaluate, sweep, train

_METRICS_HEADER = "epoch,objective,penalty,train_err,valid_err,test_err"


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def metrics_csv(history: list[MetricsRecord]) -> str:
    rows = [_METRICS_HEADER]
    for r in history:
        rows.append(f"{r.epoch},{_fmt(r.objective)},{_fmt(r.penalty)},"
                    f"{_fmt(r.train_err)},{_fmt(r.valid_err)},{_fmt(r.test_err)}")
    return "\n".join(rows) + "\n"


def _load_datasets(cfg: dict):
    data_dir = Path(resolve_data_dir(cfg))
    train_full = load_idx(data_dir / cfg["train_images"], data_dir / cfg["train_labels"])
    test = load_idx(data_dir / cfg["test_images"], data_dir / cfg["test_labels"])
    train_set, valid = holdout_split(train_full, cfg["valid_count"], cfg["split_seed"])
    unlabeled = None
    if cfg["labeled_count"] > 0:
        labeled, unlabeled = split_semi(train_set, SplitSpec(cfg["labeled_count"], cfg["split_seed"]))
    else:
        labeled = train_set
    return labeled, unlabeled, valid, test


def _echo(cfg: dict) -> dict:
    out = dict(cfg)
    out["data_dir"] = resolve_data_dir(cfg)
    return out


def cmd_train(cfg: dict) -> int:
    spec = make_network_spec(cfg)
    tc = make_train_config(cfg)
    labeled, unlabeled, valid, test = _load_datasets(cfg)
    result = train(spec, labeled, unlabeled, valid, tc, test=test)
    out_dir = Path(cfg["out_dir"])
    atomic_write_text(out_dir / "metrics.csv", metrics_csv(result.history))
    atomic_write_bytes(out_dir / "params.bin", params_to_bytes(result.final_params))
    atomic_write_bytes(out_dir / "params_best.bin", params_to_bytes(result.best_params))
    best = result.best_record()
    lines = [render_config(_echo(cfg)).rstrip("\n")]
    if best is not None:
        lines += [
            f"result.best_epoch={best.epoch}",
            f"result.best_valid_err={_fmt(best.valid_err)}",
            f"result.test_err={_fmt(best.test_err)}",
        ]
    if result.history:
        final = result.history[-1]
        lines += [
            f"result.final_valid_err={_fmt(final.valid_err)}",
            f"result.final_test_err={_fmt(final.test_err)}",
            f"result.final_train_err={_fmt(final.train_err)}",
        ]
    atomic_write_text(out_dir / "summary.txt", "\n".join(lines) + "\n")
    if best is not None:
        print(f"best epoch {best.epoch}: valid_err={best.valid_err:.4f} "
              f"test_err={best.test_err if best.test_err is None else round(best.test_err, 4)}")
    return 0


def cmd_eval(cfg: dict, params_path: str) -> int:
    spec = make_network_spec(cfg)
    params = load_params(params_path, input_shape=spec.input_shape)
    _, _, valid, test = _load_datasets(cfg)
    print(f"valid_err={evaluate(params, valid):.6f}")
    print(f"test_err={evaluate(params, test):.6f}")
    return 0


def cmd_sweep(cfg: dict, param: str, values: list[float]) -> int:
    spec = make_network_spec(cfg)
    tc = make_train_config(cfg)
    labeled, unlabeled, valid, test = _load_datasets(cfg)
    points = sweep(spec, labeled, unlabeled, valid, tc, param, values, test=test)
    header = [param] + [repr(v) for v, _ in points]
    valid_row = ["validation_error"] + [_fmt(r.valid_err) for _, r in points]
    test_row = ["test_error"] + [_fmt(r.test_err) for _, r in points]
    text = "\n".join(",".join(row) for row in (header, valid_row, test_row)) + "\n"
    atomic_write_text(Path(cfg["out_dir"]) / "sweep.csv", text)
    print(text, end="")
    return 0


def cmd_export_filters(params_path: str, layer_index: int, out_path: str,
                       input_shape: str | None) -> int:
    shape = cfgmod.parse_input_shape(input_shape) if input_shape else None
    params = load_params(params_path, input_shape=shape)
    img = filter_grid(filters_as_images(params, layer_index))
    atomic_write_bytes(Path(out_path), to_pgm_bytes(img))
    print(f"wrote {out_path} ({img.shape[1]}x{img.shape[0]} px)")
    return 0


def cmd_diag(kind: str, seed: int) -> int:
    runners = {"gradcheck": gradcheck, "approxcheck": approxcheck, "mtccheck": mtccheck}
    if kind not in runners:
        raise ConfigError(f"unknown diagnostic {kind!r} (choose from {sorted(runners)})")
    result = runners[kind](seed=seed)
    for line in result.lines:
        print(line)
    print(f"{result.name}: max rel err {result.max_rel_err:.3e} "
          f"(tolerance {result.tolerance:g}) -> {'ok' if result.ok else 'FAIL'}")
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manifoldreg",
                                     description="manifold-regularized net training")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="key=value config file")
        for key, field in SCHEMA.items():
            p.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="V", help=field.help)

    p_train = sub.add_parser("train", help="train and write metrics/params/summary")
    add_config_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate saved params on the configured data")
    add_config_flags(p_eval)
    p_eval.add_argument("--params", required=True, help="params.bin path")

    p_sweep = sub.add_parser("sweep", help="vary one regularizer knob over a value list")
    add_config_flags(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=["lambda", "beta", "sigma"])
    p_sweep.add_argument("--values", required=True, help="comma-separated values")

    p_exp = sub.add_parser("export-filters", help="write a PGM tile grid of layer filters")
    p_exp.add_argument("--params", required=True)
    p_exp.add_argument("--layer", type=int, default=0)
    p_exp.add_argument("--out", required=True)
    p_exp.add_argument("--input-shape", default=None, help="needed for conv-first nets")

    p_diag = sub.add_parser("diag", help="run built-in numerical oracles")
    p_diag.add_argument("--kind", required=True, choices=["gradcheck", "approxcheck", "mtccheck"])
    p_diag.add_argument("--seed", type=int, default=0)
    return parser


def _gather_config(args: argparse.Namespace) -> dict:
    overrides = {}
    for key in SCHEMA:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            overrides[key] = value
    return apply_overrides(load_config(args.config), overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(_gather_config(args))
        if args.command == "eval":
            return cmd_eval(_gather_config(args), args.params)
        if args.command == "sweep":
            values = [float(v) for v in args.values.split(",") if v.strip()]
            if not values:
                raise ConfigError("empty --values list")
            return cmd_sweep(_gather_config(args), args.param, values)
        if args.command == "export-filters":
            return cmd_export_filters(args.params, args.layer, args.out, args.input_shape)
        if args.command == "diag":
            return cmd_diag(args.kind, args.seed)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
