"""Experiment harness: ``hypergrad run`` and ``hypergrad validate-config``.

Configuration is a flat YAML mapping; every key also exists as a command
line flag (``inner_tol`` -> ``--inner-tol``, lists comma separated), and
flags override the file.  An empty file selects the default synthetic setup
(P=100, 10-sparse, 200 training and 2000 test samples, SNR 0.3, LOO).
"""

from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import click
import yaml

from .data import SyntheticSpec, compute_stats, generate_synthetic, load_csv, save_csv
from .hyper import HyperConfig, HyperTrajectory, Z_MODES, hsgd_run, ohsgd_run
from .prox import GroupLasso, GroupStructure, Lasso
from .solver import PgdConfig
from .validation import LOO, HeldOut, KFold, default_grid, grid_search, make_folds

OUTPUT_ENV = "HYPERGRAD_OUTPUT_DIR"
MODES = ("hsgd", "ohsgd", "grid", "exp1", "exp2")

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class _Field:
    type: type
    default: Any
    help: str
    nullable: bool = False
    is_list: bool = False


# name -> field; order is the order of the echoed config
FIELDS: dict[str, _Field] = {
    "mode": _Field(str, "hsgd", f"one of {', '.join(MODES)}"),
    "seed": _Field(int, 0, "seed for data generation and fold splits"),
    "dim": _Field(int, 100, "synthetic input dimension"),
    "sparsity": _Field(int, 10, "nonzeros in the synthetic true weights"),
    "n_train": _Field(int, 200, "train-and-validate samples"),
    "n_test": _Field(int, 2000, "test samples"),
    "snr": _Field(float, 0.3, "signal-to-noise power ratio (linear)"),
    "train_csv": _Field(str, None, "use this CSV instead of synthetic training data", nullable=True),
    "test_csv": _Field(str, None, "optional CSV test set", nullable=True),
    "csv_header": _Field(bool, False, "CSV inputs have a header line"),
    "regularizer": _Field(str, "lasso", "lasso or group_lasso"),
    "group_size": _Field(int, 10, "uniform contiguous group size (group_lasso)"),
    "group_sizes": _Field(int, None, "contiguous group sizes (group_lasso)", nullable=True, is_list=True),
    "groups": _Field(list, None, "explicit index lists (group_lasso)", nullable=True, is_list=True),
    "scheme": _Field(str, "loo", "loo, kfold or heldout"),
    "n_folds": _Field(int, 10, "folds for kfold"),
    "heldout_fraction": _Field(float, 0.2, "validation fraction for heldout"),
    "beta": _Field(float, 6e-5, "outer step size"),
    "lambda_init": _Field(float, None, "initial lambda (default 0.1 lambda_max)", nullable=True),
    "max_outer": _Field(int, 200, "HSGD outer iterations cap"),
    "max_sweeps": _Field(int, 100, "OHSGD cap, in sweeps over the folds"),
    "outer_tol": _Field(float, 1e-4, "HSGD |hypergrad| / OHSGD averaged-lambda movement threshold"),
    "z_mode": _Field(str, "linear_solve", f"one of {', '.join(Z_MODES)}"),
    "alpha": _Field(float, None, "PGD step (default 1/rho(phi))", nullable=True),
    "inner_tol": _Field(float, 1e-3, "PGD subgradient-residual tolerance"),
    "inner_max_iters": _Field(int, 50_000, "PGD iteration cap"),
    "betas": _Field(float, [6e-5], "exp1/exp2 sweep over beta", is_list=True),
    "tols": _Field(float, [1e-1, 1e-3, 1e-6], "exp2 sweep over inner_tol", is_list=True),
    "grid_size": _Field(int, 50, "grid points"),
    "grid_min_ratio": _Field(float, 1e-3, "smallest grid value as a fraction of lambda_max"),
    "output_dir": _Field(str, "hypergrad-out", "output directory"),
    "threads": _Field(int, 1, "worker threads for per-fold solves"),
}


def _coerce_scalar(key: str, ftype: type, value):
    if ftype is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if ftype is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    if ftype is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if ftype is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    return value


def _coerce(key: str, value):
    f = FIELDS[key]
    if value is None:
        if f.nullable:
            return None
        raise ConfigError(f"{key}: value required")
    if f.is_list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        if key == "groups":
            out = []
            for i, g in enumerate(value):
                if not isinstance(g, (list, tuple)):
                    raise ConfigError(f"groups[{i}]: expected a list of indices")
                out.append([_coerce_scalar(f"groups[{i}][{k}]", int, v) for k, v in enumerate(g)])
            return out
        return [_coerce_scalar(f"{key}[{i}]", f.type, v) for i, v in enumerate(value)]
    return _coerce_scalar(key, f.type, value)


def normalize_config(raw: dict) -> dict:
    """Fill defaults, type-check and cross-check a raw config mapping."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of keys to values")
    unknown = sorted(set(raw) - set(FIELDS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    cfg = {}
    for key, f in FIELDS.items():
        cfg[key] = _coerce(key, raw[key]) if key in raw else (list(f.default) if f.is_list and f.default is not None else f.default)

    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg["mode"] in MODES, f"mode: expected one of {MODES}, got {cfg['mode']!r}")
    need(cfg["regularizer"] in ("lasso", "group_lasso"), f"regularizer: unknown value {cfg['regularizer']!r}")
    need(cfg["scheme"] in ("loo", "kfold", "heldout"), f"scheme: unknown value {cfg['scheme']!r}")
    need(cfg["z_mode"] in Z_MODES, f"z_mode: expected one of {Z_MODES}")
    need(cfg["dim"] >= 1, "dim: must be >= 1")
    need(
        0 <= cfg["sparsity"] <= cfg["dim"],
        f"sparsity, dim: sparsity ({cfg['sparsity']}) must not exceed dim ({cfg['dim']})",
    )
    need(cfg["n_train"] >= 2, "n_train: must be >= 2")
    need(cfg["n_test"] >= 2, "n_test: must be >= 2")
    need(cfg["snr"] > 0, "snr: must be positive")
    need(cfg["beta"] > 0, "beta: must be positive")
    need(cfg["lambda_init"] is None or cfg["lambda_init"] >= 0, "lambda_init: must be nonnegative")
    need(cfg["max_outer"] >= 1, "max_outer: must be >= 1")
    need(cfg["max_sweeps"] >= 1, "max_sweeps: must be >= 1")
    need(cfg["outer_tol"] >= 0, "outer_tol: must be nonnegative")
    need(cfg["alpha"] is None or cfg["alpha"] > 0, "alpha: must be positive")
    need(cfg["inner_tol"] > 0, "inner_tol: must be positive")
    need(cfg["inner_max_iters"] >= 1, "inner_max_iters: must be >= 1")
    need(cfg["grid_size"] >= 1, "grid_size: must be >= 1")
    need(0 < cfg["grid_min_ratio"] <= 1, "grid_min_ratio: must lie in (0, 1]")
    need(cfg["threads"] >= 1, "threads: must be >= 1")
    need(cfg["n_folds"] >= 2, "n_folds: must be >= 2")
    need(cfg["n_folds"] <= cfg["n_train"] or cfg["scheme"] != "kfold", "n_folds, n_train: n_folds exceeds n_train")
    need(0 < cfg["heldout_fraction"] < 1, "heldout_fraction: must lie in (0, 1)")
    need(all(b > 0 for b in cfg["betas"]), "betas: entries must be positive")
    need(all(t > 0 for t in cfg["tols"]), "tols: entries must be positive")
    if cfg["mode"] in ("exp1", "exp2"):
        need(len(cfg["betas"]) > 0, "betas: nonempty sweep required")
    if cfg["mode"] == "exp2":
        need(len(cfg["tols"]) > 0, "tols: nonempty sweep required")
    if cfg["regularizer"] == "group_lasso":
        need(
            cfg["groups"] is None or cfg["group_sizes"] is None,
            "groups, group_sizes: give at most one of them",
        )
        if cfg["groups"] is None and cfg["group_sizes"] is None and cfg["train_csv"] is None:
            need(cfg["dim"] % cfg["group_size"] == 0, "group_size, dim: dim must be a multiple of group_size")
    return cfg


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not parseable: {exc}") from None
    return normalize_config(raw)


# ---------------------------------------------------------------------------
# Building the experiment
# ---------------------------------------------------------------------------


def _scheme(cfg):
    if cfg["scheme"] == "loo":
        return LOO()
    if cfg["scheme"] == "kfold":
        return KFold(cfg["n_folds"], cfg["seed"])
    return HeldOut(cfg["heldout_fraction"], cfg["seed"])


def _regularizer(cfg, dim):
    if cfg["regularizer"] == "lasso":
        return Lasso()
    if cfg["groups"] is not None:
        gs = GroupStructure(cfg["groups"])
    elif cfg["group_sizes"] is not None:
        gs = GroupStructure.from_sizes(cfg["group_sizes"])
    else:
        gs = GroupStructure.uniform(dim, cfg["group_size"])
    reg = GroupLasso(gs)
    reg.check_dim(dim)
    return reg


def _data(cfg):
    if cfg["train_csv"] is not None:
        train = load_csv(cfg["train_csv"], header=cfg["csv_header"])
        test = load_csv(cfg["test_csv"], header=cfg["csv_header"]) if cfg["test_csv"] else None
        return train, test, None
    spec = SyntheticSpec(cfg["dim"], cfg["sparsity"], cfg["n_train"], cfg["n_test"], cfg["snr"], cfg["seed"])
    return generate_synthetic(spec)


def _hyper(cfg, beta=None, tol=None, n_folds=1, online=False):
    inner = PgdConfig(cfg["alpha"], cfg["inner_tol"] if tol is None else tol, cfg["inner_max_iters"])
    return HyperConfig(
        beta=cfg["beta"] if beta is None else beta,
        lambda_init=cfg["lambda_init"],
        max_outer=cfg["max_sweeps"] * n_folds if online else cfg["max_outer"],
        outer_tol=cfg["outer_tol"],
        inner=inner,
        z_mode=cfg["z_mode"],
    )


def _tag(x: float) -> str:
    return repr(float(x))


def _run_summary(traj: HyperTrajectory) -> dict:
    return {
        "final_lambda": traj.final_lambda,
        "updates": len(traj),
        "total_inner_iters": int(traj.records[-1].cum_inner_iters) if traj.records else 0,
        "unconverged_inner_solves": int(sum(r.n_unconverged for r in traj.records)),
        "z_fallbacks": int(sum(r.z_fallback for r in traj.records)),
    }


def execute(cfg: dict, out: Path) -> dict:
    """Run the configured experiment, writing artifacts into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    train, test, w_true = _data(cfg)
    save_csv(train, out / "train.csv")
    if test is not None:
        save_csv(test, out / "test.csv")
    if w_true is not None:
        with open(out / "w_true.csv", "w") as fh:
            fh.writelines(repr(float(v)) + "\n" for v in w_true)

    reg = _regularizer(cfg, train.n_features)
    stats = compute_stats(train)
    folds = make_folds(_scheme(cfg), train, stats)
    threads = cfg["threads"]
    summary: dict[str, Any] = {
        "mode": cfg["mode"],
        "seed": cfg["seed"],
        "lambda_max": reg.dual_norm(stats.r),
        "alpha": folds.alpha if cfg["alpha"] is None else cfg["alpha"],
        "runs": {},
    }
    mode = cfg["mode"]

    def run_one(name, online, beta=None, tol=None):
        hc = _hyper(cfg, beta, tol, len(folds), online)
        traj = ohsgd_run(train, reg, folds, hc) if online else hsgd_run(train, reg, folds, hc, threads)
        traj.to_csv(out / f"trajectory_{name}.csv" if name else out / "trajectory.csv")
        summary["runs"][name or mode] = _run_summary(traj)
        return traj

    if mode == "hsgd":
        traj = run_one("", False)
        summary["final_lambda"] = traj.final_lambda
    elif mode == "ohsgd":
        traj = run_one("", True)
        summary["final_lambda"] = traj.final_lambda
    elif mode == "exp1":
        for b in cfg["betas"]:
            run_one(f"hsgd_beta={_tag(b)}", False, beta=b)
            run_one(f"ohsgd_beta={_tag(b)}", True, beta=b)
    elif mode == "exp2":
        for b in cfg["betas"]:
            for t in cfg["tols"]:
                run_one(f"ohsgd_beta={_tag(b)}_tol={_tag(t)}", True, beta=b, tol=t)

    if mode in ("grid", "exp2"):
        grid = default_grid(summary["lambda_max"], cfg["grid_size"], cfg["grid_min_ratio"])
        inner = PgdConfig(cfg["alpha"], cfg["inner_tol"], cfg["inner_max_iters"])
        curve = grid_search(train, reg, None, grid, inner, test_set=test, folds=folds, threads=threads)
        curve.to_csv(out / "curve.csv")
        summary["grid_argmin"] = curve.argmin
        summary["grid_inner_iters"] = curve.inner_iters
        summary["grid_unconverged"] = curve.unconverged

    summary["total_inner_iters"] = int(
        sum(r["total_inner_iters"] for r in summary["runs"].values()) + summary.get("grid_inner_iters", 0)
    )
    # the output location is not part of the result; leaving it out keeps
    # summaries from two directories byte-comparable
    summary["config"] = {k: v for k, v in cfg.items() if k != "output_dir"}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return summary


# ---------------------------------------------------------------------------
# click
# ---------------------------------------------------------------------------


def _parse_flag(key: str, text: str):
    f = FIELDS[key]
    if f.nullable and text.lower() in ("none", "null", ""):
        return None
    if key == "groups":
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            raise ConfigError(f"groups: expected a JSON list of index lists") from None
    if f.is_list:
        return [_parse_scalar(key, f.type, t) for t in text.split(",") if t.strip()]
    return _parse_scalar(key, f.type, text)


def _parse_scalar(key, ftype, text):
    try:
        if ftype is bool:
            if text.lower() in ("1", "true", "yes"):
                return True
            if text.lower() in ("0", "false", "no"):
                return False
            raise ValueError(text)
        if ftype is int:
            return int(text)
        if ftype is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {ftype.__name__}") from None


def _config_options(fn):
    for key in reversed(list(FIELDS)):
        names = [f"--{key.replace('_', '-')}"]
        if key == "output_dir":
            names.append("--out")
        fn = click.option(*names, key, default=None, help=FIELDS[key].help)(fn)
    return fn


@click.group()
def main():
    """Hyper-subgradient tuning of Lasso / Group Lasso penalties."""


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="YAML config file")
@_config_options
def run(config_path, **flags):
    """Run an experiment and write CSV/JSON artifacts."""
    try:
        raw = {}
        if config_path is not None:
            raw = yaml.safe_load(Path(config_path).read_text()) or {}
            if not isinstance(raw, dict):
                raise ConfigError("config must be a mapping of keys to values")
        if os.environ.get(OUTPUT_ENV):
            raw["output_dir"] = os.environ[OUTPUT_ENV]
        for key, text in flags.items():
            if text is not None:
                raw[key] = _parse_flag(key, text)
        cfg = normalize_config(raw)
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    out = Path(cfg["output_dir"])
    t0 = time.perf_counter()
    try:
        summary = execute(cfg, out)
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        click.echo(f"runtime error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    elapsed = time.perf_counter() - t0
    if "final_lambda" in summary:
        click.echo(f"final lambda: {summary['final_lambda']:.6g}")
    if "grid_argmin" in summary:
        click.echo(f"grid argmin:  {summary['grid_argmin']:.6g}")
    click.echo(f"inner PGD iterations: {summary['total_inner_iters']}")
    click.echo(f"wall time: {elapsed:.2f} s")
    click.echo(f"artifacts in {out}")


@main.command("validate-config")
@click.argument("path", type=click.Path(dir_okay=False))
def validate_config(path):
    """Print the fully-defaulted config, or the errors found in it."""
    try:
        cfg = load_config(path)
    except (ConfigError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(yaml.safe_dump(cfg, sort_keys=False).rstrip())


if __name__ == "__main__":
    main()
