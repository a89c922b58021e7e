"""Experiment harness: JSON configs in, plot-ready CSV/JSON reports out.

Commands
    train          train the twin pair for every (width, seed) cell
    sweep-width    record min training losses across widths (scaling trend)
    similarity     train cells and summarize the 1-bit vs twin prediction gap
    kernel-probe   eigenvalues of the init kernel per (width, seed)
    generate-data  sample and persist datasets
    compare-1d     train on a 1-D target and tabulate predictions

Outputs are data, not pictures; every float is serialized with full
precision so identical configs reproduce byte-identical CSVs regardless of
the worker count.  Timestamps live only in meta.json.
"""

from __future__ import annotations

import argparse
import ast
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .data import Dataset, DatasetMeta, custom_target, generate_dataset, persist_dataset, split, target_function
from .errors import BitkernelError, DivergenceError, InvalidConfigError, ParseError
from .kernel import gram_matrix, min_max_eigenvalues
from .net import batch_forward, init_network
from .seeding import mix_seed
from .train import Diagnostics, Hyperparams, TrainTrajectory, train_twin
from .theory import ORDER_OF_MAGNITUDE_NOTE

COMMANDS = ("train", "sweep-width", "similarity", "kernel-probe",
            "generate-data", "compare-1d")
TARGET_IDS = ("f1", "f2", "f3", "f4", "f5", "f6", "custom_1d")

RUN_REPORT_FIELDS = ("step", "loss_1bit", "loss_fp", "lambda_min", "lambda_max",
                     "gram_drift", "max_train_diff", "max_test_diff",
                     "flip_fraction", "weight_drift")

# Built-in 1-D preset: smooth carrier plus high-frequency ripple and two
# narrow Gaussian spikes inside [-pi, pi].
SPIKY_PRESET = ("sin(2*x) + 0.6*sin(11*x) + 1.5*exp(-40*(x-1.2)**2)"
                " - 2*exp(-60*(x+0.8)**2)")

COMPARE_GRID_POINTS = 401


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    target: str
    n: int = 100
    n_test: int = 100
    widths: tuple[int, ...] = (1024,)
    kappa: float = 1.0
    eta: float | None = None
    steps: int = 1000
    seeds: tuple[int, ...] = (1,)
    mode: str = "box"
    probe_stride: int | None = None
    output_dir: str = "."
    expression: str | None = None


@dataclass(frozen=True)
class RunRecord:
    step: int
    loss_1bit: float
    loss_fp: float
    lambda_min: float
    lambda_max: float
    gram_drift: float
    max_train_diff: float
    max_test_diff: float
    flip_fraction: float
    weight_drift: float


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _want_int(key: str, value, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidConfigError(f"config key {key!r} must be an integer")
    if minimum is not None and value < minimum:
        raise InvalidConfigError(f"config key {key!r} must be >= {minimum}, got {value}")
    return value


def _want_number(key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidConfigError(f"config key {key!r} must be a number")
    return float(value)


def _want_int_list(key: str, value) -> tuple[int, ...]:
    if not isinstance(value, (list, tuple)):
        raise InvalidConfigError(f"config key {key!r} must be a list of integers")
    return tuple(_want_int(key, v) for v in value)


def parse_config(source, command: str | None = None) -> ExperimentConfig:
    """Validate a JSON config (text or dict), filling documented defaults.

    Unknown keys are rejected; every constraint violation names the key.
    A `command` given by the caller (the CLI positional) must agree with the
    config when both are present.
    """
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, (str, bytes)):
        try:
            raw = json.loads(source)
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"config is not well-formed JSON: {exc}") from exc
    elif isinstance(source, dict):
        raw = dict(source)
    else:
        raise InvalidConfigError(f"unsupported config source type {type(source)!r}")
    if not isinstance(raw, dict):
        raise InvalidConfigError("config must be a JSON object")

    known = {f for f in ExperimentConfig.__dataclass_fields__}
    for key in raw:
        if key not in known:
            raise InvalidConfigError(f"unknown config key {key!r}")

    cmd = raw.get("command", command)
    if cmd is None:
        raise InvalidConfigError("config key 'command' is required")
    if command is not None and raw.get("command") not in (None, command):
        raise InvalidConfigError(
            f"config key 'command' is {raw['command']!r} but the CLI asked for {command!r}")
    if cmd not in COMMANDS:
        raise InvalidConfigError(f"config key 'command' must be one of {COMMANDS}, got {cmd!r}")

    target = raw.get("target", "custom_1d" if cmd == "compare-1d" else None)
    if target is None:
        raise InvalidConfigError("config key 'target' is required")
    if target not in TARGET_IDS:
        raise InvalidConfigError(f"config key 'target' must be one of {TARGET_IDS}, got {target!r}")

    n = _want_int("n", raw.get("n", 100), minimum=1)
    n_test = _want_int("n_test", raw.get("n_test", 100), minimum=1)
    widths = _want_int_list("widths", raw.get("widths", [1024]))
    if not widths:
        raise InvalidConfigError("config key 'widths' must be non-empty")
    if any(w < 1 for w in widths):
        raise InvalidConfigError("config key 'widths' entries must be positive")
    kappa = _want_number("kappa", raw.get("kappa", 1.0))
    if not 0.0 < kappa <= 1.0:
        raise InvalidConfigError(f"config key 'kappa' must lie in (0, 1], got {kappa}")
    eta_raw = raw.get("eta", None)
    if eta_raw in (None, "auto"):
        eta = None
    else:
        eta = _want_number("eta", eta_raw)
        if eta < 0.0 or not math.isfinite(eta):
            raise InvalidConfigError(f"config key 'eta' must be nonnegative, got {eta}")
    steps = _want_int("steps", raw.get("steps", 1000), minimum=1)
    seeds = _want_int_list("seeds", raw.get("seeds", [1]))
    if not seeds:
        raise InvalidConfigError("config key 'seeds' must be non-empty")
    mode = raw.get("mode", "box")
    if mode not in ("box", "unit_norm"):
        raise InvalidConfigError(f"config key 'mode' must be 'box' or 'unit_norm', got {mode!r}")
    stride_raw = raw.get("probe_stride", None)
    stride = None if stride_raw is None else _want_int("probe_stride", stride_raw, minimum=1)
    output_dir = raw.get("output_dir", ".")
    if not isinstance(output_dir, str):
        raise InvalidConfigError("config key 'output_dir' must be a string")
    expression = raw.get("expression", None)
    if expression is not None and not isinstance(expression, str):
        raise InvalidConfigError("config key 'expression' must be a string")

    return ExperimentConfig(command=cmd, target=target, n=n, n_test=n_test,
                            widths=widths, kappa=kappa, eta=eta, steps=steps,
                            seeds=seeds, mode=mode, probe_stride=stride,
                            output_dir=output_dir, expression=expression)


def effective_probe_stride(cfg: ExperimentConfig) -> int:
    return cfg.probe_stride if cfg.probe_stride is not None else max(1, cfg.steps // 100)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def emit_report(records, fmt: str, path) -> None:
    """Write probe-step records as CSV (exact documented header) or JSON."""
    path = str(path)
    if fmt == "csv":
        lines = [",".join(RUN_REPORT_FIELDS)]
        for rec in records:
            d = asdict(rec)
            lines.append(",".join(_fmt(d[k]) for k in RUN_REPORT_FIELDS))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    elif fmt == "json":
        payload = [{k: asdict(rec)[k] for k in RUN_REPORT_FIELDS} for rec in records]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    else:
        raise InvalidConfigError(f"unknown report format {fmt!r}")


def read_report(path, fmt: str = "csv") -> list[RunRecord]:
    path = str(path)
    if fmt == "csv":
        with open(path) as fh:
            lines = [ln for ln in fh.read().split("\n") if ln]
        if not lines or lines[0] != ",".join(RUN_REPORT_FIELDS):
            raise ParseError("bad report header", line=1)
        out = []
        for lineno, ln in enumerate(lines[1:], start=2):
            parts = ln.split(",")
            if len(parts) != len(RUN_REPORT_FIELDS):
                raise ParseError(f"expected {len(RUN_REPORT_FIELDS)} fields", line=lineno)
            try:
                out.append(RunRecord(step=int(parts[0]),
                                     **{k: float(v) for k, v in
                                        zip(RUN_REPORT_FIELDS[1:], parts[1:])}))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
        return out
    if fmt == "json":
        with open(path) as fh:
            payload = json.load(fh)
        return [RunRecord(**row) for row in payload]
    raise InvalidConfigError(f"unknown report format {fmt!r}")


def run_records(traj: TrainTrajectory) -> list[RunRecord]:
    """Probe-step rows of a trajectory in report order."""
    out = []
    for rec in traj.probe_records():
        out.append(RunRecord(step=rec.step, loss_1bit=rec.loss_1bit,
                             loss_fp=rec.loss_fp, lambda_min=rec.lambda_min,
                             lambda_max=rec.lambda_max, gram_drift=rec.gram_drift,
                             max_train_diff=rec.max_train_diff,
                             max_test_diff=rec.max_test_diff,
                             flip_fraction=rec.flip_fraction,
                             weight_drift=rec.weight_drift))
    return out


# ---------------------------------------------------------------------------
# Cells: one (width, seed) training run, picklable for worker processes
# ---------------------------------------------------------------------------

@dataclass
class CellResult:
    width: int
    seed: int
    failed: bool = False
    failed_step: int | None = None
    eta: float | None = None
    param_count: int = 0
    min_loss_1bit: float | None = None
    min_loss_fp: float | None = None
    initial_loss_1bit: float | None = None
    final_loss_1bit: float | None = None
    initial_loss_fp: float | None = None
    final_loss_fp: float | None = None
    init_lambda_min: float | None = None
    init_lambda_max: float | None = None
    init_gram_fro: float | None = None
    min_lambda_ratio: float | None = None
    rel_gram_drift_final: float | None = None
    diff_train_init: float | None = None
    diff_test_init: float | None = None
    diff_train_final: float | None = None
    diff_test_final: float | None = None
    probe_rows: list = field(default_factory=list)


def _cell_datasets(cfg: ExperimentConfig, seed: int):
    ds = generate_dataset(target_function(cfg.target), cfg.n, seed, cfg.mode)
    return split(ds, cfg.n_test, mix_seed(seed, "split"))


def _run_cell(args: tuple) -> CellResult:
    cfg_dict, width, seed = args
    cfg = ExperimentConfig(**cfg_dict)
    result = CellResult(width=width, seed=seed)
    train_ds, test_ds = _cell_datasets(cfg, seed)
    d = train_ds.d
    result.param_count = d * width + width
    hp = Hyperparams(eta=cfg.eta, steps=cfg.steps, kappa=cfg.kappa,
                     seed=mix_seed(seed, width))
    diag = Diagnostics(kernel_probes=True, probe_stride=effective_probe_stride(cfg))
    try:
        traj = train_twin(train_ds, test_ds, d, width, hp, diag)
    except DivergenceError as exc:
        result.failed = True
        result.failed_step = exc.step
        return result
    result.eta = traj.eta
    result.init_lambda_min = traj.init_lambda_min
    result.init_lambda_max = traj.init_lambda_max
    result.init_gram_fro = traj.init_gram_fro
    result.min_loss_1bit = float(traj.losses_1bit().min())
    result.min_loss_fp = float(traj.losses_fp().min())
    result.initial_loss_1bit = traj.records[0].loss_1bit
    result.final_loss_1bit = traj.records[-1].loss_1bit
    result.initial_loss_fp = traj.records[0].loss_fp
    result.final_loss_fp = traj.records[-1].loss_fp
    probes = traj.probe_records()
    if traj.init_lambda_min and traj.init_lambda_min > 0.0:
        result.min_lambda_ratio = min(r.lambda_min / traj.init_lambda_min for r in probes)
    if traj.init_gram_fro and traj.init_gram_fro > 0.0:
        result.rel_gram_drift_final = probes[-1].gram_drift / traj.init_gram_fro
    first, last = traj.records[0], traj.records[-1]
    result.diff_train_init = first.max_train_diff
    result.diff_test_init = first.max_test_diff
    result.diff_train_final = last.max_train_diff
    result.diff_test_final = last.max_test_diff
    result.probe_rows = [tuple(getattr(rec, k) for k in RUN_REPORT_FIELDS)
                         for rec in run_records(traj)]
    return result


def _run_cells(cfg: ExperimentConfig, workers: int) -> list[CellResult]:
    cells = sorted((w, s) for w in cfg.widths for s in cfg.seeds)
    args = [(asdict(cfg), w, s) for w, s in cells]
    if workers <= 1:
        return [_run_cell(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, args))


def _write_cell_reports(cells: list[CellResult], out_dir: str) -> None:
    for cell in cells:
        if cell.failed:
            continue
        records = [RunRecord(int(row[0]), *map(float, row[1:])) for row in cell.probe_rows]
        emit_report(records, "csv",
                    os.path.join(out_dir, f"report_w{cell.width}_s{cell.seed}.csv"))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@dataclass
class SweepReport:
    cells: list[CellResult]
    medians: list[dict]


def _median(values: list[float]) -> float:
    return float(np.median(np.array(values)))


def sweep_width(cfg: ExperimentConfig, workers: int = 1,
                out_dir: str | None = None) -> SweepReport:
    """Run every (width, seed) cell and record min training losses.

    Failed cells (divergence) are flagged rather than aborting the sweep.
    Writes sweep.csv, sweep_summary.csv, and a per-cell probe report.
    """
    if cfg.command != "sweep-width":
        raise InvalidConfigError("sweep_width needs a sweep-width config")
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    cells = _run_cells(cfg, workers)
    lines = ["width,seed,min_loss_1bit,min_loss_fp,param_count,failed"]
    for c in cells:
        lines.append(",".join([str(c.width), str(c.seed), _fmt(c.min_loss_1bit),
                               _fmt(c.min_loss_fp), str(c.param_count),
                               "1" if c.failed else "0"]))
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    medians = []
    for width in sorted(set(cfg.widths)):
        ok = [c for c in cells if c.width == width and not c.failed]
        entry = {"width": width,
                 "param_count": ok[0].param_count if ok else None,
                 "median_min_loss_1bit": _median([c.min_loss_1bit for c in ok]) if ok else None,
                 "median_min_loss_fp": _median([c.min_loss_fp for c in ok]) if ok else None,
                 "failed_cells": sum(1 for c in cells if c.width == width and c.failed)}
        medians.append(entry)
    lines = ["width,param_count,median_min_loss_1bit,median_min_loss_fp,failed_cells"]
    for e in medians:
        lines.append(",".join([str(e["width"]), _fmt(e["param_count"]),
                               _fmt(e["median_min_loss_1bit"]),
                               _fmt(e["median_min_loss_fp"]),
                               str(e["failed_cells"])]))
    with open(os.path.join(out_dir, "sweep_summary.csv"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    _write_cell_reports(cells, out_dir)
    return SweepReport(cells=cells, medians=medians)


def run_train(cfg: ExperimentConfig, workers: int = 1,
              out_dir: str | None = None) -> list[CellResult]:
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    cells = _run_cells(cfg, workers)
    for c in cells:
        if c.failed:
            raise DivergenceError(
                f"cell (width={c.width}, seed={c.seed}) diverged", step=c.failed_step or 0)
    _write_cell_reports(cells, out_dir)
    return cells


def run_similarity(cfg: ExperimentConfig, workers: int = 1,
                   out_dir: str | None = None) -> list[CellResult]:
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    cells = _run_cells(cfg, workers)
    for c in cells:
        if c.failed:
            raise DivergenceError(
                f"cell (width={c.width}, seed={c.seed}) diverged", step=c.failed_step or 0)
    _write_cell_reports(cells, out_dir)
    lines = ["width,seed,eta,diff_train_init,diff_test_init,diff_train_final,diff_test_final"]
    for c in cells:
        lines.append(",".join([str(c.width), str(c.seed), _fmt(c.eta),
                               _fmt(c.diff_train_init), _fmt(c.diff_test_init),
                               _fmt(c.diff_train_final), _fmt(c.diff_test_final)]))
    with open(os.path.join(out_dir, "similarity.csv"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return cells


def run_kernel_probe(cfg: ExperimentConfig, out_dir: str | None = None) -> list[dict]:
    """Init-kernel spectrum per (width, seed); no training."""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for width, seed in sorted((w, s) for w in cfg.widths for s in cfg.seeds):
        train_ds, _ = _cell_datasets(cfg, seed)
        net = init_network(train_ds.d, width, cfg.kappa, mix_seed(seed, width))
        H0 = gram_matrix(train_ds.X, net, "one_bit", step=0)
        lam_min, lam_max = min_max_eigenvalues(H0)
        fro = float(np.sqrt((H0.entries ** 2).sum()))
        rows.append({"width": width, "seed": seed, "lambda_min": lam_min,
                     "lambda_max": lam_max, "fro_norm": fro,
                     "eta_auto": 1.0 / lam_max if lam_max > 0 else None})
    lines = ["width,seed,lambda_min,lambda_max,fro_norm,eta_auto"]
    for r in rows:
        lines.append(",".join([str(r["width"]), str(r["seed"]), _fmt(r["lambda_min"]),
                               _fmt(r["lambda_max"]), _fmt(r["fro_norm"]),
                               _fmt(r["eta_auto"])]))
    with open(os.path.join(out_dir, "kernel.csv"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return rows


def run_generate_data(cfg: ExperimentConfig, out_dir: str | None = None) -> list[str]:
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for seed in cfg.seeds:
        ds = generate_dataset(target_function(cfg.target), cfg.n, seed, cfg.mode)
        _, test = split(ds, cfg.n_test, mix_seed(seed, "split"))
        train_path = os.path.join(out_dir, f"dataset_s{seed}.csv")
        test_path = os.path.join(out_dir, f"test_s{seed}.csv")
        persist_dataset(ds, train_path)
        persist_dataset(test, test_path)
        written.extend([train_path, test_path])
    return written


# --- compare-1d -------------------------------------------------------------

_EXPR_FUNCS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp,
    "log": math.log, "log1p": math.log1p, "sqrt": math.sqrt, "abs": abs,
    "tanh": math.tanh, "sinh": math.sinh, "cosh": math.cosh, "atan": math.atan,
}
_EXPR_NAMES = {"pi": math.pi, "e": math.e}
_ALLOWED_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name,
                  ast.Constant, ast.Load, ast.Add, ast.Sub, ast.Mult, ast.Div,
                  ast.Pow, ast.Mod, ast.USub, ast.UAdd)


def compile_expression(expr: str):
    """Compile a 1-D arithmetic expression of x into a scalar callable.

    Only arithmetic operators, numeric literals, x / pi / e, and a small set
    of math functions are allowed.
    """
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"cannot parse expression {expr!r}: {exc.msg}",
                         line=exc.lineno) from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ParseError(f"disallowed syntax {type(node).__name__!r} in expression")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _EXPR_FUNCS:
                raise ParseError("only builtin math functions may be called")
            if node.keywords:
                raise ParseError("keyword arguments are not allowed in expressions")
        if isinstance(node, ast.Name) and node.id not in ({"x"} | set(_EXPR_FUNCS) | set(_EXPR_NAMES)):
            raise ParseError(f"unknown name {node.id!r} in expression")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ParseError("only numeric literals are allowed in expressions")
    code = compile(tree, "<expression>", "eval")
    env = {"__builtins__": {}} | _EXPR_FUNCS | _EXPR_NAMES

    def fn(x: float) -> float:
        return float(eval(code, env, {"x": float(x)}))

    return fn


def run_compare_1d(cfg: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Train both branches on a 1-D target over [-pi, pi] and tabulate.

    Training inputs are the cfg.n uniformly spaced points; network inputs are
    mapped to the unit box by x -> x/pi (the 1-D net is positively
    homogeneous, so this is a pure reparameterization).  Emits compare1d.csv
    with columns x,y_true,y_1bit,y_fp over a dense grid plus the random test
    points.
    """
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    expr = cfg.expression if cfg.expression is not None else SPIKY_PRESET
    fn = compile_expression(expr)
    target = custom_target(fn)
    seed = cfg.seeds[0]
    width = cfg.widths[0]

    x_train = np.linspace(-math.pi, math.pi, cfg.n)
    y_train = np.array([fn(v) for v in x_train])
    rng = np.random.default_rng(mix_seed(seed, "test1d"))
    x_test = rng.uniform(-math.pi, math.pi, cfg.n_test)
    y_test = np.array([fn(v) for v in x_test])

    meta = DatasetMeta(target=target.id, seed=seed, mode="box", n=cfg.n, d=1)
    train_ds = Dataset(X=(x_train / math.pi)[:, None], y=y_train, meta=meta)
    test_ds = Dataset(X=(x_test / math.pi)[:, None], y=y_test,
                      meta=DatasetMeta(target=target.id, seed=seed, mode="box",
                                       n=cfg.n_test, d=1))
    hp = Hyperparams(eta=cfg.eta, steps=cfg.steps, kappa=cfg.kappa,
                     seed=mix_seed(seed, width))
    traj = train_twin(train_ds, test_ds, 1, width, hp,
                      Diagnostics(kernel_probes=True,
                                  probe_stride=effective_probe_stride(cfg)))

    x_grid = np.linspace(-math.pi, math.pi, COMPARE_GRID_POINTS)
    xs = np.concatenate([x_grid, x_test])
    y_true = np.array([fn(v) for v in xs])
    Xn = (xs / math.pi)[:, None]
    y_1bit = batch_forward(Xn, traj.final_1bit, "one_bit")
    y_fp = batch_forward(Xn, traj.final_fp, "full_precision")

    lines = ["x,y_true,y_1bit,y_fp"]
    for i in range(xs.size):
        lines.append(",".join([repr(float(xs[i])), repr(float(y_true[i])),
                               repr(float(y_1bit[i])), repr(float(y_fp[i]))]))
    with open(os.path.join(out_dir, "compare1d.csv"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    test_slice = slice(COMPARE_GRID_POINTS, None)
    max_gap = float(np.abs(y_1bit[test_slice] - y_fp[test_slice]).max())
    return {"expression": expr, "eta": traj.eta, "rows": int(xs.size),
            "max_test_gap_1bit_vs_fp": max_gap,
            "final_loss_1bit": traj.records[-1].loss_1bit,
            "final_loss_fp": traj.records[-1].loss_fp}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _apply_overrides(raw: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise InvalidConfigError(f"--set expects key=value, got {item!r}")
        key, _, text = item.partition("=")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        raw[key] = value
    return raw


def _write_meta(cfg: ExperimentConfig, out_dir: str, started: float,
                extra: dict | None = None) -> None:
    meta = {
        "command": cfg.command,
        "config": asdict(cfg),
        "versions": {"python": sys.version.split()[0],
                     "numpy": np.__version__,
                     "bitkernel_lab": __version__},
        "wall_time_s": time.time() - started,
        "theory_note": ORDER_OF_MAGNITUDE_NOTE,
    }
    if extra:
        meta.update(extra)
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bitkernel-lab",
        description="1-bit vs full-precision twin training experiments")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to a JSON config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel worker budget for independent cells")
    args = parser.parse_args(argv)

    started = time.time()
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise InvalidConfigError("config must be a JSON object")
        raw = _apply_overrides(raw, args.overrides)
        cfg = parse_config(raw, command=args.command)
        if args.out is not None:
            cfg = replace(cfg, output_dir=args.out)
    except (OSError, json.JSONDecodeError, InvalidConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = cfg.output_dir
    extra: dict = {}
    try:
        if cfg.command == "train":
            cells = run_train(cfg, workers=args.workers, out_dir=out_dir)
            extra["cells"] = [{"width": c.width, "seed": c.seed, "eta": c.eta,
                               "min_loss_1bit": c.min_loss_1bit,
                               "min_loss_fp": c.min_loss_fp} for c in cells]
        elif cfg.command == "sweep-width":
            report = sweep_width(cfg, workers=args.workers, out_dir=out_dir)
            extra["medians"] = report.medians
        elif cfg.command == "similarity":
            run_similarity(cfg, workers=args.workers, out_dir=out_dir)
        elif cfg.command == "kernel-probe":
            run_kernel_probe(cfg, out_dir=out_dir)
        elif cfg.command == "generate-data":
            extra["files"] = run_generate_data(cfg, out_dir=out_dir)
        elif cfg.command == "compare-1d":
            extra["compare_1d"] = run_compare_1d(cfg, out_dir=out_dir)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3
    except ParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BitkernelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    _write_meta(cfg, out_dir, started, extra)
    return 0


if __name__ == "__main__":
    sys.exit(main())
