"""Target functions, the special functions they need, and dataset handling.

Six built-in regression targets of increasing difficulty are provided, from
a bilinear toy (f3) up to a combination of Lambert W and Gamma terms (f6).
Argument indexing follows the function bodies: f1-f3 use their arguments in
declared order, while the bodies of f4-f6 address x0..x3, i.e. the first
declared argument is x0.

Datasets come in two flavors: `box` samples inputs uniformly from
[-1, 1]^d and keeps raw targets; `unit_norm` rescales every input row to
unit length and divides the targets by their max magnitude so that
||x_i|| = 1 and |y_i| <= 1 hold exactly as the kernel theory assumes.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import (DimensionError, DomainError, InvalidConfigError,
                     InvalidInputError, ParseError, PoleError)
from .seeding import mix_seed

DATASET_MODES = ("box", "unit_norm")
REJECTION_CAP_FACTOR = 100

_BRANCH_POINT = -1.0 / math.e

# Lanczos approximation, g = 7 with 9 coefficients (double precision set).
_LANCZOS_G = 7.0
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def lambert_w(z: float) -> float:
    """Principal-branch Lambert W by Halley iteration.

    Initial guess: the branch-point expansion
    W ~ -1 + p - p^2/3 + 11 p^3/72 with p = sqrt(2 (e z + 1)) for z <= -0.25,
    the Maclaurin series z - z^2 + 1.5 z^3 for |z| small, ln(1+z) for
    moderate z, and ln z - ln ln z asymptotically.  Iterates until the step
    stalls; the final residual satisfies |W e^W - z| <= 1e-12 * max(1, |z|).
    """
    z = float(z)
    if not math.isfinite(z):
        raise InvalidInputError("lambert_w argument must be finite")
    if z < _BRANCH_POINT:
        raise DomainError(f"lambert_w undefined for z < -1/e, got {z}")
    if z == 0.0:
        return 0.0
    if z <= -0.25:
        p = math.sqrt(max(0.0, 2.0 * (math.e * z + 1.0)))
        if p == 0.0:
            return -1.0
        w = -1.0 + p - p * p / 3.0 + 11.0 * p ** 3 / 72.0
    elif z < 1.0:
        w = z * (1.0 - z + 1.5 * z * z)
    elif z < 10.0:
        w = math.log1p(z)
    else:
        lz = math.log(z)
        w = lz - math.log(lz)
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - z
        denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
        step = f / denom
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


def gamma_fn(z: float) -> float:
    """Gamma via the Lanczos approximation, reflection formula for z < 0.5."""
    z = float(z)
    if not math.isfinite(z):
        raise InvalidInputError("gamma_fn argument must be finite")
    if z <= 0.0 and z == math.floor(z):
        raise PoleError(f"gamma has a pole at non-positive integer {z}")
    if z < 0.5:
        return math.pi / (math.sin(math.pi * z) * gamma_fn(1.0 - z))
    z -= 1.0
    acc = _LANCZOS_COEFFS[0]
    for i, c in enumerate(_LANCZOS_COEFFS[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def _f1(x: np.ndarray) -> float:
    return math.exp(float(np.mean(np.sin(math.pi * x / 2.0) ** 2)))


def _f2(x: np.ndarray) -> float:
    return math.log1p(abs(x[0])) + (x[1] ** 2 - x[1]) + math.sin(x[2]) - math.exp(x[3])


def _f3(x: np.ndarray) -> float:
    return x[0] * x[1] - x[2]


def _f4(x: np.ndarray) -> float:
    return x[0] * math.sin(x[1]) + math.cos(x[2]) - 0.5 * x[3]


def _f5(x: np.ndarray) -> float:
    return (x[0] ** 2 / (1.0 + abs(x[1])) - math.exp(x[2]) + math.tanh(x[3])
            + math.sqrt(abs(x[0] * x[2])))


def _f6(x: np.ndarray) -> float:
    arg = x[0] * x[1]
    if arg < _BRANCH_POINT:
        raise DomainError(f"f6: LambertW argument {arg} below -1/e")
    return (lambert_w(arg) + x[2] / math.log1p(math.exp(x[3]))
            - gamma_fn(x[1]) / (1.0 + abs(x[0])))


@dataclass(frozen=True)
class TargetFunction:
    """A named regression target; `fn` is set only for custom 1-D targets."""

    id: str
    arity: int
    fn: Callable[[np.ndarray], float] | None = None


_BUILTINS: dict[str, tuple[int, Callable[[np.ndarray], float]]] = {
    "f1": (5, _f1),
    "f2": (4, _f2),
    "f3": (3, _f3),
    "f4": (4, _f4),
    "f5": (4, _f5),
    "f6": (4, _f6),
}


def target_function(target_id: str) -> TargetFunction:
    """Look up a built-in target by id (f1..f6)."""
    if target_id not in _BUILTINS:
        raise InvalidConfigError(f"unknown target function {target_id!r}")
    arity, _ = _BUILTINS[target_id]
    return TargetFunction(id=target_id, arity=arity)


def custom_target(fn: Callable[[np.ndarray], float]) -> TargetFunction:
    """Wrap a scalar 1-D callable as a custom target."""
    return TargetFunction(id="custom_1d", arity=1, fn=fn)


def eval_target(fn: TargetFunction, x) -> float:
    """Evaluate a target on one input vector."""
    xv = np.ascontiguousarray(x, dtype=np.float64)
    if xv.ndim != 1 or xv.size != fn.arity:
        raise DimensionError(
            f"{fn.id} takes {fn.arity} arguments, got shape {xv.shape}")
    if not np.isfinite(xv).all():
        raise InvalidInputError("target input contains non-finite entries")
    if fn.id == "custom_1d":
        if fn.fn is None:
            raise InvalidConfigError("custom_1d target carries no callable")
        return float(fn.fn(xv))
    _, body = _BUILTINS[fn.id]
    return float(body(xv))


@dataclass(frozen=True)
class DatasetMeta:
    target: str
    seed: int
    mode: str
    n: int
    d: int
    rejections: int = 0


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    meta: DatasetMeta

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.meta == other.meta and np.array_equal(self.X, other.X)
                and np.array_equal(self.y, other.y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def generate_dataset(fn: TargetFunction | str, n: int, seed: int,
                     mode: str = "box") -> Dataset:
    """Sample n labelled points for a target, deterministically per seed.

    Rows whose target evaluation hits a domain error or pole (possible for
    f6) are rejected and redrawn, up to 100 * n attempts.
    """
    if isinstance(fn, str):
        fn = target_function(fn)
    if n < 1:
        raise InvalidConfigError(f"n must be >= 1, got {n}")
    if mode not in DATASET_MODES:
        raise InvalidConfigError(f"mode must be one of {DATASET_MODES}, got {mode!r}")
    d = fn.arity
    rng = np.random.default_rng(seed)
    rows = np.empty((n, d))
    ys = np.empty(n)
    rejections = 0
    cap = REJECTION_CAP_FACTOR * n
    filled = 0
    attempts = 0
    while filled < n:
        if attempts >= cap:
            raise InvalidInputError(
                f"gave up sampling {fn.id} after {cap} attempts "
                f"({rejections} rejections)")
        attempts += 1
        x = rng.uniform(-1.0, 1.0, d)
        if mode == "unit_norm":
            nrm = float(np.sqrt((x * x).sum()))
            if nrm == 0.0:
                rejections += 1
                continue
            x = x / nrm
        try:
            yv = eval_target(fn, x)
        except (DomainError, PoleError):
            rejections += 1
            continue
        rows[filled] = x
        ys[filled] = yv
        filled += 1
    if mode == "unit_norm":
        max_abs = float(np.abs(ys).max())
        if max_abs > 0.0:
            ys = ys / max_abs
    meta = DatasetMeta(target=fn.id, seed=seed, mode=mode, n=n, d=d,
                       rejections=rejections)
    return Dataset(X=rows, y=ys, meta=meta)


def split(ds: Dataset, n_test: int, seed: int,
          mode: str = "independent") -> tuple[Dataset, Dataset]:
    """Train/test split.

    `independent` (the default) leaves ds untouched and draws a fresh test
    set of the same target and generation mode under a seed derived from
    `seed`; `split` partitions the existing rows.
    """
    if mode == "independent":
        if n_test < 1:
            raise InvalidConfigError(f"n_test must be >= 1, got {n_test}")
        if ds.meta.target not in _BUILTINS:
            raise InvalidConfigError(
                "independent split needs a built-in target to regenerate from")
        test = generate_dataset(target_function(ds.meta.target), n_test,
                                mix_seed(seed, "test"), ds.meta.mode)
        return ds, test
    if mode == "split":
        if not 0 < n_test < ds.n:
            raise InvalidConfigError(
                f"n_test must be in (0, {ds.n}) for split mode, got {n_test}")
        rng = np.random.default_rng(seed)
        perm = rng.permutation(ds.n)
        test_idx = np.sort(perm[:n_test])
        train_idx = np.sort(perm[n_test:])
        train = Dataset(X=ds.X[train_idx].copy(), y=ds.y[train_idx].copy(),
                        meta=replace(ds.meta, n=train_idx.size))
        test = Dataset(X=ds.X[test_idx].copy(), y=ds.y[test_idx].copy(),
                       meta=replace(ds.meta, n=test_idx.size))
        return train, test
    raise InvalidConfigError(f"unknown split mode {mode!r}")


def _sidecar_path(path: str) -> str:
    return os.path.splitext(str(path))[0] + ".meta.json"


def persist_dataset(ds: Dataset, path) -> None:
    """Write the samples as CSV (17 significant digits) plus a JSON sidecar."""
    path = str(path)
    header = [f"x{k}" for k in range(ds.d)] + ["y"]
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n):
            writer.writerow([f"{v:.17g}" for v in ds.X[i]] + [f"{ds.y[i]:.17g}"])
    with open(_sidecar_path(path), "w") as fh:
        json.dump({"target": ds.meta.target, "seed": ds.meta.seed,
                   "mode": ds.meta.mode, "n": ds.meta.n, "d": ds.meta.d,
                   "rejections": ds.meta.rejections}, fh, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    """Read a dataset written by persist_dataset; bit-exact round trip."""
    path = str(path)
    side = _sidecar_path(path)
    if not os.path.exists(side):
        raise ParseError(f"missing metadata sidecar {side}")
    with open(side) as fh:
        raw = json.load(fh)
    try:
        meta = DatasetMeta(target=raw["target"], seed=raw["seed"], mode=raw["mode"],
                           n=raw["n"], d=raw["d"], rejections=raw["rejections"])
    except KeyError as exc:
        raise ParseError(f"sidecar {side} is missing key {exc}") from exc
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty dataset file", line=1) from None
        expected = [f"x{k}" for k in range(meta.d)] + ["y"]
        if header != expected:
            raise ParseError(
                f"bad header {header!r}, expected {expected!r}", line=1)
        X = np.empty((meta.n, meta.d))
        y = np.empty(meta.n)
        count = 0
        for lineno, row in enumerate(reader, start=2):
            if count >= meta.n:
                raise ParseError("more rows than the sidecar declares", line=lineno)
            if len(row) != meta.d + 1:
                raise ParseError(
                    f"expected {meta.d + 1} columns, got {len(row)}", line=lineno)
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            X[count] = values[:-1]
            y[count] = values[-1]
            count += 1
        if count != meta.n:
            raise ParseError(f"expected {meta.n} rows, found {count}")
    return Dataset(X=X, y=y, meta=meta)
