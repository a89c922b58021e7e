"""Twin training: synchronized gradient descent on the 1-bit net and its
full-precision counterpart from a shared initialization.

Both branches take full-batch GD steps with the same constant learning
rate.  The 1-bit branch follows the straight-through update

    w_r <- w_r - eta * sum_i (F_i - y_i) * kappa/sqrt(m) * a_r * g_ir * x_i

with residuals from the quantized forward pass and gates g_ir from the
1-bit activation pattern; the twin takes the exact gradient of its own
loss.  Per step the trajectory records both losses, the weight drift of the
1-bit branch, the fraction of gates flipped since initialization, and the
prediction gap max_i |F_i - F'_i| on train and test inputs; kernel spectra
are probed at a configurable stride, and the exact per-step loss change
decomposition can be recorded on demand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DivergenceError, InvalidConfigError, InvalidInputError
from .kernel import gram_from_gates, min_max_eigenvalues, _pairwise_input_products
from .net import (NetworkState, _a_weighted_rowsum, _check_kappa, _combine,
                  _dq_preacts, _dq_preacts_from_signs, _fp_preacts,
                  _quant_columns, _signs, init_network)

DIVERGENCE_LIMIT = 1e12
FALLBACK_ETA = 0.1


@dataclass(frozen=True)
class Hyperparams:
    """Learning rate (None means auto-tune), step count, scale, and seed.

    eta=0 is accepted to express frozen dynamics even though productive
    training requires eta > 0.
    """

    eta: float | None
    steps: int
    kappa: float
    seed: int

    def __post_init__(self):
        if self.eta is not None and (not np.isfinite(self.eta) or self.eta < 0.0):
            raise InvalidConfigError(f"eta must be a finite nonnegative real, got {self.eta}")
        if self.steps < 1:
            raise InvalidConfigError(f"steps must be >= 1, got {self.steps}")
        _check_kappa(self.kappa)


@dataclass(frozen=True)
class Diagnostics:
    """Which optional per-run measurements the trainer collects."""

    kernel_probes: bool = True
    decomposition: bool = False
    probe_stride: int | None = None


@dataclass
class StepRecord:
    step: int
    loss_1bit: float
    loss_fp: float
    weight_drift: float
    flip_fraction: float
    max_train_diff: float
    max_test_diff: float
    lambda_min: float | None = None
    lambda_max: float | None = None
    gram_drift: float | None = None
    decomposition: tuple[float, float, float, float] | None = None


@dataclass
class TrainTrajectory:
    records: list[StepRecord]
    final_1bit: NetworkState
    final_fp: NetworkState
    eta: float
    probe_stride: int
    init_lambda_min: float | None = None
    init_lambda_max: float | None = None
    init_gram_fro: float | None = None
    kernel_mode: str = "one_bit"

    def losses_1bit(self) -> np.ndarray:
        return np.array([r.loss_1bit for r in self.records])

    def losses_fp(self) -> np.ndarray:
        return np.array([r.loss_fp for r in self.records])

    def probe_records(self) -> list[StepRecord]:
        return [r for r in self.records if r.lambda_min is not None]


def _as_response(v, n: int, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size != n:
        raise DimensionError(f"{name} must be a vector of length {n}")
    return arr


def loss(F, y) -> float:
    """Half squared-error 0.5 * sum_i (F_i - y_i)^2."""
    Fv = np.ascontiguousarray(F, dtype=np.float64)
    if Fv.ndim != 1:
        raise DimensionError("F must be a 1-D vector")
    yv = _as_response(y, Fv.size, "y")
    diff = Fv - yv
    return 0.5 * float((diff * diff).sum())


def _gradient_core(X: np.ndarray, resid: np.ndarray, gates: np.ndarray,
                   a: np.ndarray, kappa: float, m: int) -> np.ndarray:
    """d x m matrix with column r = sum_i resid_i * kappa/sqrt(m) * a_r * g_ir * x_i."""
    M = np.where(gates, resid[:, None], 0.0)
    fs = np.einsum("nd,nm->dm", X, M)
    return fs * ((kappa / np.sqrt(m)) * a)[None, :]


def ste_gradient(X, y, net: NetworkState) -> np.ndarray:
    """Straight-through gradient: 1-bit residuals and 1-bit gates."""
    Xb = np.ascontiguousarray(X, dtype=np.float64)
    if Xb.ndim != 2 or Xb.shape[1] != net.dim:
        raise DimensionError("X must be n x d with d matching the network")
    yv = _as_response(y, Xb.shape[0], "y")
    mask, means, scales = _quant_columns(net.W)
    dq = _dq_preacts(Xb, mask, means, scales)
    F = _combine(np.maximum(dq, 0.0), net)
    return _gradient_core(Xb, F - yv, dq >= 0.0, net.a, net.kappa, net.width)


def fp_gradient(X, y, net: NetworkState) -> np.ndarray:
    """Exact gradient of the twin's loss 0.5 * ||F' - y||^2."""
    Xb = np.ascontiguousarray(X, dtype=np.float64)
    if Xb.ndim != 2 or Xb.shape[1] != net.dim:
        raise DimensionError("X must be n x d with d matching the network")
    yv = _as_response(y, Xb.shape[0], "y")
    pre = _fp_preacts(Xb, net.W)
    F = _combine(np.maximum(pre, 0.0), net)
    return _gradient_core(Xb, F - yv, pre >= 0.0, net.a, net.kappa, net.width)


def weight_drift(state_0: NetworkState, state_t: NetworkState) -> float:
    """max_r ||w_r(t) - w_r(0)||_2 over hidden columns."""
    if state_0.W.shape != state_t.W.shape:
        raise DimensionError("network states differ in shape")
    diff = state_t.W - state_0.W
    return float(np.sqrt((diff * diff).sum(axis=0)).max())


def _u_rows(Wt: np.ndarray, mask: np.ndarray, means: np.ndarray,
            scales: np.ndarray) -> np.ndarray:
    """Quantization error vectors, one per row of the m x d weight layout."""
    signs = np.where(mask, 1.0, -1.0)
    return scales[:, None] * signs + means[:, None] - Wt


def _branch_terms(X: np.ndarray, W: np.ndarray):
    """Everything the decomposition needs about one state: gates, value and
    error inner products, and the forward values per neuron."""
    Wt = np.ascontiguousarray(W.T)
    mask, means, scales = _quant_columns(W)
    dq = _dq_preacts(X, mask, means, scales)
    gates = dq >= 0.0
    Pw = np.einsum("nd,md->nm", X, Wt)
    Ut = _u_rows(Wt, mask, means, scales)
    Pu = np.einsum("nd,md->nm", X, Ut)
    return gates, Pw, Pu, np.maximum(dq, 0.0)


def _decomposition_core(X: np.ndarray, y: np.ndarray, a: np.ndarray, kappa: float,
                        W_t: np.ndarray, W_t1: np.ndarray,
                        flipped: np.ndarray) -> tuple[float, float, float, float]:
    m = W_t.shape[1]
    g_t, Pw_t, Pu_t, relu_t = _branch_terms(X, W_t)
    g_t1, Pw_t1, Pu_t1, relu_t1 = _branch_terms(X, W_t1)
    scale = kappa / np.sqrt(m)
    F_t = kappa * (_a_weighted_rowsum(relu_t, a) / np.sqrt(m))
    F_t1 = kappa * (_a_weighted_rowsum(relu_t1, a) / np.sqrt(m))
    resid = F_t - y
    term_w = a[None, :] * (np.where(g_t, Pw_t, 0.0) - np.where(g_t1, Pw_t1, 0.0))
    term_u = a[None, :] * (np.where(g_t, Pu_t, 0.0) - np.where(g_t1, Pu_t1, 0.0))
    weighted_w = term_w * resid[:, None]
    c1 = -scale * float(np.where(~flipped, weighted_w, 0.0).sum())
    c2 = -scale * float(np.where(flipped, weighted_w, 0.0).sum())
    c3 = -scale * float((term_u * resid[:, None]).sum())
    dF = F_t - F_t1
    c4 = 0.5 * float((dF * dF).sum())
    return c1, c2, c3, c4


def _flipped_mask(flip_partition, n: int, m: int) -> np.ndarray:
    """Validate a per-input (kept, flipped) partition and return the flip mask."""
    if len(flip_partition) != n:
        raise DimensionError(f"expected {n} partition pairs, got {len(flip_partition)}")
    flipped = np.zeros((n, m), dtype=bool)
    for i, (kept, flip) in enumerate(flip_partition):
        kept_ids = np.asarray(sorted(kept), dtype=np.int64)
        flip_ids = np.asarray(sorted(flip), dtype=np.int64)
        merged = np.concatenate([kept_ids, flip_ids])
        merged.sort()
        if merged.size != m or not np.array_equal(merged, np.arange(m)):
            raise InvalidInputError(
                f"partition for input {i} is not a disjoint cover of [0, {m})")
        flipped[i, flip_ids] = True
    return flipped


def flip_partition_from_patterns(P_0, P_t) -> list[tuple[np.ndarray, np.ndarray]]:
    """Empirical surrogate partition: flipped = gate differs from step 0."""
    if P_0.indicators.shape != P_t.indicators.shape:
        raise DimensionError("patterns differ in shape")
    changed = P_0.indicators != P_t.indicators
    m = changed.shape[1]
    all_ids = np.arange(m)
    return [(all_ids[~row], all_ids[row]) for row in changed]


def loss_decomposition(state_t: NetworkState, state_t1: NetworkState, X, y,
                       flip_partition) -> tuple[float, float, float, float]:
    """Exact split of L(t+1) - L(t) into (C1, C2, C3, C4).

    C1 and C2 are the STE value terms over the kept and flipped neuron sets,
    C3 collects the quantization-error terms over all neurons, and
    C4 = 0.5 * ||F(t) - F(t+1)||^2.  The identity
    L(t+1) = L(t) + C1 + C2 + C3 + C4 holds for any disjoint cover; only the
    C1/C2 split depends on the partition.
    """
    if state_t.W.shape != state_t1.W.shape:
        raise DimensionError("states differ in shape")
    Xb = np.ascontiguousarray(X, dtype=np.float64)
    if Xb.ndim != 2 or Xb.shape[1] != state_t.W.shape[0]:
        raise DimensionError("X must be n x d with d matching the states")
    yv = _as_response(y, Xb.shape[0], "y")
    flipped = _flipped_mask(flip_partition, Xb.shape[0], state_t.W.shape[1])
    return _decomposition_core(Xb, yv, state_t.a, state_t.kappa,
                               state_t.W, state_t1.W, flipped)


def resolve_eta(user_eta: float | None, lambda_max: float | None) -> float:
    """Auto learning rate: cap at 1/lambda_max(H(0)), fall back to 0.1."""
    cap = (1.0 / lambda_max) if (lambda_max is not None and lambda_max > 0.0) else FALLBACK_ETA
    return cap if user_eta is None else min(user_eta, cap)


def _gram_entries_from_cache(xx: np.ndarray, gates: np.ndarray, kappa: float,
                             m: int) -> np.ndarray:
    """Kernel entries from cached pairwise input products and fresh gates."""
    gi = gates.astype(np.int64)
    return (kappa * kappa / m) * xx * (gi @ gi.T)


def train_twin(data, test, d: int, m: int, hp: Hyperparams,
               diagnostics: Diagnostics = Diagnostics()) -> TrainTrajectory:
    """Run T synchronized GD steps on the 1-bit net and its twin.

    Both branches start from one initialization (identical W(0) and a).
    Raises DivergenceError if either branch's loss leaves [0, 1e12] or stops
    being finite.
    """
    Xtr = np.ascontiguousarray(data.X, dtype=np.float64)
    ytr = np.ascontiguousarray(data.y, dtype=np.float64)
    Xte = np.ascontiguousarray(test.X, dtype=np.float64)
    if Xtr.ndim != 2 or Xtr.shape[1] != d:
        raise DimensionError(f"train inputs must be n x {d}")
    if Xte.ndim != 2 or Xte.shape[1] != d:
        raise DimensionError(f"test inputs must be n x {d}")
    if ytr.shape != (Xtr.shape[0],):
        raise DimensionError("train targets must match train inputs")
    if m < 1:
        raise InvalidConfigError("m must be positive")

    base = init_network(d, m, hp.kappa, hp.seed)
    a = base.a
    kappa = base.kappa
    sqrt_m = np.sqrt(m)
    W0 = base.W.copy()
    W1 = base.W.copy()
    Wfp = base.W.copy()

    T = hp.steps
    stride = diagnostics.probe_stride or max(1, T // 100)
    if stride < 1:
        raise InvalidConfigError("probe_stride must be >= 1")

    xx_train = _pairwise_input_products(Xtr) if diagnostics.kernel_probes else None

    # Train and test rows evaluate through one stacked batch per step; the
    # kernels are row-lane independent, so slicing the stack reproduces the
    # separate evaluations bitwise.
    n_tr = Xtr.shape[0]
    Xall = np.vstack([Xtr, Xte])

    gates0 = None
    H0 = None
    lam0_min = lam0_max = fro0 = None
    records: list[StepRecord] = []
    prev = None  # (W copy, flipped mask) of the previous step, for decomposition

    eta = None
    for t in range(T + 1):
        mask, means, scales = _quant_columns(W1)
        dq_all = _dq_preacts_from_signs(Xall, _signs(mask), means, scales)
        F1_all = kappa * (_a_weighted_rowsum(np.maximum(dq_all, 0.0), a) / sqrt_m)
        fp_all = _fp_preacts(Xall, Wfp)
        Ffp_all = kappa * (_a_weighted_rowsum(np.maximum(fp_all, 0.0), a) / sqrt_m)
        gates_tr = dq_all[:n_tr] >= 0.0
        pre_fp = fp_all[:n_tr]
        F1, F1_te = F1_all[:n_tr], F1_all[n_tr:]
        Ffp, Ffp_te = Ffp_all[:n_tr], Ffp_all[n_tr:]

        loss1 = loss(F1, ytr)
        lossfp = loss(Ffp, ytr)
        for name, val in (("1-bit", loss1), ("full-precision", lossfp)):
            if not np.isfinite(val) or val > DIVERGENCE_LIMIT:
                raise DivergenceError(f"{name} loss diverged at step {t}: {val}", step=t)

        if t == 0:
            gates0 = gates_tr.copy()
            if diagnostics.kernel_probes:
                H0 = gram_from_gates(Xtr, gates_tr, kappa, m, 0, "one_bit")
                lam0_min, lam0_max = min_max_eigenvalues(H0)
                fro0 = float(np.sqrt((H0.entries ** 2).sum()))
            eta = resolve_eta(hp.eta, lam0_max)

        flipped = gates_tr != gates0
        rec = StepRecord(
            step=t,
            loss_1bit=loss1,
            loss_fp=lossfp,
            weight_drift=float(np.sqrt(((W1 - W0) ** 2).sum(axis=0)).max()),
            flip_fraction=float(flipped.sum()) / (flipped.size),
            max_train_diff=float(np.abs(F1 - Ffp).max()),
            max_test_diff=float(np.abs(F1_te - Ffp_te).max()),
        )
        if diagnostics.kernel_probes and (t % stride == 0 or t == T):
            Ht = _gram_entries_from_cache(xx_train, gates_tr, kappa, m)
            rec.lambda_min, rec.lambda_max = min_max_eigenvalues(Ht)
            rec.gram_drift = float(np.sqrt(((Ht - H0.entries) ** 2).sum()))
        if diagnostics.decomposition and prev is not None:
            W_prev, flipped_prev = prev
            records[-1].decomposition = _decomposition_core(
                Xtr, ytr, a, kappa, W_prev, W1, flipped_prev)
        records.append(rec)
        if t == T:
            break

        grad1 = _gradient_core(Xtr, F1 - ytr, gates_tr, a, kappa, m)
        gradfp = _gradient_core(Xtr, Ffp - ytr, pre_fp >= 0.0, a, kappa, m)
        if diagnostics.decomposition:
            prev = (W1.copy(), flipped.copy())
        W1 = W1 - eta * grad1
        Wfp = Wfp - eta * gradfp

    return TrainTrajectory(
        records=records,
        final_1bit=NetworkState(W=W1, a=a, kappa=kappa, sigma=base.sigma),
        final_fp=NetworkState(W=Wfp, a=a, kappa=kappa, sigma=base.sigma),
        eta=eta,
        probe_stride=stride,
        init_lambda_min=lam0_min,
        init_lambda_max=lam0_max,
        init_gram_fro=fro0,
    )
