"""Two-layer networks: the 1-bit model, its STE surrogate, and the twin.

All three share the architecture

    f(x) = kappa * (1/sqrt(m)) * sum_r a_r * act_r(x)

with a frozen +-1 output layer `a` and hidden weight columns w_r.  The modes
differ only in the per-neuron activation:

    one_bit        ReLU(dq(<q(w_r), x>))      quantized preactivation
    full_precision ReLU(<w_r, x>)
    ste            1{dq(<q(w_r), x>) >= 0} * <w_r, x>

Preactivations exactly at zero count as active.  Batched evaluation is
bit-identical to looping the scalar operation: the inner-product kernels use
unoptimized einsum, whose per-output reduction order depends only on the
contracted axis, so each (input, neuron) lane sums identically regardless of
batch size.  No BLAS kernels (whose blocking varies with shape and thread
count) are involved anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidConfigError, InvalidInputError

MODES = ("one_bit", "full_precision", "ste")
PATTERN_MODES = ("one_bit", "full_precision")


@dataclass(frozen=True, eq=False)
class NetworkState:
    """Hidden weights W (d x m, columns are neurons), fixed signs a, scale kappa."""

    W: np.ndarray
    a: np.ndarray
    kappa: float
    sigma: float = 1.0

    def __post_init__(self):
        if self.W.ndim != 2:
            raise InvalidInputError("W must be a d x m matrix")
        if not np.isfinite(self.W).all():
            raise InvalidInputError("W contains non-finite entries")
        if self.a.shape != (self.W.shape[1],):
            raise DimensionError("a must have one sign per hidden neuron")
        if not np.isin(self.a, (-1.0, 1.0)).all():
            raise InvalidInputError("a must contain only -1 and +1")
        _check_kappa(self.kappa)

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def width(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True, eq=False)
class ActivationPattern:
    """Per-(input, neuron) gate indicators for one mode at one step."""

    indicators: np.ndarray
    step: int
    mode: str

    def __post_init__(self):
        if self.indicators.ndim != 2 or self.indicators.dtype != np.bool_:
            raise InvalidInputError("indicators must be a boolean n x m matrix")
        if self.mode not in PATTERN_MODES:
            raise InvalidConfigError(f"unknown pattern mode {self.mode!r}")


def _check_kappa(kappa: float):
    if not (0.0 < kappa <= 1.0):
        raise InvalidConfigError(f"kappa must lie in (0, 1], got {kappa}")


def init_network(d: int, m: int, kappa: float, seed: int,
                 sigma: float = 1.0) -> NetworkState:
    """Draw W ~ N(0, sigma^2) entrywise and a ~ Uniform{-1,+1}, reproducibly.

    The same seed yields a bit-identical state.  W is drawn first, then a.
    """
    if d < 1 or m < 1:
        raise InvalidConfigError("d and m must be positive")
    _check_kappa(kappa)
    if sigma <= 0.0:
        raise InvalidConfigError("sigma must be positive")
    rng = np.random.default_rng(seed)
    W = sigma * rng.standard_normal((d, m))
    a = np.where(rng.integers(0, 2, size=m) == 1, 1.0, -1.0)
    return NetworkState(W=W, a=a, kappa=float(kappa), sigma=float(sigma))


# ---------------------------------------------------------------------------
# Batched kernels.  These mirror binq.quantize / binq.dequantize_dot column by
# column; tests assert the bitwise agreement.
# ---------------------------------------------------------------------------

def _quant_columns(W: np.ndarray):
    """Quantization statistics of every column of W.

    Returns (mask, means, scales): mask[r, k] is True where column r's
    centered entry is >= 0, with constant columns degraded exactly like
    binq.quantize (all +1, scale 0, mean = the constant).
    """
    Wt = np.ascontiguousarray(W.T)
    means = Wt.mean(axis=1)
    centered = Wt - means[:, None]
    scales = np.sqrt(np.mean(centered * centered, axis=1))
    mask = centered >= 0.0
    const = np.all(Wt == Wt[:, :1], axis=1)
    if const.any():
        means[const] = Wt[const, 0]
        scales[const] = 0.0
        mask[const] = True
    return mask, means, scales


def _signs(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 1.0, -1.0)


def _dq_preacts_from_signs(X: np.ndarray, signs: np.ndarray, means: np.ndarray,
                           scales: np.ndarray) -> np.ndarray:
    """dq(<q(w_r), x_i>) for every (i, r); X is n x d, signs is m x d +-1.

    The signed sum multiplies by exact +-1.0, which is bit-identical to
    selecting x_k or -x_k as the scalar quantizer does.
    """
    signed = np.einsum("nd,md->nm", X, signs)
    signed *= scales[None, :]
    signed += X.sum(axis=1)[:, None] * means[None, :]
    return signed


def _dq_preacts(X: np.ndarray, mask: np.ndarray, means: np.ndarray,
                scales: np.ndarray) -> np.ndarray:
    return _dq_preacts_from_signs(X, _signs(mask), means, scales)


def _fp_preacts(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """<w_r, x_i> for every (i, r) with a fixed per-lane reduction order."""
    Wt = np.ascontiguousarray(W.T)
    return np.einsum("nd,md->nm", X, Wt)


def _a_weighted_rowsum(values: np.ndarray, a: np.ndarray) -> np.ndarray:
    return np.einsum("nm,m->n", values, a)


def _combine(values: np.ndarray, net: NetworkState) -> np.ndarray:
    # kappa is applied last as a single scalar multiply, so outputs are
    # exactly linear in kappa for identical W, a, x.
    return net.kappa * (_a_weighted_rowsum(values, net.a) / np.sqrt(net.width))


def _as_batch(X, d: int) -> np.ndarray:
    arr = np.ascontiguousarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"X must be a 2-D n x d matrix, got ndim={arr.ndim}")
    if arr.shape[1] != d:
        raise DimensionError(f"input dimension {arr.shape[1]} != network dimension {d}")
    if not np.isfinite(arr).all():
        raise InvalidInputError("X contains non-finite entries")
    return arr


def batch_forward(X, net: NetworkState, mode: str) -> np.ndarray:
    """Evaluate the network on every row of X in the given mode."""
    if mode not in MODES:
        raise InvalidConfigError(f"unknown mode {mode!r}")
    Xb = _as_batch(X, net.dim)
    if mode == "full_precision":
        values = np.maximum(_fp_preacts(Xb, net.W), 0.0)
    else:
        mask, means, scales = _quant_columns(net.W)
        dq = _dq_preacts(Xb, mask, means, scales)
        if mode == "one_bit":
            values = np.maximum(dq, 0.0)
        else:
            values = np.where(dq >= 0.0, _fp_preacts(Xb, net.W), 0.0)
    return _combine(values, net)


def _scalar(x, net: NetworkState, mode: str) -> float:
    xv = np.ascontiguousarray(x, dtype=np.float64)
    if xv.ndim != 1:
        raise DimensionError("x must be a 1-D vector")
    return float(batch_forward(xv[None, :], net, mode)[0])


def forward_1bit(x, net: NetworkState) -> float:
    """kappa * (1/sqrt(m)) * sum_r a_r * ReLU(dq(<q(w_r), x>))."""
    return _scalar(x, net, "one_bit")


def forward_fp(x, net: NetworkState) -> float:
    """The full-precision twin: kappa * (1/sqrt(m)) * sum_r a_r * ReLU(<w_r, x>)."""
    return _scalar(x, net, "full_precision")


def forward_ste(x, net: NetworkState) -> float:
    """The STE surrogate: 1-bit gates passing through full-precision values."""
    return _scalar(x, net, "ste")


def activation_pattern(X, net: NetworkState, mode: str,
                       step: int = 0) -> ActivationPattern:
    """Gate indicators 1{preactivation >= 0} for the given mode."""
    if mode not in PATTERN_MODES:
        raise InvalidConfigError(f"pattern mode must be one of {PATTERN_MODES}, got {mode!r}")
    Xb = _as_batch(X, net.dim)
    if mode == "one_bit":
        mask, means, scales = _quant_columns(net.W)
        pre = _dq_preacts(Xb, mask, means, scales)
    else:
        pre = _fp_preacts(Xb, net.W)
    return ActivationPattern(indicators=pre >= 0.0, step=step, mode=mode)
