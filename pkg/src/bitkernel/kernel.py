"""Empirical tangent kernel of the 1-bit network and its diagnostics.

The Gram matrix at step t is

    H_ij(t) = kappa^2 * (1/m) * <x_i, x_j> * sum_r g_ir * g_jr

where g_ir is the gate indicator of neuron r on input i (one_bit or
full_precision mode).  Co-activation counts are accumulated as exact
integers before the kappa^2/m scaling, so entries carry no float
accumulation error from the sum over r and the matrix is symmetric by
construction.  The flipped-kernel variant restricts the neuron sum of row i
to a per-row index set and is deliberately not symmetrized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidInputError, NumericalError
from .net import NetworkState, ActivationPattern, PATTERN_MODES, _as_batch, activation_pattern
from .errors import InvalidConfigError

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Symmetric n x n kernel with provenance (step index, gate mode)."""

    entries: np.ndarray
    step: int
    mode: str

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class KernelReport:
    lambda_min: float
    lambda_max: float
    drift_from_init: float
    flip_counts: np.ndarray | None = None

    def __post_init__(self):
        if self.lambda_min > self.lambda_max:
            raise InvalidInputError("lambda_min must not exceed lambda_max")
        if self.drift_from_init < 0.0:
            raise InvalidInputError("drift_from_init must be nonnegative")


def _pairwise_input_products(X: np.ndarray) -> np.ndarray:
    # <x_i, x_j> with per-lane last-axis sums: exactly symmetric because the
    # per-entry products commute and every lane reduces in the same order.
    return (X[:, None, :] * X[None, :, :]).sum(axis=2)


def gram_from_gates(X: np.ndarray, gates: np.ndarray, kappa: float, m: int,
                    step: int, mode: str) -> GramMatrix:
    """Assemble H from precomputed gate indicators (n x m boolean)."""
    gi = gates.astype(np.int64)
    counts = gi @ gi.T
    entries = (kappa * kappa / m) * _pairwise_input_products(X) * counts
    return GramMatrix(entries=entries, step=step, mode=mode)


def gram_matrix(X, net: NetworkState, mode: str, step: int = 0) -> GramMatrix:
    """The empirical kernel of `net` on the rows of X in the given gate mode."""
    if mode not in PATTERN_MODES:
        raise InvalidConfigError(f"gram mode must be one of {PATTERN_MODES}, got {mode!r}")
    Xb = _as_batch(X, net.dim)
    pattern = activation_pattern(Xb, net, mode, step=step)
    return gram_from_gates(Xb, pattern.indicators, net.kappa, net.width, step, mode)


def gram_flipped(X, net_t: NetworkState, flip_sets, step: int = 0,
                 mode: str = "one_bit") -> GramMatrix:
    """H with row i's neuron sum restricted to flip_sets[i] (not symmetrized)."""
    if mode not in PATTERN_MODES:
        raise InvalidConfigError(f"gram mode must be one of {PATTERN_MODES}, got {mode!r}")
    Xb = _as_batch(X, net_t.dim)
    n = Xb.shape[0]
    m = net_t.width
    if len(flip_sets) != n:
        raise DimensionError(f"expected {n} flip sets, got {len(flip_sets)}")
    keep = np.zeros((n, m), dtype=bool)
    for i, idx in enumerate(flip_sets):
        ids = np.asarray(list(idx), dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= m):
            raise InvalidInputError(f"flip set {i} contains indices outside [0, {m})")
        keep[i, ids] = True
    gates = activation_pattern(Xb, net_t, mode, step=step).indicators
    gi = gates.astype(np.int64)
    counts = (gi * keep) @ gi.T
    entries = (net_t.kappa ** 2 / m) * _pairwise_input_products(Xb) * counts
    return GramMatrix(entries=entries, step=step, mode=mode)


def _jacobi_eigenvalues(A: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps run until every off-diagonal magnitude drops below
    1e-12 * ||A||_F, at most 100 sweeps.  Rotations whose pivot is already
    below the threshold are skipped; that never prevents convergence since
    the stopping test checks all off-diagonal entries.
    """
    n = A.shape[0]
    if n == 1:
        return A[0, :1].copy()
    M = A.copy()
    fro = float(np.sqrt((A * A).sum()))
    thresh = JACOBI_TOL * fro
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(JACOBI_MAX_SWEEPS):
        if np.abs(M[off_mask]).max() < thresh or fro == 0.0:
            return np.diagonal(M).copy()
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = M[p, q]
                if abs(apq) < thresh:
                    continue
                tau = (M[q, q] - M[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0.0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                rp = M[p, :].copy()
                rq = M[q, :].copy()
                M[p, :] = c * rp - s * rq
                M[q, :] = s * rp + c * rq
                cp = M[:, p].copy()
                cq = M[:, q].copy()
                M[:, p] = c * cp - s * cq
                M[:, q] = s * cp + c * cq
    if np.abs(M[off_mask]).max() < thresh:
        return np.diagonal(M).copy()
    raise NumericalError(
        f"Jacobi sweep did not converge in {JACOBI_MAX_SWEEPS} sweeps")


def min_max_eigenvalues(G) -> tuple[float, float]:
    """(lambda_min, lambda_max) of a symmetric matrix via cyclic Jacobi."""
    A = G.entries if isinstance(G, GramMatrix) else np.ascontiguousarray(G, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("eigenvalue input must be a square matrix")
    if A.shape[0] == 0:
        raise InvalidInputError("matrix must be at least 1 x 1")
    if np.abs(A - A.T).max(initial=0.0) > 1e-12:
        raise InvalidInputError("matrix is asymmetric beyond 1e-12")
    eig = _jacobi_eigenvalues(A)
    return float(eig.min()), float(eig.max())


def gram_drift(G_t: GramMatrix, G_0: GramMatrix) -> float:
    """Frobenius norm of H(t) - H(0)."""
    if G_t.entries.shape != G_0.entries.shape:
        raise DimensionError("Gram matrices differ in shape")
    diff = G_t.entries - G_0.entries
    return float(np.sqrt((diff * diff).sum()))


def pattern_flip_counts(P_0: ActivationPattern, P_t: ActivationPattern) -> np.ndarray:
    """Per-input count of neurons whose gate differs between the two patterns."""
    if P_0.indicators.shape != P_t.indicators.shape:
        raise DimensionError("patterns differ in shape")
    if P_0.mode != P_t.mode:
        raise InvalidInputError(f"pattern modes differ: {P_0.mode} vs {P_t.mode}")
    return (P_0.indicators != P_t.indicators).sum(axis=1).astype(np.int64)
