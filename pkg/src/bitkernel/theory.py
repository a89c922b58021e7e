"""Closed-form bound and prediction calculators.

Every formula here comes with suppressed big-O / Omega constants; they all
default to 1 and are user-settable through `big_o_constant`.  Outputs are
order-of-magnitude guidance only (the width requirement in particular is
astronomically conservative at desk scale) and are never enforced on runs.
Logarithms are natural throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError

ORDER_OF_MAGNITUDE_NOTE = (
    "order-of-magnitude (constants suppressed in the source analysis)")


@dataclass(frozen=True)
class TheoryParams:
    n: int
    d: int
    m: int
    delta: float
    lam: float
    eta: float
    kappa: float
    epsilon: float
    big_o_constant: float = 1.0

    def __post_init__(self):
        for name in ("n", "d", "m"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be a positive integer")
        if not 0.0 < self.delta < 0.1:
            raise InvalidConfigError(f"delta must lie in (0, 0.1), got {self.delta}")
        if self.lam <= 0.0:
            raise InvalidConfigError("lam must be positive")
        if self.eta <= 0.0:
            raise InvalidConfigError("eta must be positive")
        if not 0.0 < self.kappa <= 1.0:
            raise InvalidConfigError(f"kappa must lie in (0, 1], got {self.kappa}")
        if self.epsilon <= 0.0:
            raise InvalidConfigError("epsilon must be positive")
        if self.big_o_constant <= 0.0:
            raise InvalidConfigError("big_o_constant must be positive")


@dataclass(frozen=True)
class HyperparamRecommendation:
    """Width, learning-rate, and step-count guidance; see module note."""

    m_min: float
    eta_max: float
    T_min: float


def bound_D(p: TheoryParams) -> float:
    """The log factor max{C * sqrt(ln(m d / delta)), 1}."""
    return max(p.big_o_constant * math.sqrt(math.log(p.m * p.d / p.delta)), 1.0)


def predicted_loss_curve(L0: float, eta: float, lam: float, t_max: int) -> np.ndarray:
    """Geometric decay envelope (1 - eta*lam/2)^t * L0 for t = 0..t_max."""
    if L0 < 0.0:
        raise InvalidConfigError("L0 must be nonnegative")
    if t_max < 0:
        raise InvalidConfigError("t_max must be nonnegative")
    rate = eta * lam / 2.0
    if not 0.0 < rate <= 1.0:
        raise InvalidConfigError(
            f"eta*lam/2 must lie in (0, 1] for the decay regime, got {rate}")
    return (1.0 - rate) ** np.arange(t_max + 1) * L0


def recommend_hyperparams(p: TheoryParams) -> HyperparamRecommendation:
    """Width / learning-rate / step-count guidance with constants = C.

    m_min  = C * n^12 d^8 / (lam^8 delta^4 epsilon^4)
    eta_max = C * lam * delta / (kappa^2 n^2 d D)
    T_min  = C * ln(n d D^2 / epsilon) / (eta * lam)
    """
    C = p.big_o_constant
    D = bound_D(p)
    m_min = C * p.n ** 12 * p.d ** 8 / (p.lam ** 8 * p.delta ** 4 * p.epsilon ** 4)
    eta_max = C * p.lam * p.delta / (p.kappa ** 2 * p.n ** 2 * p.d * D)
    T_min = C * math.log(p.n * p.d * D * D / p.epsilon) / (p.eta * p.lam)
    return HyperparamRecommendation(m_min=m_min, eta_max=eta_max, T_min=T_min)


def scaling_law_prediction(N: float, D_data: float, C_compute: float,
                           p: TheoryParams) -> float:
    """max{ D_data^3 d^2.25 / (lam^2 N^0.25),  alpha / exp(eta lam C_compute) }

    with alpha = D_data * d * ln(m d / delta).  N is the parameter count,
    D_data the dataset size, C_compute the total compute.
    """
    if N <= 0.0 or D_data <= 0.0 or C_compute <= 0.0:
        raise InvalidConfigError("N, D_data and C_compute must be positive")
    alpha = D_data * p.d * math.log(p.m * p.d / p.delta)
    term_width = D_data ** 3 * p.d ** 2.25 / (p.lam ** 2 * N ** 0.25)
    # np.exp saturates to inf instead of raising; the compute term then
    # correctly underflows to zero.
    term_compute = alpha / float(np.exp(p.eta * p.lam * C_compute))
    return max(term_width, term_compute)
