"""Directional secant machinery.

Deterministic part: the per-parameter rates t_i = d_i / (h_i . d) of a directional
Newton step and their finite-difference (secant) estimate t_i = delta_i / alpha_i.
Stochastic part: the expected rate built from moving averages of the applied steps
delta, the gradient changes alpha and their product.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from adasecant.errors import DegenerateStatisticsError, LayoutError, NumericsError
from adasecant.services.numerics import BlockLayout, ParamVector
from adasecant.services.stats import MovingAverageState, TAU_RESET, ema_update

EPS = 1e-7
ETA_MIN = 1e-8


@dataclass(frozen=True)
class SecantStats:
    delta_stats: MovingAverageState
    alpha_stats: MovingAverageState
    cross: MovingAverageState

    @classmethod
    def from_pair(
        cls, delta: npt.ArrayLike, alpha: npt.ArrayLike, tau: npt.ArrayLike = TAU_RESET
    ) -> "SecantStats":
        delta = np.asarray(delta, dtype=np.float64)
        alpha = np.asarray(alpha, dtype=np.float64)
        return cls(
            delta_stats=MovingAverageState.from_sample(delta, tau),
            alpha_stats=MovingAverageState.from_sample(alpha, tau),
            cross=MovingAverageState.from_sample(alpha * delta, tau),
        )

    def with_tau(self, tau: npt.ArrayLike) -> "SecantStats":
        return SecantStats(
            delta_stats=self.delta_stats.with_tau(tau),
            alpha_stats=self.alpha_stats.with_tau(tau),
            cross=self.cross.with_tau(tau),
        )


def push_pair(stats: SecantStats, delta: npt.ArrayLike, alpha: npt.ArrayLike) -> SecantStats:
    delta = np.asarray(delta, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    return SecantStats(
        delta_stats=ema_update(stats.delta_stats, delta),
        alpha_stats=ema_update(stats.alpha_stats, alpha),
        cross=ema_update(stats.cross, alpha * delta),
    )


def block_normalize(g: ParamVector, layout: BlockLayout) -> ParamVector:
    """Divide every block of ``g`` by its own L2 norm; all-zero blocks stay zero."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape[0] != layout.size:
        raise LayoutError(f"gradient of length {g.shape[0]} does not match layout of size {layout.size}")
    d = np.zeros_like(g)
    for block in layout.slices():
        part = g[block]
        peak = np.max(np.abs(part))
        if peak == 0:
            continue
        # pre-scaling by the peak keeps the squared sum in range
        scaled = part / peak
        d[block] = scaled / np.sqrt(np.dot(scaled, scaled))
    return d


def secant_rate_deterministic(delta: npt.ArrayLike, alpha: npt.ArrayLike, eps: float = EPS) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(np.abs(alpha) <= eps):
        raise DegenerateStatisticsError("vanishing directional curvature: |alpha| <= eps")
    return np.asarray(delta, dtype=np.float64) / alpha


def directional_rates(hess_dir_prod: ParamVector, d: ParamVector) -> np.ndarray:
    hess_dir_prod = np.asarray(hess_dir_prod, dtype=np.float64)
    if np.any(hess_dir_prod == 0):
        index = int(np.flatnonzero(hess_dir_prod == 0)[0])
        raise DegenerateStatisticsError(f"zero curvature along d at parameter {index}")
    return np.asarray(d, dtype=np.float64) / hess_dir_prod


def directional_newton_step(
    theta: ParamVector,
    grad: ParamVector,
    hess_dir_prod: ParamVector,
    d: ParamVector,
) -> ParamVector:
    """Update delta_i = -d_i grad_i / (h_i . d); apply as theta + delta."""
    n = np.asarray(theta).shape[0]
    for name, arr in (("grad", grad), ("hess_dir_prod", hess_dir_prod), ("d", d)):
        if np.asarray(arr).shape[0] != n:
            raise NumericsError(f"{name} has length {np.asarray(arr).shape[0]}, expected {n}")
    return -directional_rates(hess_dir_prod, d) * np.asarray(grad, dtype=np.float64)


def alpha_update(g_curr: ParamVector, g_prev: ParamVector) -> ParamVector:
    g_curr = np.asarray(g_curr, dtype=np.float64)
    g_prev = np.asarray(g_prev, dtype=np.float64)
    if g_curr.shape != g_prev.shape:
        raise NumericsError(f"gradient lengths differ: {g_curr.shape} vs {g_prev.shape}")
    return g_curr - g_prev


def _apply_fallback(
    eta: np.ndarray, stats: SecantStats, fallback: Optional[float]
) -> np.ndarray:
    degenerate = stats.alpha_stats.second_moment <= 0
    if not np.any(degenerate):
        return eta
    if fallback is None:
        raise DegenerateStatisticsError("alpha second moment is zero")
    return np.where(degenerate, fallback, eta)


def expected_rate(
    stats: SecantStats,
    eps: float = EPS,
    eta_min: float = ETA_MIN,
    fallback: Optional[float] = None,
) -> np.ndarray:
    """sqrt(E[d^2]) / sqrt(E[a^2]) - E[a d] / E[a^2], floored at ``eta_min``."""
    alpha_sq = stats.alpha_stats.second_moment
    eta = (
        np.sqrt(stats.delta_stats.second_moment) / (np.sqrt(alpha_sq) + eps)
        - stats.cross.mean / (alpha_sq + eps)
    )
    return _apply_fallback(np.maximum(eta, eta_min), stats, fallback)


def expected_rate_cov(
    stats: SecantStats,
    eps: float = EPS,
    eta_min: float = ETA_MIN,
    fallback: Optional[float] = None,
) -> np.ndarray:
    """Covariance form: subtracts cov(a, d) = E[a d] - E[a] E[d] instead of E[a d]."""
    alpha_sq = stats.alpha_stats.second_moment
    cov = stats.cross.mean - stats.alpha_stats.mean * stats.delta_stats.mean
    eta = np.sqrt(stats.delta_stats.second_moment) / (np.sqrt(alpha_sq) + eps) - cov / (alpha_sq + eps)
    return _apply_fallback(np.maximum(eta, eta_min), stats, fallback)
