"""Per-parameter variance reduction of stochastic gradients.

The corrected gradient blends the fresh sample with its running mean,

    g_tilde = (g + gamma * E[g]) / (1 + gamma) = beta * g + (1 - beta) * E[g],

with beta = 1 / (1 + gamma). The blend weight is estimated online as the ratio of the
root mean squares of two product streams, which keeps it nonnegative, and is capped
at ``gamma_cap``.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt

from adasecant.errors import DegenerateStatisticsError, NumericsError
from adasecant.services.stats import MovingAverageState, TAU_RESET, ema_update

GAMMA_CAP = 1.8
EPS = 1e-7


@dataclass(frozen=True)
class GammaStats:
    num: MovingAverageState
    den: MovingAverageState
    gamma_cap: float = GAMMA_CAP

    def __post_init__(self) -> None:
        if self.gamma_cap <= 0:
            raise NumericsError(f"gamma_cap must be > 0, got {self.gamma_cap}")

    @classmethod
    def from_terms(
        cls,
        num_term: npt.ArrayLike,
        den_term: npt.ArrayLike,
        tau: npt.ArrayLike = TAU_RESET,
        gamma_cap: float = GAMMA_CAP,
    ) -> "GammaStats":
        return cls(
            num=MovingAverageState.from_sample(num_term, tau),
            den=MovingAverageState.from_sample(den_term, tau),
            gamma_cap=gamma_cap,
        )


def corrected_gradient(g: npt.ArrayLike, mean_g: npt.ArrayLike, gamma: npt.ArrayLike) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(gamma < 0):
        raise NumericsError("gamma must be >= 0")
    return (np.asarray(g, dtype=np.float64) + gamma * np.asarray(mean_g, dtype=np.float64)) / (1.0 + gamma)


def beta_from_gamma(gamma: npt.ArrayLike) -> np.ndarray:
    return 1.0 / (1.0 + np.asarray(gamma, dtype=np.float64))


def beta_objective(beta: float, g: npt.ArrayLike, g_prime: npt.ArrayLike, mean: float) -> float:
    """Empirical E[(beta g + (1 - beta) E[g] - g')^2]."""
    g = np.asarray(g, dtype=np.float64)
    g_prime = np.asarray(g_prime, dtype=np.float64)
    residual = beta * g + (1.0 - beta) * mean - g_prime
    return float(np.mean(residual * residual))


def optimal_beta(g: npt.ArrayLike, g_prime: npt.ArrayLike, mean: float) -> float:
    """Closed-form minimizer of ``beta_objective``: E[(g - m)(g' - m)] / E[(g - m)^2]."""
    g = np.asarray(g, dtype=np.float64)
    g_prime = np.asarray(g_prime, dtype=np.float64)
    if g.shape != g_prime.shape:
        raise NumericsError(f"paired samples differ in shape: {g.shape} vs {g_prime.shape}")
    centered = g - mean
    variance = float(np.mean(centered * centered))
    if variance <= 0:
        raise DegenerateStatisticsError("zero gradient variance; variance reduction is unnecessary")
    return float(np.mean(centered * (g_prime - mean))) / variance


def gamma_terms(
    g: npt.ArrayLike, g_prev: npt.ArrayLike, mean_g: npt.ArrayLike
) -> Tuple[np.ndarray, np.ndarray]:
    g = np.asarray(g, dtype=np.float64)
    g_prev = np.asarray(g_prev, dtype=np.float64)
    mean_g = np.asarray(mean_g, dtype=np.float64)
    return (g - g_prev) * (g - mean_g), (g - mean_g) * (g_prev - mean_g)


def gamma_estimate(stats: Optional[GammaStats], eps: float = EPS) -> np.ndarray:
    """RMS(num) / sqrt(RMS(den)^2 + eps), clipped to [0, gamma_cap]. No statistics yet -> 0."""
    if stats is None:
        return np.array(0.0)
    gamma = np.sqrt(stats.num.second_moment) / np.sqrt(stats.den.second_moment + eps)
    return np.clip(gamma, 0.0, stats.gamma_cap)


def update_gamma_stats(
    stats: GammaStats,
    g: npt.ArrayLike,
    g_prev: npt.ArrayLike,
    mean_g: npt.ArrayLike,
) -> GammaStats:
    num_term, den_term = gamma_terms(g, g_prev, mean_g)
    if not (np.all(np.isfinite(num_term)) and np.all(np.isfinite(den_term))):
        raise NumericsError("non-finite gamma statistics input")
    return GammaStats(
        num=ema_update(stats.num, num_term),
        den=ema_update(stats.den, den_term),
        gamma_cap=stats.gamma_cap,
    )
