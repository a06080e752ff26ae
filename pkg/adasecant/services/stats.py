"""Exponential moving averages with a per-parameter adaptive time constant.

Every expectation the optimizer uses is one of these averages. A state holds the
running first and second moments of a stream plus the time constant ``tau``; all
fields are arrays so one state covers every parameter at once (0-d arrays for a
single scalar stream).
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import numpy.typing as npt

from adasecant.errors import DegenerateStatisticsError, NumericsError

TAU_RESET = 2.2


def _as_array(x: npt.ArrayLike) -> np.ndarray:
    return np.array(x, dtype=np.float64)


@dataclass(frozen=True)
class MovingAverageState:
    mean: np.ndarray
    second_moment: np.ndarray
    tau: np.ndarray

    @classmethod
    def create(
        cls,
        mean: npt.ArrayLike = 0.0,
        second_moment: npt.ArrayLike = 0.0,
        tau: npt.ArrayLike = TAU_RESET,
    ) -> "MovingAverageState":
        mean = _as_array(mean)
        second_moment = _as_array(second_moment)
        tau = np.broadcast_to(_as_array(tau), mean.shape).copy()
        if np.any(tau < 1):
            raise NumericsError("tau must be >= 1")
        if np.any(second_moment < 0):
            raise NumericsError("second_moment must be >= 0")
        return cls(mean=mean, second_moment=second_moment, tau=tau)

    @classmethod
    def from_sample(cls, sample: npt.ArrayLike, tau: npt.ArrayLike = TAU_RESET) -> "MovingAverageState":
        sample = _as_array(sample)
        return cls.create(mean=sample, second_moment=sample * sample, tau=tau)

    def with_tau(self, tau: npt.ArrayLike) -> "MovingAverageState":
        return replace(self, tau=np.broadcast_to(_as_array(tau), self.mean.shape).copy())


def ema_update(state: MovingAverageState, sample: npt.ArrayLike) -> MovingAverageState:
    """mean' = (1 - 1/tau) mean + sample/tau, likewise for the second moment.

    Each result is clipped to the interval between the old value and the sample, and a
    sample equal to the old value leaves it untouched, so constant streams stay exact and
    tau = 1 replaces the history outright.
    """
    sample = _as_array(sample)
    if not np.all(np.isfinite(sample)):
        raise NumericsError("ema_update received a non-finite sample")
    weight = 1.0 / state.tau
    mean = _convex_mix(state.mean, sample, weight)
    second_moment = _convex_mix(state.second_moment, sample * sample, weight)
    return MovingAverageState(mean=mean, second_moment=second_moment, tau=state.tau)


def _convex_mix(old: np.ndarray, sample: np.ndarray, weight: np.ndarray) -> np.ndarray:
    mixed = np.clip((1.0 - weight) * old + weight * sample, np.minimum(old, sample), np.maximum(old, sample))
    return np.where(sample == old, old, mixed)


def tau_update(state: MovingAverageState) -> np.ndarray:
    """tau' = (1 - mean^2 / second_moment) * tau + 1, computed from ``state`` as given.

    All-zero history (second_moment == 0 with mean == 0) lengthens memory: tau' = tau + 1.
    """
    mean_sq = state.mean * state.mean
    degenerate = state.second_moment <= 0
    if np.any(degenerate & (state.mean != 0)):
        raise DegenerateStatisticsError("second_moment <= 0 with nonzero mean")
    safe_m2 = np.where(degenerate, 1.0, state.second_moment)
    ratio = np.clip(np.where(degenerate, 0.0, mean_sq / safe_m2), 0.0, 1.0)
    return (1.0 - ratio) * state.tau + 1.0


def variance_estimate(state: MovingAverageState) -> np.ndarray:
    return np.maximum(0.0, state.second_moment - state.mean * state.mean)


def is_outlier(sample: npt.ArrayLike, state: MovingAverageState, sigma: float = 2.0) -> np.ndarray:
    deviation = np.abs(_as_array(sample) - state.mean)
    return deviation > sigma * np.sqrt(variance_estimate(state))


def reset_tau(
    state: MovingAverageState,
    mask: Optional[npt.ArrayLike] = None,
    value: float = TAU_RESET,
) -> MovingAverageState:
    if mask is None:
        tau = np.full_like(state.tau, value)
    else:
        tau = np.where(np.asarray(mask, dtype=bool), value, state.tau)
    return replace(state, tau=tau)
