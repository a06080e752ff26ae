"""Adasecant: per-parameter secant step sizes with gradient variance reduction.

One step, in order:

1. block-normalize the raw gradient into the direction d;
2. estimate gamma from the statistics gathered so far and form the corrected
   gradient g_tilde from d and the running mean of d;
3. flag outliers (raw gradient or gradient change alpha more than ``outlier_sigma``
   standard deviations from its running mean) and reset their time constant;
4. push the new samples into every moving average;
5. compute the expected secant rate and scale it by ``rate_scale``; on a
   quadratic both of its terms tend to 1/h, so the default 0.5 targets the secant step;
6. adapt the time constant from the step statistics of the previous update;
7. divide by the thresholded Adagrad factor rho = max(1, sqrt(sum g_tilde^2));
8. theta' = theta - (eta / rho) * g_tilde.

The first step has no gradient change to learn from: it moves by
``bootstrap_rate * d`` and seeds the statistics.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field

from adasecant.errors import NumericsError
from adasecant.services.numerics import BlockLayout, ParamVector, ensure_finite
from adasecant.services.secant import (
    SecantStats,
    alpha_update,
    block_normalize,
    expected_rate,
    expected_rate_cov,
    push_pair,
)
from adasecant.services.stats import MovingAverageState, ema_update, is_outlier, tau_update
from adasecant.services.variance import (
    GammaStats,
    corrected_gradient,
    gamma_estimate,
    gamma_terms,
    update_gamma_stats,
)

logger = logging.getLogger(__name__)


class OptimizerConfig(BaseModel):
    gamma_cap: float = Field(1.8, gt=0)
    tau_reset: float = Field(2.2, ge=1)
    outlier_sigma: float = Field(2.0, gt=0)
    eps: float = Field(1e-7, gt=0)
    eta_min: float = Field(1e-8, gt=0)
    bootstrap_rate: float = Field(1e-3, gt=0)
    rate_scale: float = Field(0.5, gt=0)
    use_cov_form: bool = False
    enable_adagrad_guard: bool = True
    enable_variance_reduction: bool = True

    model_config = {"frozen": True, "extra": "forbid"}


@dataclass(frozen=True)
class StepDiagnostics:
    direction: np.ndarray
    gamma: np.ndarray
    g_tilde: np.ndarray
    alpha: Optional[np.ndarray]
    outliers: np.ndarray
    tau_used: np.ndarray
    eta: np.ndarray
    rho: np.ndarray
    applied_rate: np.ndarray
    step: np.ndarray
    tau_next: np.ndarray


@dataclass(frozen=True)
class AdasecantState:
    layout: BlockLayout
    step_count: int
    tau: np.ndarray
    adagrad_accum: np.ndarray
    grad_stats: Optional[MovingAverageState] = None
    raw_grad_stats: Optional[MovingAverageState] = None
    gamma_stats: Optional[GammaStats] = None
    secant_stats: Optional[SecantStats] = None
    prev_grad: Optional[ParamVector] = None
    prev_direction: Optional[ParamVector] = None
    prev_step: Optional[ParamVector] = None
    diagnostics: Optional[StepDiagnostics] = None

    @classmethod
    def initial(cls, layout: BlockLayout, config: OptimizerConfig) -> "AdasecantState":
        n = layout.size
        return cls(
            layout=layout,
            step_count=0,
            tau=np.full(n, config.tau_reset),
            adagrad_accum=np.zeros(n),
        )


def adagrad_guard(accum: npt.ArrayLike, g_tilde: npt.ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Accumulate g_tilde^2; rho = max(1, sqrt(accum')) so eta / rho never exceeds eta."""
    accum = np.asarray(accum, dtype=np.float64)
    if np.any(accum < 0):
        raise NumericsError("Adagrad accumulator must be >= 0")
    g_tilde = np.asarray(g_tilde, dtype=np.float64)
    accum = accum + g_tilde * g_tilde
    return accum, np.maximum(1.0, np.sqrt(accum))


def _settled(stats: MovingAverageState) -> MovingAverageState:
    """Zero the mean where the second moment underflowed so tau_update lengthens memory there."""
    return replace(stats, mean=np.where(stats.second_moment > 0, stats.mean, 0.0))


def _bootstrap_step(
    theta: ParamVector,
    grad: ParamVector,
    d: ParamVector,
    state: AdasecantState,
    config: OptimizerConfig,
) -> Tuple[ParamVector, AdasecantState]:
    tau = state.tau
    accum, rho = adagrad_guard(state.adagrad_accum, d)
    if not config.enable_adagrad_guard:
        rho = np.ones_like(rho)
    eta = np.full_like(d, config.bootstrap_rate)
    applied_rate = eta / rho
    step = applied_rate * d
    theta_next = theta - step
    ensure_finite(theta_next, "update")
    diagnostics = StepDiagnostics(
        direction=d,
        gamma=np.zeros_like(d),
        g_tilde=d,
        alpha=None,
        outliers=np.zeros(d.shape, dtype=bool),
        tau_used=tau,
        eta=eta,
        rho=rho,
        applied_rate=applied_rate,
        step=step,
        tau_next=tau,
    )
    next_state = replace(
        state,
        step_count=1,
        adagrad_accum=accum,
        grad_stats=MovingAverageState.from_sample(d, tau),
        raw_grad_stats=MovingAverageState.from_sample(grad, tau),
        prev_grad=grad,
        prev_direction=d,
        prev_step=step,
        diagnostics=diagnostics,
    )
    return theta_next, next_state


def adasecant_step(
    theta: ParamVector,
    grad: ParamVector,
    state: AdasecantState,
    config: OptimizerConfig,
) -> Tuple[ParamVector, AdasecantState]:
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    n = state.layout.size
    if theta.shape != (n,) or grad.shape != (n,):
        raise NumericsError(f"theta {theta.shape} and grad {grad.shape} must both have length {n}")
    ensure_finite(grad, "gradient")

    d = block_normalize(grad, state.layout)
    ensure_finite(d, "direction")
    if state.step_count == 0:
        return _bootstrap_step(theta, grad, d, state, config)

    if config.enable_variance_reduction:
        gamma = np.broadcast_to(gamma_estimate(state.gamma_stats, config.eps), d.shape)
    else:
        gamma = np.zeros_like(d)
    g_tilde = corrected_gradient(d, state.grad_stats.mean, gamma)
    ensure_finite(g_tilde, "corrected_gradient")

    alpha = alpha_update(grad, state.prev_grad)
    outliers = is_outlier(grad, state.raw_grad_stats, config.outlier_sigma)
    if state.secant_stats is not None:
        outliers = outliers | is_outlier(alpha, state.secant_stats.alpha_stats, config.outlier_sigma)
    tau = np.where(outliers, config.tau_reset, state.tau)
    if logger.isEnabledFor(logging.DEBUG) and outliers.any():
        logger.debug("step %d: tau reset on %d parameters", state.step_count + 1, int(outliers.sum()))

    grad_stats = ema_update(state.grad_stats.with_tau(tau), d)
    raw_grad_stats = ema_update(state.raw_grad_stats.with_tau(tau), grad)
    if state.gamma_stats is None:
        num_term, den_term = gamma_terms(d, state.prev_direction, grad_stats.mean)
        gamma_stats = GammaStats.from_terms(num_term, den_term, tau, config.gamma_cap)
    else:
        gamma_stats = update_gamma_stats(
            GammaStats(
                num=state.gamma_stats.num.with_tau(tau),
                den=state.gamma_stats.den.with_tau(tau),
                gamma_cap=config.gamma_cap,
            ),
            d,
            state.prev_direction,
            grad_stats.mean,
        )
    if state.secant_stats is None:
        secant_stats = SecantStats.from_pair(state.prev_step, alpha, tau)
    else:
        secant_stats = push_pair(state.secant_stats.with_tau(tau), state.prev_step, alpha)

    rate = expected_rate_cov if config.use_cov_form else expected_rate
    eta = rate(secant_stats, config.eps, config.eta_min, fallback=config.bootstrap_rate)
    learned = secant_stats.alpha_stats.second_moment > 0
    eta = np.where(learned, np.maximum(config.rate_scale * eta, config.eta_min), eta)
    ensure_finite(eta, "rate")

    # the time constant follows the step statistics of the previous update
    if state.secant_stats is None:
        tau_next = tau.copy()
    else:
        tau_next = tau_update(_settled(state.secant_stats.delta_stats.with_tau(tau)))

    accum, rho = adagrad_guard(state.adagrad_accum, g_tilde)
    if not config.enable_adagrad_guard:
        rho = np.ones_like(rho)
    applied_rate = eta / rho
    step = applied_rate * g_tilde
    theta_next = theta - step
    ensure_finite(theta_next, "update")

    diagnostics = StepDiagnostics(
        direction=d,
        gamma=np.array(gamma),
        g_tilde=g_tilde,
        alpha=alpha,
        outliers=outliers,
        tau_used=tau,
        eta=eta,
        rho=rho,
        applied_rate=applied_rate,
        step=step,
        tau_next=tau_next,
    )
    next_state = replace(
        state,
        step_count=state.step_count + 1,
        tau=tau_next,
        adagrad_accum=accum,
        grad_stats=grad_stats,
        raw_grad_stats=raw_grad_stats,
        gamma_stats=gamma_stats,
        secant_stats=secant_stats,
        prev_grad=grad,
        prev_direction=d,
        prev_step=step,
        diagnostics=diagnostics,
    )
    return theta_next, next_state


class Optimizer(ABC):
    """Stateful wrapper the harness drives: ``step`` returns theta' and the applied rates."""

    name: str = ""

    def __init__(self, layout: BlockLayout):
        self.layout = layout

    @abstractmethod
    def step(self, theta: ParamVector, grad: ParamVector) -> Tuple[ParamVector, np.ndarray]:
        ...


class AdasecantOptimizer(Optimizer):
    name = "adasecant"

    def __init__(self, layout: BlockLayout, config: Optional[OptimizerConfig] = None):
        super().__init__(layout)
        self.config = config or OptimizerConfig()
        self.state = AdasecantState.initial(layout, self.config)

    @property
    def diagnostics(self) -> Optional[StepDiagnostics]:
        return self.state.diagnostics

    def step(self, theta: ParamVector, grad: ParamVector) -> Tuple[ParamVector, np.ndarray]:
        theta, self.state = adasecant_step(theta, grad, self.state, self.config)
        return theta, self.state.diagnostics.applied_rate
