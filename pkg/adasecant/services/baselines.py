"""Baseline optimizers in their textbook forms.

Each rule is a pure function ``(theta, grad, state, params) -> (theta', state')``; the
classes at the bottom wrap them behind the common ``Optimizer`` interface and report
the per-parameter rate each rule applied to the raw gradient.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from adasecant.errors import NumericsError
from adasecant.services.numerics import BlockLayout, ParamVector, ensure_finite
from adasecant.services.optimizer import Optimizer

FROZEN = {"frozen": True, "extra": "forbid"}


class SGDParams(BaseModel):
    lr: float = Field(0.01, gt=0)
    momentum: float = Field(0.0, ge=0, lt=1)
    decay_steps: Optional[int] = Field(None, gt=0)
    final_fraction: float = Field(0.01, ge=0, le=1)

    model_config = FROZEN


class AdagradParams(BaseModel):
    lr: float = Field(0.01, gt=0)
    eps: float = Field(1e-8, gt=0)

    model_config = FROZEN


class RMSpropParams(BaseModel):
    lr: float = Field(0.001, gt=0)
    decay: float = Field(0.9, gt=0, lt=1)
    eps: float = Field(1e-8, gt=0)

    model_config = FROZEN


class AdadeltaParams(BaseModel):
    lr: float = Field(1.0, gt=0)
    decay: float = Field(0.95, gt=0, lt=1)
    eps: float = Field(1e-6, gt=0)

    model_config = FROZEN


@dataclass(frozen=True)
class SGDState:
    velocity: np.ndarray
    step_count: int = 0


@dataclass(frozen=True)
class AdagradState:
    accum: np.ndarray


@dataclass(frozen=True)
class RMSpropState:
    mean_square: np.ndarray


@dataclass(frozen=True)
class AdadeltaState:
    mean_square_grad: np.ndarray
    mean_square_step: np.ndarray


def _check(theta: ParamVector, grad: ParamVector) -> Tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape:
        raise NumericsError(f"theta {theta.shape} and grad {grad.shape} differ in shape")
    ensure_finite(grad, "gradient")
    return theta, grad


def sgd_learning_rate(params: SGDParams, step_count: int) -> float:
    """Constant rate, or linear decay to ``final_fraction * lr`` over ``decay_steps``."""
    if params.decay_steps is None:
        return params.lr
    return params.lr * max(params.final_fraction, 1.0 - step_count / params.decay_steps)


def sgd_momentum_step(
    theta: ParamVector, grad: ParamVector, state: SGDState, params: SGDParams
) -> Tuple[ParamVector, SGDState]:
    theta, grad = _check(theta, grad)
    lr = sgd_learning_rate(params, state.step_count)
    velocity = params.momentum * state.velocity - lr * grad
    theta = theta + velocity
    ensure_finite(theta, "update")
    return theta, SGDState(velocity=velocity, step_count=state.step_count + 1)


def adagrad_step(
    theta: ParamVector, grad: ParamVector, state: AdagradState, params: AdagradParams
) -> Tuple[ParamVector, AdagradState]:
    theta, grad = _check(theta, grad)
    accum = state.accum + grad * grad
    theta = theta - params.lr * grad / (np.sqrt(accum) + params.eps)
    ensure_finite(theta, "update")
    return theta, AdagradState(accum=accum)


def rmsprop_step(
    theta: ParamVector, grad: ParamVector, state: RMSpropState, params: RMSpropParams
) -> Tuple[ParamVector, RMSpropState]:
    theta, grad = _check(theta, grad)
    mean_square = params.decay * state.mean_square + (1.0 - params.decay) * grad * grad
    theta = theta - params.lr * grad / (np.sqrt(mean_square) + params.eps)
    ensure_finite(theta, "update")
    return theta, RMSpropState(mean_square=mean_square)


def adadelta_step(
    theta: ParamVector, grad: ParamVector, state: AdadeltaState, params: AdadeltaParams
) -> Tuple[ParamVector, AdadeltaState]:
    theta, grad = _check(theta, grad)
    rho = params.decay
    mean_square_grad = rho * state.mean_square_grad + (1.0 - rho) * grad * grad
    update = -np.sqrt(state.mean_square_step + params.eps) / np.sqrt(mean_square_grad + params.eps) * grad
    mean_square_step = rho * state.mean_square_step + (1.0 - rho) * update * update
    theta = theta + params.lr * update
    ensure_finite(theta, "update")
    return theta, AdadeltaState(mean_square_grad=mean_square_grad, mean_square_step=mean_square_step)


class SGDOptimizer(Optimizer):
    name = "sgd"

    def __init__(self, layout: BlockLayout, params: Optional[SGDParams] = None):
        super().__init__(layout)
        self.params = params or SGDParams()
        self.state = SGDState(velocity=np.zeros(layout.size))

    def step(self, theta: ParamVector, grad: ParamVector) -> Tuple[ParamVector, np.ndarray]:
        lr = sgd_learning_rate(self.params, self.state.step_count)
        theta, self.state = sgd_momentum_step(theta, grad, self.state, self.params)
        return theta, np.full(self.layout.size, lr)


class AdagradOptimizer(Optimizer):
    name = "adagrad"

    def __init__(self, layout: BlockLayout, params: Optional[AdagradParams] = None):
        super().__init__(layout)
        self.params = params or AdagradParams()
        self.state = AdagradState(accum=np.zeros(layout.size))

    def step(self, theta: ParamVector, grad: ParamVector) -> Tuple[ParamVector, np.ndarray]:
        theta, self.state = adagrad_step(theta, grad, self.state, self.params)
        return theta, self.params.lr / (np.sqrt(self.state.accum) + self.params.eps)


class RMSpropOptimizer(Optimizer):
    name = "rmsprop"

    def __init__(self, layout: BlockLayout, params: Optional[RMSpropParams] = None):
        super().__init__(layout)
        self.params = params or RMSpropParams()
        self.state = RMSpropState(mean_square=np.zeros(layout.size))

    def step(self, theta: ParamVector, grad: ParamVector) -> Tuple[ParamVector, np.ndarray]:
        theta, self.state = rmsprop_step(theta, grad, self.state, self.params)
        return theta, self.params.lr / (np.sqrt(self.state.mean_square) + self.params.eps)


class AdadeltaOptimizer(Optimizer):
    name = "adadelta"

    def __init__(self, layout: BlockLayout, params: Optional[AdadeltaParams] = None):
        super().__init__(layout)
        self.params = params or AdadeltaParams()
        zeros = np.zeros(layout.size)
        self.state = AdadeltaState(mean_square_grad=zeros, mean_square_step=zeros.copy())

    def step(self, theta: ParamVector, grad: ParamVector) -> Tuple[ParamVector, np.ndarray]:
        previous = self.state
        theta, self.state = adadelta_step(theta, grad, self.state, self.params)
        p = self.params
        rates = p.lr * np.sqrt(previous.mean_square_step + p.eps) / np.sqrt(self.state.mean_square_grad + p.eps)
        return theta, rates
