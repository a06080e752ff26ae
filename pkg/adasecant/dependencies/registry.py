"""Name -> (parameter model, builder) lookups for problems and optimizers."""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Literal, Mapping, Optional, Type

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from adasecant.errors import ConfigError
from adasecant.services.baselines import (
    AdadeltaOptimizer,
    AdadeltaParams,
    AdagradOptimizer,
    AdagradParams,
    RMSpropOptimizer,
    RMSpropParams,
    SGDOptimizer,
    SGDParams,
)
from adasecant.services.datasets import Dataset, digits8x8_subset, two_moons_data
from adasecant.services.numerics import BlockLayout
from adasecant.services.optimizer import AdasecantOptimizer, Optimizer, OptimizerConfig
from adasecant.services.problems import (
    Problem,
    logistic_problem,
    mlp_problem,
    quadratic_problem,
    rosenbrock_problem,
)

FROZEN = {"frozen": True, "extra": "forbid"}


class QuadraticParams(BaseModel):
    dim: int = Field(10, ge=1)
    h_min: float = Field(1.0, gt=0)
    h_max: float = Field(100.0, gt=0)
    h_diag: Optional[List[float]] = None
    noise_std: float = Field(0.1, ge=0)
    blocks: Literal["coordinate", "single"] = "coordinate"

    model_config = FROZEN

    def curvatures(self) -> np.ndarray:
        """Explicit ``h_diag`` if given, else ``dim`` values log-spaced over [h_min, h_max]."""
        if self.h_diag is not None:
            return np.asarray(self.h_diag, dtype=np.float64)
        return np.logspace(np.log10(self.h_min), np.log10(self.h_max), self.dim)


class RosenbrockParams(BaseModel):
    dim: int = Field(2, ge=2)
    noise_std: float = Field(0.0, ge=0)
    blocks: Literal["coordinate", "single"] = "coordinate"

    model_config = FROZEN


class DataParams(BaseModel):
    dataset: Literal["two_moons", "digits8x8"] = "two_moons"
    n: int = Field(500, ge=2)
    data_noise: float = Field(0.1, ge=0)
    n_per_class: int = Field(4, ge=1)
    data_seed: int = 0

    model_config = FROZEN

    def load(self) -> Dataset:
        if self.dataset == "two_moons":
            return two_moons_data(self.data_seed, self.n, self.data_noise)
        return digits8x8_subset(self.data_seed, self.n_per_class)


class LogisticParams(DataParams):
    pass


class MLPParams(DataParams):
    hidden: List[int] = Field(default_factory=lambda: [8])
    activation: Literal["tanh", "relu", "sigmoid", "identity"] = "tanh"

    @field_validator("hidden")
    @classmethod
    def check_hidden(cls, value: List[int]) -> List[int]:
        if any(width < 1 for width in value):
            raise ValueError("hidden widths must be >= 1")
        return value


def _build_mlp(params: MLPParams) -> Problem:
    dataset = params.load()
    return mlp_problem([dataset.n_features, *params.hidden, max(2, dataset.n_classes)], params.activation, dataset)


@dataclass(frozen=True)
class Entry:
    params: Type[BaseModel]
    build: Callable[..., Any]


PROBLEMS: Dict[str, Entry] = {
    "quadratic": Entry(QuadraticParams, lambda p: quadratic_problem(p.curvatures(), p.noise_std, p.blocks)),
    "rosenbrock": Entry(RosenbrockParams, lambda p: rosenbrock_problem(p.dim, p.noise_std, p.blocks)),
    "logistic": Entry(LogisticParams, lambda p: logistic_problem(p.load())),
    "mlp": Entry(MLPParams, _build_mlp),
}

OPTIMIZERS: Dict[str, Entry] = {
    "adasecant": Entry(OptimizerConfig, AdasecantOptimizer),
    "sgd": Entry(SGDParams, SGDOptimizer),
    "adagrad": Entry(AdagradParams, AdagradOptimizer),
    "rmsprop": Entry(RMSpropParams, RMSpropOptimizer),
    "adadelta": Entry(AdadeltaParams, AdadeltaOptimizer),
}


def _get_or_error(table: Dict[str, Entry], kind: str, name: str) -> Entry:
    entry = table.get(name)
    if entry is None:
        raise ConfigError(f"Unknown {kind} {name!r}; expected one of {sorted(table)}")
    return entry


def get_problem_or_error(name: str) -> Entry:
    return _get_or_error(PROBLEMS, "problem", name)


def get_optimizer_or_error(name: str) -> Entry:
    return _get_or_error(OPTIMIZERS, "optimizer", name)


def _validate(entry: Entry, kind: str, name: str, params: Mapping[str, Any]) -> BaseModel:
    try:
        return entry.params(**dict(params))
    except ValidationError as e:
        raise ConfigError(f"Invalid {kind} parameters for {name!r}: {str(e)}") from e


def resolve_problem_params(name: str, params: Mapping[str, Any]) -> BaseModel:
    return _validate(get_problem_or_error(name), "problem", name, params)


def resolve_optimizer_params(name: str, params: Mapping[str, Any]) -> BaseModel:
    return _validate(get_optimizer_or_error(name), "optimizer", name, params)


def build_problem(name: str, params: Mapping[str, Any]) -> Problem:
    return get_problem_or_error(name).build(resolve_problem_params(name, params))


def build_optimizer(name: str, params: Mapping[str, Any], layout: BlockLayout) -> Optimizer:
    return get_optimizer_or_error(name).build(layout, resolve_optimizer_params(name, params))
