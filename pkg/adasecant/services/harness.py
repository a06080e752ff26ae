"""Training loops, grid sweeps and tuning grids.

A run is fully determined by its ``ExperimentConfig``: the seed is split into three
independent streams (initial parameters, minibatch order, gradient noise), the loop
runs a fixed number of steps and every step appends one ``MetricRow``.
"""

import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from adasecant.dependencies.registry import (
    build_optimizer,
    build_problem,
    resolve_optimizer_params,
    resolve_problem_params,
)
from adasecant.errors import (
    AdasecantError,
    ConfigError,
    DegenerateStatisticsError,
    ExperimentAbort,
    NonFiniteError,
)
from adasecant.services.numerics import Rng, l2_norm, spawn_rngs
from adasecant.services.problems import INIT_STD
from adasecant.settings import DEFAULT_SEED

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = ("problem", "optimizer", "steps", "batch_size", "seed", "init_std", "out")
PROGRESS_EVERY = 100


class ExperimentConfig(BaseModel):
    problem: str
    problem_params: Dict[str, Any] = Field(default_factory=dict)
    optimizer: str = "adasecant"
    optimizer_params: Dict[str, Any] = Field(default_factory=dict)
    steps: int = Field(1000, ge=0)
    batch_size: Optional[int] = Field(None, gt=0)
    seed: int = DEFAULT_SEED
    init_std: float = Field(INIT_STD, ge=0)
    out: Optional[str] = None

    model_config = {"frozen": True, "extra": "forbid"}

    @model_validator(mode="after")
    def check_registries(self) -> "ExperimentConfig":
        try:
            resolve_problem_params(self.problem, self.problem_params)
            resolve_optimizer_params(self.optimizer, self.optimizer_params)
        except ConfigError as e:
            raise ValueError(str(e)) from e
        return self

    def snapshot(self) -> Dict[str, Any]:
        """All settings with defaults filled in; enough to reproduce the run."""
        data = self.model_dump()
        data["problem_params"] = resolve_problem_params(self.problem, self.problem_params).model_dump()
        data["optimizer_params"] = resolve_optimizer_params(self.optimizer, self.optimizer_params).model_dump()
        return data

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        data = self.model_dump()
        merge_settings(data, overrides)
        return ExperimentConfig(**data)

    def with_optimizer(self, name: str, params: Optional[Mapping[str, Any]] = None) -> "ExperimentConfig":
        """Same run with another optimizer; its parameters start from defaults."""
        data = self.model_dump()
        data["optimizer"] = name
        data["optimizer_params"] = dict(params or {})
        return ExperimentConfig(**data)


def merge_settings(data: Dict[str, Any], settings: Mapping[str, Any]) -> Dict[str, Any]:
    """Fold flat settings into ``data`` in place.

    ``problem.<name>`` / ``optimizer.<name>`` go to the matching parameter mapping;
    nested ``problem_params`` / ``optimizer_params`` mappings are merged key by key.
    """
    for key, value in settings.items():
        if key in ("problem_params", "optimizer_params"):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{key} must be a mapping, got {type(value).__name__}")
            data.setdefault(key, {}).update(value)
            continue
        prefix, dot, name = key.partition(".")
        if dot:
            if prefix not in ("problem", "optimizer") or not name:
                raise ConfigError(f"Unknown config key {key!r}")
            data.setdefault(f"{prefix}_params", {})[name] = value
        elif key in TOP_LEVEL_KEYS:
            data[key] = value
        else:
            raise ConfigError(f"Unknown config key {key!r}")
    return data


@dataclass(frozen=True)
class MetricRow:
    step: int
    epoch: float
    train_loss: float
    grad_norm: float
    mean_applied_rate: float
    wallclock_ms: float


@dataclass
class RunRecord:
    config: ExperimentConfig
    rows: List[MetricRow] = field(default_factory=list)
    status: str = "ok"
    message: str = ""

    @property
    def optimizer(self) -> str:
        return self.config.optimizer

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def final_loss(self) -> float:
        if self.status != "ok":
            return math.inf
        if not self.rows:
            return math.nan
        return self.rows[-1].train_loss

    def snapshot(self) -> Dict[str, Any]:
        return self.config.snapshot()


class MinibatchSampler:
    """Shuffle once per epoch and walk the permutation in consecutive batches.

    The last batch of an epoch may be smaller. ``batch_size=None`` (or >= n) always
    yields the full dataset as ``None``.
    """

    def __init__(self, n_examples: int, batch_size: Optional[int], rng: Rng):
        if n_examples < 1:
            raise ConfigError("minibatch sampling needs at least one example")
        self.n_examples = n_examples
        self.batch_size = batch_size
        self.rng = rng
        self.examples_seen = 0
        self._order = np.empty(0, dtype=np.int64)
        self._cursor = 0

    @property
    def full_batch(self) -> bool:
        return self.batch_size is None or self.batch_size >= self.n_examples

    @property
    def epoch(self) -> float:
        return self.examples_seen / self.n_examples

    def next_indices(self) -> Optional[np.ndarray]:
        if self.full_batch:
            self.examples_seen += self.n_examples
            return None
        if self._cursor >= self._order.size:
            self._order = self.rng.permutation(self.n_examples)
            self._cursor = 0
        batch = self._order[self._cursor:self._cursor + self.batch_size]
        self._cursor += batch.size
        self.examples_seen += batch.size
        return batch


def run_experiment(config: ExperimentConfig) -> RunRecord:
    problem = build_problem(config.problem, config.problem_params)
    optimizer = build_optimizer(config.optimizer, config.optimizer_params, problem.layout)
    init_rng, batch_rng, noise_rng = spawn_rngs(config.seed, 3)
    theta = problem.initial_theta(init_rng, config.init_std)
    sampler = None
    if problem.n_examples > 0:
        sampler = MinibatchSampler(problem.n_examples, config.batch_size, batch_rng)

    logger.info(
        "run start: %s on %s, %d steps, seed %d",
        config.optimizer, problem.name, config.steps, config.seed,
    )
    record = RunRecord(config=config)
    start = time.perf_counter()
    last_good: Optional[int] = None
    for step in range(1, config.steps + 1):
        indices = sampler.next_indices() if sampler is not None else None
        batch_loss, grad = problem.loss_and_grad(theta, indices, noise_rng)
        if not math.isfinite(batch_loss):
            raise ExperimentAbort(f"non-finite minibatch loss {batch_loss}", step, last_good)
        try:
            theta, rates = optimizer.step(theta, grad)
        except NonFiniteError as e:
            raise ExperimentAbort(
                f"{config.optimizer} produced a non-finite {e.stage} at parameter {e.index}", step, last_good
            ) from e
        except DegenerateStatisticsError as e:
            raise ExperimentAbort(f"{config.optimizer} statistics degenerated: {e}", step, last_good) from e
        train_loss = problem.full_loss(theta)
        if not math.isfinite(train_loss):
            raise ExperimentAbort(f"non-finite training loss {train_loss}", step, last_good)
        record.rows.append(
            MetricRow(
                step=step,
                epoch=sampler.epoch if sampler is not None else float(step),
                train_loss=train_loss,
                grad_norm=l2_norm(grad),
                mean_applied_rate=float(np.mean(rates)),
                wallclock_ms=(time.perf_counter() - start) * 1000.0,
            )
        )
        last_good = step
        if step % PROGRESS_EVERY == 0:
            logger.debug("step %d: train_loss %.6g", step, train_loss)
    logger.info("run end: %s after %d steps, final loss %.6g", config.optimizer, config.steps, record.final_loss)
    return record


@dataclass
class GridCell:
    params: Dict[str, Any]
    records: List[RunRecord]
    status: str = "ok"
    message: str = ""

    @property
    def final_losses(self) -> List[float]:
        return [record.final_loss for record in self.records]

    @property
    def mean_final_loss(self) -> float:
        if self.status != "ok" or not self.records:
            return math.inf
        return float(np.mean(self.final_losses))


@dataclass
class GridResult:
    cells: List[GridCell]

    @property
    def best_cell(self) -> Optional[GridCell]:
        candidates = [cell for cell in self.cells if cell.status == "ok"]
        if not candidates:
            return None
        return min(candidates, key=lambda cell: cell.mean_final_loss)

    @property
    def best_record(self) -> Optional[RunRecord]:
        best = self.best_cell
        return None if best is None else best.records[0]

    @property
    def table(self) -> List[Dict[str, Any]]:
        return [
            {**cell.params, "mean_final_loss": cell.mean_final_loss, "status": cell.status, "message": cell.message}
            for cell in self.cells
        ]


Grid = Union[Mapping[str, Sequence[Any]], Sequence[Mapping[str, Any]]]


def expand_grid(grid: Grid) -> List[Dict[str, Any]]:
    """A mapping of value lists gives its cartesian product; a list of mappings is taken as is."""
    if isinstance(grid, Mapping):
        keys = list(grid)
        cells = [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]
    else:
        cells = [dict(cell) for cell in grid]
    if not cells:
        raise ConfigError("grid must contain at least one cell")
    return cells


def _run_cell(base: ExperimentConfig, params: Dict[str, Any], seeds: Sequence[int]) -> GridCell:
    records = []
    try:
        config = base.with_overrides(params)
        for seed in seeds:
            records.append(run_experiment(config.with_overrides({"seed": seed})))
    except (AdasecantError, ValueError) as e:
        logger.warning("grid cell %s failed: %s", params, e)
        return GridCell(params=params, records=records, status="failed", message=str(e))
    return GridCell(params=params, records=records)


def grid_search(
    base: ExperimentConfig,
    grid: Grid,
    seeds: Optional[Sequence[int]] = None,
    workers: int = 1,
) -> GridResult:
    """Run every cell on the same seeds; the best cell has the lowest mean final loss."""
    cells = expand_grid(grid)
    seeds = list(seeds) if seeds else [base.seed]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, base, params, seeds) for params in cells]
            results = [future.result() for future in futures]
    else:
        results = [_run_cell(base, params, seeds) for params in cells]
    return GridResult(cells=results)


def log_uniform_samples(rng: Rng, low: float, high: float, n: int) -> List[float]:
    """``n`` values drawn uniformly in log space over [low, high], sorted ascending."""
    if not 0 < low <= high:
        raise ConfigError(f"log-uniform range needs 0 < low <= high, got [{low}, {high}]")
    if n < 1:
        raise ConfigError(f"need at least one sample, got {n}")
    return sorted(float(v) for v in np.exp(rng.uniform(np.log(low), np.log(high), size=n)))


def momentum_rate_pairs(
    rng: Rng,
    n: int,
    momentum_range: Tuple[float, float] = (0.5, 0.99),
    rate_range: Tuple[float, float] = (1e-3, 1.0),
) -> List[Dict[str, float]]:
    """Random (momentum, learning rate) cells for SGD; rates are log-uniform."""
    low, high = momentum_range
    if not 0 <= low <= high < 1:
        raise ConfigError(f"momentum range must lie in [0, 1), got {momentum_range}")
    momenta = rng.uniform(low, high, size=n)
    rates = log_uniform_samples(rng, *rate_range, n)
    order = rng.permutation(n)
    return [
        {"optimizer.momentum": float(momenta[i]), "optimizer.lr": rates[order[i]]}
        for i in range(n)
    ]
