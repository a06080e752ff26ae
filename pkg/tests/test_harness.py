import math

import numpy as np
import pytest
from pydantic import ValidationError

from adasecant.errors import ConfigError, DegenerateStatisticsError, ExperimentAbort, NonFiniteError
from adasecant.services.harness import (
    ExperimentConfig,
    MinibatchSampler,
    expand_grid,
    grid_search,
    log_uniform_samples,
    momentum_rate_pairs,
    run_experiment,
)
from adasecant.services.numerics import make_rng
from adasecant.services.optimizer import AdasecantOptimizer

QUADRATIC = ExperimentConfig(problem="quadratic", problem_params={"dim": 4}, steps=50, seed=3)
DIVERGENT = ExperimentConfig(
    problem="rosenbrock", optimizer="sgd", optimizer_params={"lr": 10.0}, steps=50, seed=0
)


def _without_wallclock(record):
    return [(r.step, r.epoch, r.train_loss, r.grad_norm, r.mean_applied_rate) for r in record.rows]


def test_zero_steps_gives_empty_record():
    record = run_experiment(QUADRATIC.with_overrides({"steps": 0}))
    assert record.rows == []
    assert math.isnan(record.final_loss)
    snapshot = record.snapshot()
    assert snapshot["optimizer_params"]["gamma_cap"] == 1.8
    assert snapshot["problem_params"]["dim"] == 4


def test_rows_are_recorded_per_step():
    record = run_experiment(QUADRATIC)
    assert [row.step for row in record.rows] == list(range(1, 51))
    assert [row.epoch for row in record.rows] == [float(k) for k in range(1, 51)]
    assert all(math.isfinite(row.train_loss) and row.mean_applied_rate > 0 for row in record.rows)
    walls = [row.wallclock_ms for row in record.rows]
    assert walls == sorted(walls)
    assert record.status == "ok"


def test_runs_are_deterministic():
    config = ExperimentConfig(problem="logistic", problem_params={"n": 100}, steps=40, batch_size=16, seed=9)
    assert _without_wallclock(run_experiment(config)) == _without_wallclock(run_experiment(config))


def test_epochs_follow_examples_seen():
    config = ExperimentConfig(problem="logistic", problem_params={"n": 500}, steps=10, batch_size=100)
    record = run_experiment(config)
    assert record.rows[4].epoch == 1.0
    assert record.rows[9].epoch == 2.0


def test_snapshot_reproduces_run():
    record = run_experiment(QUADRATIC)
    replayed = run_experiment(ExperimentConfig(**record.snapshot()))
    assert _without_wallclock(replayed) == _without_wallclock(record)


def test_non_finite_loss_aborts_with_last_good_step():
    with pytest.raises(ExperimentAbort) as info:
        run_experiment(DIVERGENT)
    abort = info.value
    assert abort.step >= 1
    assert abort.last_good_step == (abort.step - 1 if abort.step > 1 else None)


@pytest.mark.parametrize(
    "error, text",
    [
        (NonFiniteError("update", 3, math.inf), "non-finite update at parameter 3"),
        (DegenerateStatisticsError("second_moment <= 0"), "statistics degenerated"),
    ],
)
def test_optimizer_failures_abort_the_run(monkeypatch, error, text):
    def fail(self, theta, grad):
        raise error

    monkeypatch.setattr(AdasecantOptimizer, "step", fail)
    with pytest.raises(ExperimentAbort) as info:
        run_experiment(QUADRATIC)
    assert text in str(info.value)
    assert info.value.step == 1
    assert info.value.last_good_step is None


def test_mlp_on_digits_runs_with_defaults():
    config = ExperimentConfig(
        problem="mlp", problem_params={"dataset": "digits8x8"}, batch_size=10, seed=0, steps=500
    )
    record = run_experiment(config)
    assert len(record.rows) == 500
    assert all(math.isfinite(row.train_loss) for row in record.rows)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"problem": "sphere"},
        {"problem": "quadratic", "optimizer": "adam"},
        {"problem": "quadratic", "optimizer_params": {"gamma": 1.0}},
        {"problem": "quadratic", "problem_params": {"dim": 0}},
        {"problem": "quadratic", "steps": -1},
        {"problem": "quadratic", "batch": 10},
    ],
)
def test_invalid_configs_are_rejected(kwargs):
    with pytest.raises(ValidationError):
        ExperimentConfig(**kwargs)


def test_with_overrides_routes_dotted_keys():
    config = QUADRATIC.with_overrides({"problem.noise_std": 0.0, "optimizer.gamma_cap": 1.0, "steps": 7})
    assert config.problem_params == {"dim": 4, "noise_std": 0.0}
    assert config.optimizer_params == {"gamma_cap": 1.0}
    assert config.steps == 7
    with pytest.raises(ConfigError):
        QUADRATIC.with_overrides({"solver.lr": 1.0})


def test_with_optimizer_resets_parameters():
    config = QUADRATIC.with_overrides({"optimizer.gamma_cap": 1.0}).with_optimizer("rmsprop")
    assert config.optimizer == "rmsprop"
    assert config.optimizer_params == {}


def test_sampler_walks_a_permutation_per_epoch():
    sampler = MinibatchSampler(10, 4, make_rng(0))
    epoch = [sampler.next_indices() for _ in range(3)]
    assert [len(batch) for batch in epoch] == [4, 4, 2]
    assert sorted(np.concatenate(epoch).tolist()) == list(range(10))
    assert sampler.epoch == 1.0
    assert len(sampler.next_indices()) == 4


def test_sampler_full_batch():
    sampler = MinibatchSampler(10, None, make_rng(0))
    assert sampler.next_indices() is None
    assert MinibatchSampler(10, 50, make_rng(0)).full_batch
    assert sampler.epoch == 1.0


def test_single_cell_grid_matches_run():
    result = grid_search(QUADRATIC, {"optimizer.gamma_cap": [1.5]})
    direct = run_experiment(QUADRATIC.with_overrides({"optimizer.gamma_cap": 1.5}))
    assert _without_wallclock(result.best_record) == _without_wallclock(direct)


def test_grid_best_is_lowest_and_failures_are_marked():
    base = DIVERGENT.with_overrides({"steps": 30})
    result = grid_search(base, {"optimizer.lr": [1e-4, 1e-3, 10.0]}, seeds=[0, 1])
    statuses = [cell.status for cell in result.cells]
    assert statuses == ["ok", "ok", "failed"]
    assert result.cells[2].mean_final_loss == math.inf
    best = result.best_cell
    assert all(best.mean_final_loss <= row["mean_final_loss"] for row in result.table)
    assert len(best.records) == 2
    assert [row["status"] for row in result.table] == statuses


def test_expand_grid():
    assert expand_grid({"a": [1, 2], "b": [3]}) == [{"a": 1, "b": 3}, {"a": 2, "b": 3}]
    assert expand_grid([{"a": 1}, {"b": 2}]) == [{"a": 1}, {"b": 2}]
    with pytest.raises(ConfigError):
        expand_grid({"a": []})


def test_log_uniform_samples():
    values = log_uniform_samples(make_rng(0), 1e-4, 1.0, 15)
    assert len(values) == 15
    assert values == sorted(values)
    assert all(1e-4 <= v <= 1.0 for v in values)
    assert values == log_uniform_samples(make_rng(0), 1e-4, 1.0, 15)
    with pytest.raises(ConfigError):
        log_uniform_samples(make_rng(0), 0.0, 1.0, 3)


def test_momentum_rate_pairs():
    pairs = momentum_rate_pairs(make_rng(1), 30)
    assert len(pairs) == 30
    assert all(0.5 <= p["optimizer.momentum"] <= 0.99 for p in pairs)
    assert all(1e-3 <= p["optimizer.lr"] <= 1.0 for p in pairs)
    assert len({p["optimizer.lr"] for p in pairs}) == 30
