import math

import numpy as np
import pytest

from adasecant.errors import ProblemError
from adasecant.services.datasets import Dataset, two_moons_data
from adasecant.services.numerics import BlockLayout, make_rng, relative_error
from adasecant.services.problems import (
    Problem,
    finite_diff_grad,
    logistic_problem,
    mlp_problem,
    quadratic_problem,
    rosenbrock_problem,
)


class LinearProblem(Problem):
    name = "linear"

    def __init__(self):
        super().__init__(BlockLayout.single(1))

    def full_loss(self, theta):
        return 3.0 * float(theta[0])

    def loss_and_grad(self, theta, indices=None, rng=None):
        return self.full_loss(theta), np.array([3.0])


def small_mlp():
    rng = make_rng(12)
    inputs = rng.normal(size=(10, 2))
    targets = np.array([0, 1] * 5)
    return mlp_problem([2, 4, 2], "tanh", Dataset("toy", inputs, targets, 12))


def test_quadratic_values():
    problem = quadratic_problem([2.0])
    loss, grad = problem.loss_and_grad(np.array([3.0]))
    assert loss == 9.0
    assert grad.tolist() == [6.0]
    loss, grad = problem.loss_and_grad(np.zeros(1))
    assert loss == 0.0 and grad.tolist() == [0.0]


@pytest.mark.parametrize("h", [[1.0, 0.0], [-1.0], []])
def test_quadratic_rejects_bad_curvature(h):
    with pytest.raises(ProblemError):
        quadratic_problem(h)


def test_quadratic_noise_comes_from_the_rng():
    problem = quadratic_problem([1.0, 2.0], noise_std=0.5)
    theta = np.array([0.1, 0.2])
    _, exact = problem.loss_and_grad(theta)
    assert np.array_equal(exact, [0.1, 0.4])
    _, noisy_a = problem.loss_and_grad(theta, rng=make_rng(1))
    _, noisy_b = problem.loss_and_grad(theta, rng=make_rng(1))
    assert np.array_equal(noisy_a, noisy_b)
    assert not np.array_equal(noisy_a, exact)


def test_noiseless_quadratic_is_deterministic():
    problem = quadratic_problem([1.0, 3.0], noise_std=0.0)
    theta = np.array([0.5, -0.5])
    rng = make_rng(0)
    assert np.array_equal(problem.loss_and_grad(theta, rng=rng)[1], problem.loss_and_grad(theta, rng=rng)[1])


def test_block_modes():
    assert quadratic_problem([1.0, 2.0]).layout.names == ["x0", "x1"]
    assert quadratic_problem([1.0, 2.0], blocks="single").layout.names == ["theta"]
    with pytest.raises(ProblemError):
        quadratic_problem([1.0], blocks="rows")


def test_rosenbrock_values():
    problem = rosenbrock_problem(2)
    loss, grad = problem.loss_and_grad(np.zeros(2))
    assert loss == 1.0
    assert grad.tolist() == [-2.0, 0.0]
    loss, grad = rosenbrock_problem(5).loss_and_grad(np.ones(5))
    assert loss == 0.0
    assert np.array_equal(grad, np.zeros(5))
    with pytest.raises(ProblemError):
        rosenbrock_problem(1)


def test_theta_length_is_checked():
    with pytest.raises(ProblemError):
        rosenbrock_problem(3).full_loss(np.zeros(2))


@pytest.mark.parametrize("seed", range(3))
def test_convex_gradients_match_finite_differences(seed):
    rng = make_rng(seed)
    quadratic = quadratic_problem(np.logspace(0, 2, 6))
    for _ in range(5):
        theta = rng.normal(size=6)
        assert relative_error(quadratic.loss_and_grad(theta)[1], finite_diff_grad(quadratic, theta)) < 1e-5


@pytest.mark.parametrize("seed", range(3))
def test_rosenbrock_gradient_matches_finite_differences(seed):
    rng = make_rng(seed)
    problem = rosenbrock_problem(4)
    for _ in range(5):
        theta = rng.normal(size=4)
        assert relative_error(problem.loss_and_grad(theta)[1], finite_diff_grad(problem, theta)) < 1e-5


@pytest.mark.parametrize("seed", range(3))
def test_logistic_gradient_matches_finite_differences(seed):
    rng = make_rng(seed)
    problem = logistic_problem(two_moons_data(seed, 40, 0.1))
    for _ in range(5):
        theta = rng.normal(size=problem.dim)
        assert relative_error(problem.loss_and_grad(theta)[1], finite_diff_grad(problem, theta)) < 1e-5


@pytest.mark.parametrize("activation", ["tanh", "sigmoid", "identity"])
@pytest.mark.parametrize("seed", range(3))
def test_mlp_gradient_matches_finite_differences(activation, seed):
    rng = make_rng(seed)
    inputs = rng.normal(size=(10, 2))
    targets = np.array([0, 1] * 5)
    problem = mlp_problem([2, 4, 2], activation, Dataset("toy", inputs, targets, seed))
    for _ in range(5):
        theta = rng.normal(scale=0.5, size=problem.dim)
        assert relative_error(problem.loss_and_grad(theta)[1], finite_diff_grad(problem, theta)) < 1e-4


def test_mlp_layout():
    problem = small_mlp()
    assert problem.layout.names == ["W0", "b0", "W1", "b1"]
    assert problem.dim == 2 * 4 + 4 + 4 * 2 + 2


def test_relu_mlp_runs():
    problem = mlp_problem([2, 3, 2], "relu", small_mlp().dataset)
    loss, grad = problem.loss_and_grad(problem.initial_theta(make_rng(0), 0.5))
    assert math.isfinite(loss)
    assert np.all(np.isfinite(grad))


def test_mlp_rejects_bad_shapes():
    dataset = small_mlp().dataset
    with pytest.raises(ProblemError):
        mlp_problem([3, 4, 2], "tanh", dataset)
    with pytest.raises(ProblemError):
        mlp_problem([2, 4, 2], "softsign", dataset)
    with pytest.raises(ProblemError):
        mlp_problem([2, 4, 1], "tanh", dataset)


def test_logistic_loss_at_zero_weights_is_log_two():
    problem = logistic_problem(two_moons_data(0, 100, 0.1))
    assert problem.layout.names == ["W0", "b0"]
    assert problem.full_loss(np.zeros(problem.dim)) == pytest.approx(math.log(2.0), abs=1e-10)


def test_full_batch_gradient_is_mean_of_single_examples():
    problem = small_mlp()
    theta = make_rng(3).normal(size=problem.dim)
    full = problem.loss_and_grad(theta)[1]
    singles = [problem.loss_and_grad(theta, np.array([i]))[1] for i in range(problem.n_examples)]
    assert np.allclose(full, np.mean(singles, axis=0), rtol=0.0, atol=1e-10)


def test_minibatch_gradients_are_unbiased():
    problem = logistic_problem(two_moons_data(5, 60, 0.2))
    theta = make_rng(5).normal(size=problem.dim)
    order = make_rng(6).permutation(60)
    batches = [problem.loss_and_grad(theta, order[i:i + 12])[1] for i in range(0, 60, 12)]
    assert np.allclose(np.mean(batches, axis=0), problem.loss_and_grad(theta)[1], rtol=0.0, atol=1e-10)


def test_empty_minibatch_is_rejected():
    with pytest.raises(ProblemError):
        small_mlp().loss_and_grad(np.zeros(small_mlp().dim), np.array([], dtype=np.int64))


def test_finite_diff_examples():
    assert finite_diff_grad(LinearProblem(), np.array([0.7]), h=0.1)[0] == pytest.approx(3.0, rel=1e-12)
    assert finite_diff_grad(quadratic_problem([2.0]), np.array([1.0]), h=1e-5)[0] == pytest.approx(2.0, abs=1e-8)
    with pytest.raises(ProblemError):
        finite_diff_grad(LinearProblem(), np.array([0.0]), h=0.0)


def test_initial_theta():
    problem = small_mlp()
    a = problem.initial_theta(make_rng(1))
    b = problem.initial_theta(make_rng(1))
    assert a.shape == (problem.dim,)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) < 0.5)
    assert problem.n_examples == 10
    assert quadratic_problem([1.0]).n_examples == 0
