import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adasecant.errors import DegenerateStatisticsError, LayoutError, NumericsError
from adasecant.services.numerics import BlockLayout, make_rng
from adasecant.services.problems import quadratic_problem
from adasecant.services.secant import (
    SecantStats,
    alpha_update,
    block_normalize,
    directional_newton_step,
    directional_rates,
    expected_rate,
    expected_rate_cov,
    push_pair,
    secant_rate_deterministic,
)
from adasecant.services.stats import MovingAverageState

LAYOUT = BlockLayout.from_triples([("W", 0, 4), ("b", 4, 2)])


def test_block_normalize_gives_unit_blocks():
    d = block_normalize(np.array([3.0, 4.0, 0.0, 0.0, -2.0, 0.0]), LAYOUT)
    assert np.allclose(d, [0.6, 0.8, 0.0, 0.0, -1.0, 0.0])


def test_block_normalize_keeps_zero_blocks():
    d = block_normalize(np.array([0.0, 0.0, 0.0, 0.0, 1e-300, 1e-300]), LAYOUT)
    assert np.array_equal(d[:4], np.zeros(4))
    assert np.allclose(d[4:], [np.sqrt(0.5), np.sqrt(0.5)])
    assert np.all(np.isfinite(d))


def test_block_normalize_survives_huge_entries():
    d = block_normalize(np.array([1e200, 1e200, 0.0, 0.0, 1.0, 0.0]), LAYOUT)
    assert np.allclose(d[:2], [np.sqrt(0.5), np.sqrt(0.5)])


def test_block_normalize_rejects_wrong_length():
    with pytest.raises(LayoutError):
        block_normalize(np.ones(5), LAYOUT)


finite_entries = st.floats(min_value=-1e3, max_value=1e3).filter(lambda x: x == 0 or abs(x) > 1e-6)


@given(g=arrays(float, 6, elements=finite_entries), power=st.integers(min_value=-20, max_value=20))
def test_block_normalize_is_scale_invariant(g, power):
    assert np.array_equal(block_normalize(g * 2.0**power, LAYOUT), block_normalize(g, LAYOUT))


@pytest.mark.parametrize("h", [0.1, 1.0, 2.0, 10.0])
def test_secant_rate_recovers_inverse_curvature(h):
    problem = quadratic_problem([h])
    rng = make_rng(int(h * 10))
    for _ in range(10):
        theta = rng.normal(size=1)
        delta = rng.uniform(0.1, 1.0, size=1) * rng.choice([-1.0, 1.0])
        _, g_before = problem.loss_and_grad(theta)
        _, g_after = problem.loss_and_grad(theta + delta)
        rate = secant_rate_deterministic(delta, alpha_update(g_after, g_before))
        assert rate[0] == pytest.approx(1.0 / h, rel=1e-12)


def test_secant_rate_rejects_vanishing_curvature():
    with pytest.raises(DegenerateStatisticsError):
        secant_rate_deterministic([1.0], [1e-9])


def _dense_newton_oracle(hessian, grad, d):
    n = len(grad)
    step = []
    for i in range(n):
        curvature = sum(hessian[i][j] * d[j] for j in range(n))
        step.append(-d[i] * grad[i] / curvature)
    return np.array(step)


@pytest.mark.parametrize("seed", range(3))
def test_directional_newton_step_matches_dense_oracle(seed):
    rng = make_rng(seed)
    a = rng.uniform(0.0, 1.0, size=(3, 3))
    hessian = a @ a.T + 3.0 * np.eye(3)
    b = rng.normal(size=3)
    theta = rng.normal(size=3)
    grad = hessian @ theta - b
    d = rng.uniform(0.5, 1.5, size=3)

    expected = _dense_newton_oracle(hessian.tolist(), grad.tolist(), d.tolist())
    step = directional_newton_step(theta, grad, hessian @ d, d)
    assert np.allclose(step, expected, rtol=1e-10, atol=0.0)

    # on a quadratic the gradient change along d is exactly H d
    hess_dir = (hessian @ (theta + d) - b) - grad
    assert np.allclose(directional_newton_step(theta, grad, hess_dir, d), expected, rtol=1e-10, atol=1e-14)


def test_directional_rates():
    assert directional_rates([2.0, 4.0], [1.0, 1.0]).tolist() == [0.5, 0.25]
    with pytest.raises(DegenerateStatisticsError):
        directional_rates([2.0, 0.0], [1.0, 1.0])


def _stats(delta_m2, alpha_m2, cross_mean, alpha_mean=0.0, delta_mean=0.0):
    return SecantStats(
        delta_stats=MovingAverageState.create(mean=delta_mean, second_moment=delta_m2),
        alpha_stats=MovingAverageState.create(mean=alpha_mean, second_moment=alpha_m2),
        cross=MovingAverageState.create(mean=cross_mean, second_moment=cross_mean**2),
    )


def test_expected_rate_formula():
    assert expected_rate(_stats(4.0, 1.0, -2.0), eps=0.0) == pytest.approx(4.0)
    assert expected_rate(_stats(4.0, 1.0, 0.0), eps=0.0) == pytest.approx(2.0)


def test_expected_rate_is_floored():
    assert expected_rate(_stats(1.0, 1.0, 5.0), eta_min=1e-8) == 1e-8


def test_expected_rate_degenerate_alpha():
    stats = _stats(1.0, 0.0, 0.0)
    with pytest.raises(DegenerateStatisticsError):
        expected_rate(stats)
    assert expected_rate(stats, fallback=1e-3) == 1e-3


def test_covariance_form_subtracts_means():
    stats = _stats(4.0, 1.0, -1.0, alpha_mean=1.0, delta_mean=-1.0)
    assert expected_rate_cov(stats, eps=0.0) == pytest.approx(2.0)
    assert expected_rate(stats, eps=0.0) == pytest.approx(3.0)


@pytest.mark.parametrize("h", [0.5, 2.0, 8.0])
def test_expected_rate_on_noiseless_quadratic(h):
    # applied steps s and gradient changes -h s
    rng = make_rng(1)
    s = rng.normal(size=3)
    stats = SecantStats.from_pair(s, -h * s)
    for _ in range(20):
        s = rng.normal(size=3)
        stats = push_pair(stats, s, -h * s)
    ratio = np.sqrt(stats.delta_stats.second_moment) / np.sqrt(stats.alpha_stats.second_moment)
    assert np.allclose(ratio, 1.0 / h, rtol=1e-12)
    assert np.allclose(expected_rate(stats, eps=0.0), 2.0 / h, rtol=1e-12)


def test_alpha_update_checks_lengths():
    assert alpha_update([3.0, 1.0], [1.0, 1.0]).tolist() == [2.0, 0.0]
    with pytest.raises(NumericsError):
        alpha_update([1.0], [1.0, 2.0])


@given(g=arrays(float, 6, elements=finite_entries))
def test_block_normalize_keeps_a_descent_direction(g):
    assume(np.any(g != 0))
    assert np.dot(g, block_normalize(g, LAYOUT)) > 0


def _mix(old, x, tau):
    if x == old:
        return old
    w = 1.0 / tau
    return min(max((1.0 - w) * old + w * x, min(old, x)), max(old, x))


def test_expected_rate_matches_replay_on_noisy_stream():
    rng = make_rng(17)
    h, tau = 2.0, 5.0
    s = rng.normal()
    a = -h * s + rng.normal(scale=0.3)
    stats = SecantStats.from_pair([s], [a], tau=tau)
    d2, a2, cross = s * s, a * a, a * s
    for _ in range(60):
        s = rng.normal()
        a = -h * s + rng.normal(scale=0.3)
        stats = push_pair(stats, [s], [a])
        d2, a2, cross = _mix(d2, s * s, tau), _mix(a2, a * a, tau), _mix(cross, a * s, tau)

        eps = 1e-7
        oracle = max(np.sqrt(d2) / (np.sqrt(a2) + eps) - cross / (a2 + eps), 1e-8)
        eta = expected_rate(stats, eps=eps, eta_min=1e-8)
        assert eta[0] == pytest.approx(oracle, rel=1e-12)
        assert eta[0] > 0


@pytest.mark.parametrize("delta, alpha", [(0.5, 2.0), (-0.5, -2.0), (3.0, 0.25)])
def test_covariance_form_on_constant_pairs_gives_secant_ratio(delta, alpha):
    stats = SecantStats.from_pair([delta], [alpha])
    for _ in range(20):
        stats = push_pair(stats, [delta], [alpha])
    assert expected_rate_cov(stats, eps=0.0)[0] == pytest.approx(abs(delta / alpha), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_covariance_form_equals_plain_form_for_centered_alpha(seed):
    rng = make_rng(seed)
    stats = _stats(
        delta_m2=rng.uniform(0.1, 2.0),
        alpha_m2=rng.uniform(0.1, 2.0),
        cross_mean=rng.normal(scale=0.2),
        alpha_mean=0.0,
        delta_mean=rng.normal(),
    )
    assert expected_rate_cov(stats) == expected_rate(stats)
