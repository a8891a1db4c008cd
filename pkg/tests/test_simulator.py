import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urnmoments.errors import TenabilityViolation
from urnmoments.exact_moments import exact_covariance, exact_mean
from urnmoments.simulator import convergence_probe, estimate_moments, simulate_states, step
from urnmoments.urn_model import check_balance, make_urn, total_activity

from conftest import balanced_urns


def test_step_single_active_colour(friedman):
    for seed in range(20):
        np.testing.assert_array_equal(step([1, 0], friedman, seed), [1, 1])


def test_step_symmetric_draws(friedman):
    rng = np.random.default_rng(3)
    draws = np.array([step([1, 1], friedman, rng) for _ in range(4000)])
    frac = np.mean(draws[:, 1] == 2)
    assert abs(frac - 0.5) < 4 * np.sqrt(0.25 / 4000)


def test_step_violation_carries_state_and_colour():
    spec = make_urn([1, 1], [[-2, 3], [1, 0]], [1, 1])
    with pytest.raises(TenabilityViolation) as info:
        for seed in range(50):
            step([1, 1], spec, seed)
    assert info.value.color == 1  # colours are reported 1-indexed
    np.testing.assert_array_equal(info.value.state, [-1, 4])


def test_simulation_violation_propagates():
    spec = make_urn([1, 1], [[-2, 3], [1, 0]], [1, 1])
    with pytest.raises(TenabilityViolation):
        estimate_moments(spec, 5, 20, 0)


def test_ebad_never_produces_colour_three(ebad):
    states = simulate_states(ebad, [10_000], 8, 11)[10_000]
    assert not states[:, 2].any()


def test_determinism_and_block_invariance(jordan):
    a = simulate_states(jordan, [7, 300], 50, 42)
    b = simulate_states(jordan, [7, 300], 50, 42, block_reps=7)
    for n in a:
        np.testing.assert_array_equal(a[n], b[n])
    first = simulate_states(jordan, [300], 20, 42)[300]
    np.testing.assert_array_equal(first, a[300][:20])


@settings(max_examples=25)
@given(balanced_urns(q_max=4), st.integers(1, 60), st.integers(0, 2**63))
def test_balance_invariant(spec, n, seed):
    states = simulate_states(spec, [n - 1, n], 5, seed)
    w = total_activity(spec, n)
    np.testing.assert_allclose(states[n] @ spec.a, w, rtol=1e-12)
    np.testing.assert_allclose(states[n] @ spec.a - states[n - 1] @ spec.a, check_balance(spec), atol=1e-12 * w)
    assert (states[n] >= 0).all()


def test_friedman_estimate_against_exact(friedman):
    est = estimate_moments(friedman, 1000, 10_000, 2024)
    m = exact_mean(friedman, 1000)
    assert np.all(np.abs(est.mean_hat - m) <= 4 * est.mean_se)
    assert friedman.a @ est.mean_hat == pytest.approx(total_activity(friedman, 1000), rel=1e-14)
    np.testing.assert_allclose(est.cov_hat, est.cov_hat.T)


def test_friedman_covariance_at_ten_thousand(friedman):
    est = estimate_moments(friedman, 10_000, 2000, 5)
    V = exact_covariance(friedman, 10_000).covariance
    assert np.abs(est.cov_hat - V).max() <= 0.05 * np.trace(V) + 4 * est.cov_se


def test_estimate_needs_two_reps(friedman):
    with pytest.raises(ValueError):
        estimate_moments(friedman, 10, 1, 0)


def test_probe_l2_decreasing(friedman):
    rows = convergence_probe(friedman, [100, 1000, 10_000], 1000, 7)
    errs = [r.l2_error for r in rows]
    assert errs[0] > errs[1] > errs[2]
    assert [r.normalizer for r in rows] == [100, 1000, 10_000]


def test_probe_critical_trend(e2):
    rows = convergence_probe(e2, [1000, 10_000, 100_000], 1000, 8)
    vals = [r.cov_normalized[0, 0] for r in rows]
    assert abs(vals[-1] - 0.25) <= 0.15 * 0.25


def test_probe_degenerate_trend(tri03):
    rows = convergence_probe(tri03, [100, 1000, 10_000], 1000, 9)
    traces = [np.trace(r.cov_normalized) for r in rows]
    assert traces[0] > traces[1] > traces[2]
    assert traces[-1] < 0.05
