import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from urnmoments.asymptotics import matrix_B
from urnmoments.corpus import load_corpus
from urnmoments.errors import CapExceeded, DominantMismatch, DominantNotSimple, PoleProximity
from urnmoments.exact_moments import (
    F_direct,
    F_gamma,
    exact_covariance,
    exact_mean,
    gamma_ratio_derivatives,
    moment_path,
    propagated_contributions,
    y_covariance,
)
from urnmoments.generators import random_balanced_urn
from urnmoments.spectral import decompose_urn, spectral_decomposition
from urnmoments.urn_model import intensity_matrix, make_urn, total_activity

from conftest import balanced_urns

FRIEDMAN_VAR1 = np.array([[0.25, -0.25], [-0.25, 0.25]])


def complete_corpus():
    return [u for u in load_corpus() if not u.incomplete]


def test_F_trivial_and_first_step(friedman):
    np.testing.assert_array_equal(F_direct(friedman, 7, 7), np.eye(2))
    np.testing.assert_allclose(F_direct(friedman, 0, 1), [[1, 0.5], [0.5, 1]])
    d = decompose_urn(friedman)
    np.testing.assert_allclose(F_gamma(friedman, d, 0, 1), [[1, 0.5], [0.5, 1]], atol=1e-14)


@pytest.mark.parametrize("spec", complete_corpus(), ids=lambda u: u.name)
def test_F_semigroup(spec):
    np.testing.assert_allclose(F_direct(spec, 0, 5), F_direct(spec, 3, 5) @ F_direct(spec, 0, 3), atol=1e-12)


def test_F_gamma_dominant_action(e2):
    d = decompose_urn(e2)
    w0 = e2.w0
    for i, j in [(0, 10), (3, 50), (20, 400)]:
        np.testing.assert_allclose(F_gamma(e2, d, i, j) @ d.P1, (j + w0) / (i + w0) * d.P1, rtol=1e-12)


def test_F_gamma_jordan_block(jordan):
    d = decompose_urn(jordan)
    for i, j in [(0, 1), (2, 30), (10, 1000)]:
        direct = F_direct(jordan, i, j)
        np.testing.assert_allclose(F_gamma(jordan, d, i, j), direct, rtol=1e-9, atol=1e-9 * np.abs(direct).max())


def test_F_gamma_random_urn():
    spec = random_balanced_urn(11, 4)
    d = spectral_decomposition(intensity_matrix(spec))
    direct = F_direct(spec, 10, 1000)
    rel = np.abs(F_gamma(spec, d, 10, 1000) - direct).max() / np.abs(direct).max()
    assert rel < 1e-8


def test_gamma_ratio_derivatives_against_lgamma():
    lam, i, j, w0 = 0.37, 2, 40, 1.5
    ders = gamma_ratio_derivatives(lam, i, j, w0, 2)

    def f(z):
        return math.exp(math.lgamma(j + w0 + z) + math.lgamma(i + w0) - math.lgamma(j + w0) - math.lgamma(i + w0 + z))

    h = 1e-4
    assert ders[0].real == pytest.approx(f(lam), rel=1e-12)
    assert ders[1].real == pytest.approx((f(lam + h) - f(lam - h)) / (2 * h), rel=1e-7)
    assert ders[2].real == pytest.approx((f(lam + h) - 2 * f(lam) + f(lam - h)) / h**2, rel=1e-5)


def test_pole_proximity():
    with pytest.raises(PoleProximity):
        gamma_ratio_derivatives(-3.0, 0, 10, 1.0, 0)


def test_exact_mean_examples(friedman):
    np.testing.assert_allclose(exact_mean(friedman, 1), [1.5, 1.5])
    np.testing.assert_array_equal(exact_mean(friedman, 0), friedman.x0)
    np.testing.assert_allclose(exact_mean(friedman, 100, "F_matrix"), exact_mean(friedman, 100), rtol=1e-10)


@given(balanced_urns(), st.integers(0, 300))
def test_mean_lies_on_balance_line(spec, n):
    m = exact_mean(spec, n)
    w = total_activity(spec, n)
    assert spec.a @ m == pytest.approx(w, rel=1e-12)
    np.testing.assert_allclose(exact_mean(spec, n, "F_matrix"), m, rtol=1e-10, atol=1e-10 * w)


def test_covariance_examples(friedman):
    assert not exact_covariance(friedman, 0).covariance.any()
    np.testing.assert_allclose(exact_covariance(friedman, 1).covariance, FRIEDMAN_VAR1, atol=1e-15)
    sigma = np.array([[1, -1], [-1, 1]]) / 12
    V = exact_covariance(friedman, 10_000).covariance / 10_000
    assert np.abs(V - sigma).max() / (1 / 12) < 0.02


def test_friedman_variance_closed_form(friedman):
    # symmetric start: Var(X_n1) = (n + 2) / 12 for n >= 1 with X_0 = (1, 1)
    for n in (1, 5, 40, 300):
        assert exact_covariance(friedman, n).covariance[0, 0] == pytest.approx((n + 2) / 12, rel=1e-12)


@pytest.mark.parametrize("spec", complete_corpus(), ids=lambda u: u.name)
def test_recursion_matches_sum_formula(spec):
    rec = exact_covariance(spec, 300).covariance
    tot = exact_covariance(spec, 300, method="sum_formula").covariance
    np.testing.assert_allclose(tot, rec, rtol=1e-9, atol=1e-9 * np.abs(rec).max())


@given(balanced_urns(), st.integers(1, 200))
def test_covariance_invariants(spec, n):
    m = exact_covariance(spec, n)
    scale = max(1.0, np.abs(m.second_moment).max())
    np.testing.assert_allclose(m.covariance, m.covariance.T)
    assert np.linalg.eigvalsh(m.covariance).min() >= -1e-10 * scale
    assert abs(spec.a @ m.covariance @ spec.a) <= 1e-10 * scale * (spec.a @ spec.a)


def test_cap():
    spec = make_urn([1, 1], [[0, 1], [1, 0]], [1, 1])
    with pytest.raises(CapExceeded):
        exact_covariance(spec, 11, cap=10)


def test_moment_path_matches_single_runs(e2):
    path = moment_path(e2, [0, 10, 250])
    for m in path:
        np.testing.assert_allclose(m.covariance, exact_covariance(e2, m.n).covariance, rtol=1e-13, atol=1e-13)


def test_y_covariance_friedman(friedman):
    np.testing.assert_allclose(y_covariance(friedman, 1), FRIEDMAN_VAR1, atol=1e-15)
    d = decompose_urn(friedman)
    target = matrix_B(friedman, d.v1) - np.outer(d.v1, d.v1)
    np.testing.assert_allclose(target, FRIEDMAN_VAR1, atol=1e-15)
    ctx = exact_covariance(friedman, 9999)
    Y = y_covariance(friedman, 10_000, ctx)
    assert np.abs(Y - target).max() <= 0.01 * np.abs(target).max()


def test_y_covariance_kills_activity_direction(jordan):
    for i in (1, 2, 17):
        Y = y_covariance(jordan, i)
        assert abs(jordan.a @ Y @ jordan.a) < 1e-10 * np.abs(Y).max()
        assert np.linalg.eigvalsh(Y).min() > -1e-10 * np.abs(Y).max()


@pytest.mark.parametrize("name", ["friedman", "triangular_0.3", "jordan_critical"])
def test_y_covariance_tends_to_limit(name):
    spec = next(u for u in complete_corpus() if u.name == name)
    d = decompose_urn(spec)
    target = matrix_B(spec, d.v1) - d.lambda1**2 * np.outer(d.v1, d.v1)
    errors = []
    path = {m.n: m for m in moment_path(spec, [9, 99, 999, 9999])}
    for i in (10, 100, 1000, 10_000):
        errors.append(np.linalg.norm(y_covariance(spec, i, path[i - 1]) - target))
    assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(errors, errors[1:]))
    assert errors[-1] <= 0.05 * max(np.linalg.norm(target), 1.0)


def test_contributions_sum_to_trace(friedman):
    c = propagated_contributions(friedman, 100)
    assert c.sum() == pytest.approx(np.trace(exact_covariance(friedman, 100).covariance), rel=1e-8)
    assert c[-1] == pytest.approx(np.trace(y_covariance(friedman, 100)), rel=1e-12)


@pytest.mark.parametrize("spec", [u for u in complete_corpus() if u.name in ("friedman", "triangular_0.3", "jordan_critical")],
                         ids=lambda u: u.name)
def test_mean_error_order_bounded(spec):
    d = decompose_urn(spec)
    ratios = []
    for m in moment_path(spec, [100, 1000, 10_000, 100_000]):
        err = np.linalg.norm(m.mean - (m.n * d.lambda1 + spec.w0) * d.v1)
        rate = m.n ** (d.lambda2.real / d.lambda1) * math.log(m.n) ** d.nu2
        # errors at rounding level of |E X_n| count as zero
        floor = 1e-10 * np.linalg.norm(m.mean) / rate
        ratios.append((err / rate, floor))
    r1 = ratios[0][0]
    assert all(r <= 1.05 * max(r1, f) for r, f in ratios)


def test_ebad_exact_mean_keeps_colour_three_empty(ebad):
    m = exact_covariance(ebad, 200)
    assert m.mean[2] == 0 and m.covariance[2, 2] == 0
    with pytest.raises(DominantMismatch):
        decompose_urn(ebad)


def test_polya_exact_moments_exist(polya):
    with pytest.raises(DominantNotSimple):
        decompose_urn(polya)
    # X_n1 is uniform on 1..n+1 for the original urn from (1, 1)
    n = 50
    assert exact_covariance(polya, n).covariance[0, 0] == pytest.approx(((n + 1) ** 2 - 1) / 12, rel=1e-12)
