"""Asymptotic mean and covariance of a balanced urn.

The mean grows along ``(n lambda_1 + a.X_0) v_1``.  For strictly small urns
``Var(X_n) / n`` converges to ``Sigma = lambda_1 Sigma_I`` where

    Sigma_I = int_0^inf Phat e^{sA} B e^{sA'} Phat' e^{-lambda_1 s} ds,

and for critically small urns ``Var(X_n) / (n log^{2 nu_2 + 1} n)``
converges to a sum over the eigenvalues on the line ``Re lambda = lambda_1/2``.
Large urns are classified and refused.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, linalg
from scipy.sparse.csgraph import connected_components

from .config import DEFAULT, Tolerances
from .errors import HypothesisFailed, IrreducibilityRequired, LargeUrn, NotStrictlySmall, SingularSolve
from .exact_moments import propagated_contributions
from .spectral import (
    SpectralDecomposition,
    UrnClass,
    UrnKind,
    apply_entire_function,
    classify,
    decompose_urn,
    realify,
    spectral_decomposition,
)
from .urn_model import UrnSpec, check_balance, intensity_matrix, second_moment_matrices

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AsymptoticReport:
    """Limits of the first two moments, with the checks that back them.

    Exactly one of ``Sigma`` (strictly small) and ``tv2_limit`` (critically
    small) is set; ``normalization`` names the divisor of ``Var(X_n)``.
    """

    lambda1: float
    lambda2: complex
    nu2: int
    urn_class: UrnClass
    mean_slope: np.ndarray
    mean_intercept: np.ndarray
    B: np.ndarray
    Sigma_I: Optional[np.ndarray] = None
    Sigma: Optional[np.ndarray] = None
    tv2_limit: Optional[np.ndarray] = None
    normalization: str = "n"
    null_space: Optional[np.ndarray] = None
    checks: dict = field(default_factory=dict)

    @property
    def limit(self) -> np.ndarray:
        """The covariance limit under :attr:`normalization`."""
        return self.Sigma if self.Sigma is not None else self.tv2_limit

    def normalizer(self, n: float) -> float:
        """Numerical value of the normalization at ``n``."""
        if self.tv2_limit is None:
            return float(n)
        return float(n) * math.log(n) ** (2 * self.nu2 + 1)


def normalization_label(nu2: int, critical: bool) -> str:
    """``"n"``, ``"n*log(n)"``, ``"n*log^3(n)"``, ..."""
    if not critical:
        return "n"
    k = 2 * nu2 + 1
    return "n*log(n)" if k == 1 else f"n*log^{k}(n)"


# ---------------------------------------------------------------------------
# B and the projection identity
# ---------------------------------------------------------------------------


def matrix_B(spec: UrnSpec, v1: np.ndarray, tol: Tolerances = DEFAULT) -> np.ndarray:
    """``B = sum_i a_i v1_i E(xi_i xi_i')``.

    A negative ``v1`` entry (possible when the active part of ``A`` is
    reducible) is logged, since ``B`` may then be indefinite.
    """
    v1 = np.asarray(v1, dtype=float)
    if np.any(v1 < -tol.balance):
        log.warning("v1 has negative entries %s; B may be indefinite", v1[v1 < -tol.balance])
    S = second_moment_matrices(spec)
    B = sum(ai * vi * Si for ai, vi, Si in zip(spec.a, v1, S))
    return (B + B.T) / 2


def pbp_identity_check(B, Phat, lambda1, v1) -> float:
    """Largest of ``||Phat B - B Phat'||`` and ``||Phat B Phat' - (B - lambda1^2 v1 v1')||``."""
    B, Phat, v1 = (np.asarray(x, dtype=float) for x in (B, Phat, v1))
    r1 = np.linalg.norm(Phat @ B - B @ Phat.T, 2)
    r2 = np.linalg.norm(Phat @ B @ Phat.T - (B - lambda1**2 * np.outer(v1, v1)), 2)
    return float(max(r1, r2))


# ---------------------------------------------------------------------------
# Sigma_I
# ---------------------------------------------------------------------------


def _rest_clusters(decomp: SpectralDecomposition, lambda1: float):
    k = int(np.argmin([abs(c.eigenvalue - lambda1) for c in decomp.clusters]))
    return [c for i, c in enumerate(decomp.clusters) if i != k]


def _require_strictly_small(rest, lambda1, tol):
    top = max(c.eigenvalue.real for c in rest)
    if top >= lambda1 / 2 - tol.classify_rel * lambda1:
        raise NotStrictlySmall(
            f"Re lambda_2 = {top:.6g} is not below lambda_1/2 = {lambda1 / 2:.6g}; "
            "the covariance integral diverges"
        )
    return top


def sigma_I_quadrature(
    A,
    B,
    Phat,
    lambda1: float,
    quad_tol: Optional[float] = None,
    decomp: Optional[SpectralDecomposition] = None,
    tol: Tolerances = DEFAULT,
) -> np.ndarray:
    """``Sigma_I`` by adaptive quadrature of the improper integral.

    ``Phat e^{sA}`` is evaluated by the functional calculus over the
    non-dominant eigenvalues only, so no cancellation against the growing
    ``e^{lambda_1 s}`` part occurs.  The range is cut at ``s*`` where the tail
    bound ``C s^{2 nu} e^{-(lambda_1 - 2 Re lambda_2) s}`` drops below
    ``quad_tol``; ``C`` is estimated by sampling the integrand.

    Raises
    ------
    NotStrictlySmall
        ``Re lambda_2 >= lambda_1 / 2``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    quad_tol = tol.quad if quad_tol is None else quad_tol
    if decomp is None:
        decomp = spectral_decomposition(A, tol=tol)
    rest = _rest_clusters(decomp, lambda1)
    top = _require_strictly_small(rest, lambda1, tol)
    Phat_calc = sum(c.P for c in rest)
    mismatch = np.linalg.norm(Phat_calc - np.asarray(Phat), 2)
    if mismatch > 1e-6 * max(1.0, np.linalg.norm(Phat, 2)):
        log.warning("supplied Phat differs from the spectral complement by %.3g", mismatch)

    rate = lambda1 - 2 * top
    nu = max(c.nu for c in rest)

    def integrand(s):
        # Phat e^{sA} e^{-lambda_1 s / 2}, damped inside the exponent to avoid overflow
        ders = [[s**m * np.exp(s * (c.eigenvalue - lambda1 / 2)) for m in range(c.nu + 1)] for c in rest]
        G = apply_entire_function(decomp, ders, rest)
        return (G @ B @ G.conj().T).real

    def bound(s):
        return s ** (2 * nu) * math.exp(-rate * s)

    # constant of the tail bound, sampled on [1, s1] with a safety factor
    s1 = 1.0 + 60.0 / rate
    samples = np.linspace(1.0, s1, 241)
    C = 10.0 * max(np.linalg.norm(integrand(s), 2) / bound(s) for s in samples)
    if C == 0.0:
        return np.zeros_like(B)
    s_star = 1.0
    while C * bound(s_star) >= quad_tol or (nu > 0 and s_star < 2 * nu / rate):
        s_star *= 1.5
        if s_star > 1e7:
            raise NotStrictlySmall("integrand decays too slowly to truncate")
    # split at a few points so the adaptive rule sees the early oscillations
    edges = np.unique(np.concatenate([[0.0], np.geomspace(min(1.0, s_star), s_star, 6)]))
    total = np.zeros_like(B)
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad_vec(integrand, lo, hi, epsabs=quad_tol, epsrel=1e-13, limit=2000)
        total += val
    log.debug("Sigma_I quadrature: s*=%.3g, C=%.3g", s_star, C)
    return (total + total.T) / 2


def sigma_I_lyapunov(A, B, Phat, lambda1: float, tol: Tolerances = DEFAULT) -> np.ndarray:
    """``Sigma_I`` from ``(A - lambda_1/2) X + X (A - lambda_1/2)' = -Phat B Phat'``.

    The equation is solved on the range of ``Phat``, which ``A`` leaves
    invariant and where ``A - lambda_1/2`` is stable.

    Raises
    ------
    NotStrictlySmall
        ``A`` restricted to the range of ``Phat`` has an eigenvalue with real
        part at least ``lambda_1 / 2``.
    SingularSolve
        The restricted operator is numerically singular.
    """
    A, B, Phat = (np.asarray(x, dtype=float) for x in (A, B, Phat))
    Q = linalg.orth(Phat)
    Ar = Q.T @ A @ Q
    eig = np.linalg.eigvals(Ar)
    top = float(np.max(eig.real)) if eig.size else -np.inf
    if top >= lambda1 / 2 - tol.classify_rel * lambda1:
        raise NotStrictlySmall(f"Re lambda_2 = {top:.6g} is not below lambda_1/2 = {lambda1 / 2:.6g}")
    M = Ar - lambda1 / 2 * np.eye(Ar.shape[0])
    # the Lyapunov operator has eigenvalues mu_i + conj(mu_j); 2 * min |Re mu| bounds its smallest
    gap = 2 * float(np.min(np.abs(np.linalg.eigvals(M).real)))
    if gap < 1e-12 * max(1.0, np.linalg.norm(M, 2)):
        raise SingularSolve(f"restricted Lyapunov operator is singular (spectral gap {gap:.3g})")
    C = Q.T @ Phat @ B @ Phat.T @ Q
    X = linalg.solve_continuous_lyapunov(M, -C)
    S = Q @ X @ Q.T
    return (S + S.T) / 2


# ---------------------------------------------------------------------------
# mean and covariance limits
# ---------------------------------------------------------------------------


def _decomp(spec, decomp, tol):
    return decompose_urn(spec, tol=tol) if decomp is None else decomp


def mean_error_order(decomp: SpectralDecomposition):
    """``(Re lambda_2 / lambda_1, nu_2)``: the error of the mean is ``O(n^e log^nu n)``."""
    return decomp.lambda2.real / decomp.lambda1, decomp.nu2


def asymptotic_mean(spec: UrnSpec, n, decomp: Optional[SpectralDecomposition] = None, tol: Tolerances = DEFAULT) -> np.ndarray:
    """``(n lambda_1 + a.X_0) v_1``, the linear asymptote of ``E X_n``.

    At ``n = 0`` this is the intercept, not ``X_0``.

    Raises
    ------
    HypothesisFailed
        ``Re lambda_2 >= lambda_1``.
    """
    decomp = _decomp(spec, decomp, tol)
    if decomp.lambda2.real >= decomp.lambda1 * (1 - tol.classify_rel):
        raise HypothesisFailed(f"Re lambda_2 = {decomp.lambda2.real:.6g} is not below lambda_1 = {decomp.lambda1:.6g}")
    return (n * decomp.lambda1 + float(spec.a @ spec.x0)) * decomp.v1


def _null_space(S, tol):
    w, V = np.linalg.eigh(S)
    cut = tol.degeneracy * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    return V[:, np.abs(w) <= cut]


def tv2_limit(decomp: SpectralDecomposition, B, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Limit of ``Var(X_n) / (n log^{2 nu_2 + 1} n)`` for critically small urns.

    Sums ``N^{nu_2} P B P* (N*)^{nu_2}`` over every cluster on the line
    ``Re lambda = lambda_1 / 2`` (conjugates appear separately), scaled by
    ``lambda_1^{-2 nu_2} / ((2 nu_2 + 1) (nu_2!)^2)``.
    """
    lam1, nu2 = decomp.lambda1, decomp.nu2
    eps = max(tol.classify_rel * lam1, decomp.cluster_tol)
    total = np.zeros(decomp.A.shape, dtype=complex)
    for c in decomp.clusters[1:]:
        if abs(c.eigenvalue.real - lam1 / 2) > eps:
            continue
        K = np.linalg.matrix_power(c.N, nu2) @ c.P
        total += K @ B @ K.conj().T
    scale = lam1 ** (-2 * nu2) / ((2 * nu2 + 1) * math.factorial(nu2) ** 2)
    L = realify(scale * total, tol, "critical covariance limit")
    return (L + L.T) / 2


def asymptotic_covariance(
    spec: UrnSpec,
    decomp: Optional[SpectralDecomposition] = None,
    crosscheck: bool = True,
    tol: Tolerances = DEFAULT,
) -> AsymptoticReport:
    """Covariance limit for a small urn, with supporting checks.

    Strictly small urns get ``Sigma = lambda_1 Sigma_I``; ``Sigma_I`` comes from
    quadrature, cross-checked against the Lyapunov solve when ``crosscheck``.
    Critically small urns get the ``n log^{2 nu_2 + 1} n`` limit.

    Raises
    ------
    LargeUrn
        ``Re lambda_2 > lambda_1 / 2``; limits are not normal and have no
        simple description.
    """
    decomp = _decomp(spec, decomp, tol)
    cls = classify(decomp, tol)
    lam1, v1 = decomp.lambda1, decomp.v1
    if cls.kind is UrnKind.LARGE:
        raise LargeUrn(
            f"large urn (Re lambda_2 = {decomp.lambda2.real:.6g} > lambda_1/2 = {lam1 / 2:.6g}); "
            "its fluctuations are of order n^(Re lambda_2/lambda_1) and not covered here"
        )
    if not cls.is_small:
        raise HypothesisFailed(f"covariance limit needs a small urn, got {cls}")
    B = matrix_B(spec, v1, tol)
    checks = {"pbp_residual": pbp_identity_check(B, decomp.Phat, lam1, v1)}
    common = dict(
        lambda1=lam1,
        lambda2=decomp.lambda2,
        nu2=decomp.nu2,
        urn_class=cls,
        mean_slope=lam1 * v1,
        mean_intercept=float(spec.a @ spec.x0) * v1,
        B=B,
    )
    a = spec.a
    if cls.kind is UrnKind.STRICTLY_SMALL:
        SI = sigma_I_quadrature(decomp.A, B, decomp.Phat, lam1, decomp=decomp, tol=tol)
        if crosscheck:
            SL = sigma_I_lyapunov(decomp.A, B, decomp.Phat, lam1, tol)
            # floor the scale so that two vanishing answers compare as equal
            floor = 1e-6 * max(np.linalg.norm(B, 2), 1e-300) / lam1
            scale = max(np.linalg.norm(SI, 2), np.linalg.norm(SL, 2), floor)
            checks["quadrature_vs_lyapunov"] = float(np.linalg.norm(SI - SL, 2) / scale)
            if checks["quadrature_vs_lyapunov"] > tol.sigma_crosscheck:
                log.warning("Sigma_I routes disagree: %.3g", checks["quadrature_vs_lyapunov"])
        Sigma = lam1 * SI
        checks["a_Sigma_a"] = float(a @ Sigma @ a)
        return AsymptoticReport(
            **common, Sigma_I=SI, Sigma=Sigma, normalization="n", null_space=_null_space(Sigma, tol), checks=checks
        )
    L = tv2_limit(decomp, B, tol)
    checks["a_limit_a"] = float(a @ L @ a)
    return AsymptoticReport(
        **common,
        tv2_limit=L,
        normalization=normalization_label(decomp.nu2, True),
        null_space=_null_space(L, tol),
        checks=checks,
    )


# ---------------------------------------------------------------------------
# degeneracy, irreducibility, variance profile
# ---------------------------------------------------------------------------


def irreducibility_check(A, a, tol: Tolerances = DEFAULT) -> bool:
    """Strong connectivity of the intensity graph on the active colours.

    Colours with zero activity are removed; ``j -> i`` is an edge when
    ``A[i, j]`` is non-zero.
    """
    A = np.asarray(A, dtype=float)
    active = np.flatnonzero(np.asarray(a, dtype=float) > 0)
    if active.size <= 1:
        return True
    sub = A[np.ix_(active, active)]
    adj = (np.abs(sub.T) > tol.graph_zero).astype(int)  # adj[j, i]: edge j -> i
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    return n_comp == 1


@dataclass(frozen=True)
class DegeneracyResult:
    degenerate: bool
    quadratic_form: float
    structural_residual: Optional[float] = None
    increment: Optional[float] = None


def degeneracy_test(spec: UrnSpec, report: AsymptoticReport, u, tol: Tolerances = DEFAULT) -> DegeneracyResult:
    """Is ``u . X_n`` asymptotically deterministic (``u' Sigma u = 0``)?

    When degenerate, the structural reason is checked too: ``u' Phat v = 0`` for
    every atom ``v`` of every active colour's replacement law, so that each
    step adds the constant ``b (u . v_1)`` to ``u . X_n``.

    Raises
    ------
    NotStrictlySmall
        ``report`` has no ``Sigma``.
    IrreducibilityRequired
        The active part of ``A`` is reducible.
    """
    if report.Sigma is None:
        raise NotStrictlySmall("degeneracy test needs a strictly small urn")
    A = intensity_matrix(spec)
    if not irreducibility_check(A, spec.a, tol):
        raise IrreducibilityRequired("degeneracy characterization needs the active intensity matrix to be irreducible")
    u = np.asarray(u, dtype=float)
    form = float(u @ report.Sigma @ u)
    cut = tol.degeneracy * max(1.0, np.linalg.norm(report.Sigma, 2)) * max(1.0, float(u @ u))
    if form >= cut:
        return DegeneracyResult(False, form)
    v1 = report.mean_slope / report.lambda1
    Phat = np.eye(spec.q) - np.outer(v1, spec.a)
    residual = 0.0
    for ai, law in zip(spec.a, spec.replacements):
        if ai > 0:
            residual = max(residual, float(np.max(np.abs(law.vectors @ Phat.T @ u))))
    if residual > 1e-9 * max(1.0, float(np.abs(u).max())):
        log.warning("u' Sigma u vanishes but u' Phat xi is not zero (%.3g)", residual)
    b = check_balance(spec, tol)
    return DegeneracyResult(True, form, residual, b * float(u @ v1))


def contribution_profile(spec: UrnSpec, n: int, grid=None, tol: Tolerances = DEFAULT):
    """Per-draw variance contributions ``trace(F_{l,n} E(Y_l Y_l') F_{l,n}')``.

    Returns ``(l, contribution)`` pairs for ``l`` in ``grid`` (all draws by
    default); over the full grid they sum to ``trace Var(X_n)``.
    """
    contrib = propagated_contributions(spec, n, tol=tol)
    grid = range(1, n + 1) if grid is None else grid
    out = []
    for ell in grid:
        if not 1 <= ell <= n:
            raise ValueError(f"draw index {ell} outside 1..{n}")
        out.append((int(ell), float(contrib[ell - 1])))
    return out


__all__ = [
    "AsymptoticReport",
    "DegeneracyResult",
    "matrix_B",
    "pbp_identity_check",
    "sigma_I_quadrature",
    "sigma_I_lyapunov",
    "mean_error_order",
    "asymptotic_mean",
    "tv2_limit",
    "asymptotic_covariance",
    "irreducibility_check",
    "degeneracy_test",
    "contribution_profile",
    "normalization_label",
]
