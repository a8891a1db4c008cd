"""Exact finite-n mean and covariance of the composition vector.

Balance makes the total activity ``w_k = w_0 + k b`` deterministic, so

    E X_n = F_{0,n} X_0,   F_{i,j} = prod_{i <= k < j} (I + A / w_k),

and the covariance is the sum of the propagated martingale increments
``F_{i,n} E(Y_i Y_i') F_{i,n}'``.  The default route is an O(n q^3)
recursion on the first two moments; the sum formula is kept as an
independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import CapExceeded, PoleProximity
from .spectral import SpectralDecomposition, apply_entire_function, realify
from .urn_model import UrnSpec, check_balance, intensity_matrix, second_moment_matrices, total_activity

DEFAULT_CAP = 100_000


@dataclass(frozen=True, eq=False)
class ExactMoments:
    n: int
    mean: np.ndarray
    second_moment: np.ndarray
    covariance: np.ndarray
    y_covariances: Optional[list] = None


class _Urn:
    """Float view of a balanced urn shared by the recursions below."""

    def __init__(self, spec: UrnSpec, tol: Tolerances = DEFAULT):
        self.b = check_balance(spec, tol)
        self.A = intensity_matrix(spec)
        self.a = spec.a
        self.x0 = spec.x0
        self.w0 = spec.w0
        self.S = np.array(second_moment_matrices(spec))
        self.q = spec.q

    def w(self, k):
        return self.w0 + k * self.b

    def dd_moment(self, m, k):
        """E(dX_k dX_k') given E X_k = m."""
        return np.einsum("j,jrs->rs", self.a * m / self.w(k), self.S)


def _check_cap(n, cap):
    if n < 0:
        raise ValueError("n must be non-negative")
    if cap is not None and n > cap:
        raise CapExceeded(f"n={n} exceeds the configured cap {cap}")


# ---------------------------------------------------------------------------
# propagation matrices
# ---------------------------------------------------------------------------


def F_direct(spec: UrnSpec, i: int, j: int, tol: Tolerances = DEFAULT) -> np.ndarray:
    """The ordered product ``(I + A/w_{j-1}) ... (I + A/w_i)``."""
    if not 0 <= i <= j:
        raise ValueError("need 0 <= i <= j")
    urn = _Urn(spec, tol)
    eye = np.eye(urn.q)
    F = eye.copy()
    for k in range(i, j):
        F = (eye + urn.A / urn.w(k)) @ F
    return F


def gamma_ratio_derivatives(lam: complex, i: int, j: int, w0: float, order: int, pole_tol: float = 1e-6):
    """``f(lam), f'(lam), ..., f^(order)(lam)`` for ``f(z) = prod_{i<=k<j} (k + w0 + z) / (k + w0)``.

    This is the Gamma ratio ``Gamma(j+w0+z) Gamma(i+w0) / (Gamma(j+w0) Gamma(i+w0+z))``,
    evaluated as a finite product.  Derivatives follow from the logarithmic
    derivatives ``g^(m) = sum_k (-1)^(m-1) (m-1)! / (k + w0 + z)^m`` and the
    recursion ``f^(m+1) = sum_r C(m, r) g^(r+1) f^(m-r)``.
    """
    k = np.arange(i, j, dtype=float)
    base = k + w0
    shifted = base + lam
    if shifted.size and np.min(np.abs(shifted)) < pole_tol:
        kk = int(k[np.argmin(np.abs(shifted))])
        raise PoleProximity(f"factor k + w0 + lambda = {shifted[kk - i]:.3g} vanishes at k={kk}")
    f0 = complex(np.prod(shifted / base)) if shifted.size else 1.0 + 0j
    ders = [f0]
    if order == 0:
        return ders
    g = [None] + [
        (-1) ** (m - 1) * math.factorial(m - 1) * complex(np.sum(shifted ** (-float(m)))) for m in range(1, order + 1)
    ]
    for m in range(order):
        ders.append(sum(math.comb(m, r) * g[r + 1] * ders[m - r] for r in range(m + 1)))
    return ders


def F_gamma(spec: UrnSpec, decomp: SpectralDecomposition, i: int, j: int, tol: Tolerances = DEFAULT) -> np.ndarray:
    """``F_{i,j}`` through the functional calculus of the Gamma ratio.

    Works on the urn rescaled to ``b = 1`` (activities divided by ``b``),
    for which the eigenvalues and nilpotent parts are divided by ``b``.
    """
    if not 0 <= i <= j:
        raise ValueError("need 0 <= i <= j")
    b = check_balance(spec, tol)
    w0 = spec.w0 / b
    derivs = []
    for c in decomp.clusters:
        ders = gamma_ratio_derivatives(c.eigenvalue / b, i, j, w0, c.nu, tol.pole)
        derivs.append([d / b**m for m, d in enumerate(ders)])
    return realify(apply_entire_function(decomp, derivs), tol, "F_gamma")


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


def exact_mean(spec: UrnSpec, n: int, method: str = "recursion", tol: Tolerances = DEFAULT) -> np.ndarray:
    """``E X_n`` either by ``m_{k+1} = (I + A/w_k) m_k`` or as ``F_{0,n} X_0``."""
    _check_cap(n, None)
    if method == "F_matrix":
        return F_direct(spec, 0, n, tol) @ spec.x0
    if method != "recursion":
        raise ValueError(f"unknown method {method!r}")
    urn = _Urn(spec, tol)
    m = urn.x0.copy()
    for k in range(n):
        m = m + urn.A @ m / urn.w(k)
    return m


def _moment_recursion(urn: _Urn, n: int, record=None, keep_y=False):
    """Run the two-moment recursion to ``n``; return states at ``record`` indices.

    The covariance ``V_k`` is propagated directly,

        V_{k+1} = G_k V_k G_k' + E(Y_{k+1} Y_{k+1}'),   G_k = I + A / w_k,

    with ``E(Y Y') = E(dX dX') - A (V_k + m_k m_k') A' / w_k^2``.  This is
    the second-moment recursion with ``m m'`` subtracted analytically; forming ``E(X X') - m m'`` at the end would cancel
    catastrophically once ``n`` is large.
    """
    m = urn.x0.copy()
    V = np.zeros((urn.q, urn.q))
    A = urn.A
    ys = [] if keep_y else None
    record = set(record or ())
    out = {}
    if 0 in record:
        out[0] = (m.copy(), V.copy())
    for k in range(n):
        wk = urn.w(k)
        Am = A @ m / wk
        AV = A @ V / wk
        # E(Y Y') = E(dX dX') - A E(X X') A' / w^2
        AVA = AV @ A.T / wk
        Y = urn.dd_moment(m, k) - AVA - np.outer(Am, Am)
        if keep_y:
            ys.append(Y)
        # Var E(X_{k+1} | F_k) + E Var(X_{k+1} | F_k)
        V = V + AV + AV.T + AVA + Y
        m = m + Am
        if k + 1 in record:
            out[k + 1] = (m.copy(), V.copy())
    return m, V, ys, out


def _moments(n, m, V, ys=None):
    V = (V + V.T) / 2
    return ExactMoments(n, m, V + np.outer(m, m), V, ys)


def exact_covariance(
    spec: UrnSpec,
    n: int,
    method: str = "recursion",
    cap: Optional[int] = DEFAULT_CAP,
    keep_y: bool = False,
    tol: Tolerances = DEFAULT,
) -> ExactMoments:
    """Exact mean, second moment and covariance of ``X_n``.

    ``method="recursion"`` propagates ``E X_k`` and ``Var X_k`` using
    ``E(dX dX' | F_k) = sum_j a_j X_kj / w_k E(xi_j xi_j')`` and
    ``E(dX | F_k) = A X_k / w_k``.  ``method="sum_formula"`` forms every
    ``E(Y_i Y_i')`` and sums ``F_{i,n} E(Y_i Y_i') F_{i,n}'``.
    """
    _check_cap(n, cap)
    urn = _Urn(spec, tol)
    if method == "recursion":
        m, V, ys, _ = _moment_recursion(urn, n, keep_y=keep_y)
        return _moments(n, m, V, ys)
    if method != "sum_formula":
        raise ValueError(f"unknown method {method!r}")
    m, _, ys, _ = _moment_recursion(urn, n, keep_y=True)
    eye = np.eye(urn.q)
    F = eye.copy()
    var = np.zeros((urn.q, urn.q))
    # i runs backwards so that F = F_{i,n} is built by right multiplication
    for i in range(n, 0, -1):
        var += F @ ys[i - 1] @ F.T
        F = F @ (eye + urn.A / urn.w(i - 1))
    var = (var + var.T) / 2
    return ExactMoments(n, m, var + np.outer(m, m), var, ys if keep_y else None)


def moment_path(spec: UrnSpec, ns: Iterable[int], cap: Optional[int] = DEFAULT_CAP, tol: Tolerances = DEFAULT):
    """Exact moments at each ``n`` in ``ns`` from a single recursion pass."""
    ns = sorted(set(int(x) for x in ns))
    if not ns:
        return []
    _check_cap(ns[-1], cap)
    urn = _Urn(spec, tol)
    _, _, _, out = _moment_recursion(urn, ns[-1], record=ns)
    return [_moments(k, *out[k]) for k in ns]


def y_covariance(spec: UrnSpec, i: int, moments: Optional[ExactMoments] = None, tol: Tolerances = DEFAULT) -> np.ndarray:
    """``E(Y_i Y_i') = E(dX dX') - A E(X X') A' / w^2`` at step ``i - 1``.

    ``moments`` may supply the exact moments at ``n = i - 1``.
    """
    if i < 1:
        raise ValueError("i must be at least 1")
    urn = _Urn(spec, tol)
    if moments is None:
        moments = exact_covariance(spec, i - 1, cap=None, tol=tol)
    elif moments.n != i - 1:
        raise ValueError(f"moments are for n={moments.n}, need n={i - 1}")
    k = i - 1
    C = urn.dd_moment(moments.mean, k) - urn.A @ moments.second_moment @ urn.A.T / urn.w(k) ** 2
    return (C + C.T) / 2


def propagated_contributions(spec: UrnSpec, n: int, cap: Optional[int] = DEFAULT_CAP, tol: Tolerances = DEFAULT):
    """``trace(F_{l,n} E(Y_l Y_l') F_{l,n}')`` for every draw ``l = 1..n``."""
    _check_cap(n, cap)
    urn = _Urn(spec, tol)
    _, _, ys, _ = _moment_recursion(urn, n, keep_y=True)
    eye = np.eye(urn.q)
    F = eye.copy()
    out = np.zeros(n)
    for i in range(n, 0, -1):
        out[i - 1] = np.trace(F @ ys[i - 1] @ F.T)
        F = F @ (eye + urn.A / urn.w(i - 1))
    return out


__all__ = [
    "ExactMoments",
    "F_direct",
    "F_gamma",
    "gamma_ratio_derivatives",
    "exact_mean",
    "exact_covariance",
    "moment_path",
    "y_covariance",
    "propagated_contributions",
    "total_activity",
]
