"""Spectral projections, nilpotent parts and the small/large classification.

The projections are obtained without forming a Jordan basis: the complex
Schur form of ``A`` is reordered so that one eigenvalue cluster comes first,
the off-diagonal block is removed with a Sylvester solve, and the resulting
block indicator is mapped back.  The nilpotent part is then ``A P - lambda P``.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .config import DEFAULT, Tolerances
from .errors import (
    ClusteringAmbiguous,
    DominantMismatch,
    DominantNotSimple,
    IllConditioned,
    MissingDerivatives,
)
from .urn_model import UrnSpec, check_balance, intensity_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EigenCluster:
    """One eigenvalue (cluster) with its projection ``P`` and nilpotent ``N``."""

    eigenvalue: complex
    multiplicity: int
    P: np.ndarray
    N: np.ndarray
    nu: int
    members: tuple = ()

    @property
    def is_real(self) -> bool:
        return self.eigenvalue.imag == 0.0


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigen-clusters of ``A`` ordered by decreasing real part, then index.

    The dominant fields (``u1``, ``v1``, ``P1``, ``Phat``) are ``None`` until
    :func:`dominant_eigendata` has been applied (see :func:`decompose_urn`).
    """

    A: np.ndarray
    clusters: tuple
    lambda1: float
    lambda2: complex
    nu2: int
    cluster_tol: float
    u1: Optional[np.ndarray] = None
    v1: Optional[np.ndarray] = None
    P1: Optional[np.ndarray] = None
    Phat: Optional[np.ndarray] = None
    warnings: tuple = ()

    @property
    def eigenvalues(self):
        return [c.eigenvalue for c in self.clusters]

    @property
    def has_dominant(self) -> bool:
        return self.v1 is not None

    def diagnostics(self) -> dict:
        q = self.A.shape[0]
        scale = max(np.linalg.norm(self.A, 2), 1e-300)
        recon = sum(c.eigenvalue * c.P + c.N for c in self.clusters)
        total = sum(c.P for c in self.clusters)
        idem = max(np.linalg.norm(c.P @ c.P - c.P, 2) for c in self.clusters)
        cross = 0.0
        for i, c in enumerate(self.clusters):
            for d in self.clusters[i + 1:]:
                cross = max(cross, np.linalg.norm(c.P @ d.P, 2))
        return {
            "reconstruction_residual": float(np.linalg.norm(recon - self.A, 2) / scale),
            "partition_residual": float(np.linalg.norm(total - np.eye(q), 2)),
            "idempotence_residual": float(idem),
            "cross_residual": float(cross),
            "max_projection_norm": float(max(np.linalg.norm(c.P, 2) for c in self.clusters)),
        }


class UrnKind(enum.Enum):
    STRICTLY_SMALL = "StrictlySmall"
    CRITICALLY_SMALL = "CriticallySmall"
    LARGE = "Large"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class UrnClass:
    kind: UrnKind
    reason: str = ""

    @property
    def is_small(self):
        return self.kind in (UrnKind.STRICTLY_SMALL, UrnKind.CRITICALLY_SMALL)

    def __str__(self):
        if self.kind is UrnKind.NOT_APPLICABLE and self.reason:
            return f"NotApplicable({self.reason})"
        return self.kind.value


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------


def _cluster(values, tol):
    """Single-linkage grouping of eigenvalues closer than ``tol``."""
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _projection(T, Z, select):
    """Spectral projection onto the invariant subspace of the selected diagonal."""
    q = T.shape[0]
    k = int(np.sum(select))
    if k == q:
        return np.eye(q, dtype=complex)
    ts, zs, _, m, _, _, info = lapack.ztrsen(select.astype(np.int32), T, Z, job="N")
    if info != 0 or m != k:
        raise IllConditioned(f"Schur reordering failed (info={info})")
    T11, T12, T22 = ts[:k, :k], ts[:k, k:], ts[k:, k:]
    # T11 R - R T22 = -T12 decouples the two diagonal blocks
    R = linalg.solve_sylvester(T11, -T22, -T12)
    block = np.zeros((q, q), dtype=complex)
    block[:k, :k] = np.eye(k)
    block[:k, k:] = -R
    return zs @ block @ zs.conj().T


def _nilpotency_index(N, multiplicity, scale, nu_rel):
    nu = 0
    power = np.eye(N.shape[0], dtype=complex)
    for m in range(1, multiplicity):
        power = power @ N
        if np.linalg.norm(power, 2) > nu_rel * scale**m:
            nu = m
    return nu


def _second(clusters):
    first = clusters[0]
    if first.multiplicity > 1 or len(clusters) == 1:
        return first.eigenvalue, first.nu
    return clusters[1].eigenvalue, clusters[1].nu


def spectral_decomposition(A, cluster_tol: Optional[float] = None, tol: Tolerances = DEFAULT) -> SpectralDecomposition:
    """Cluster the spectrum of ``A`` and compute ``P_lambda``, ``N_lambda``, ``nu_lambda``.

    Parameters
    ----------
    A : (q, q) array_like
        Real intensity matrix.
    cluster_tol : float, optional
        Eigenvalues within this distance are merged.  Defaults to
        ``tol.cluster_rel * ||A||``.

    Raises
    ------
    ClusteringAmbiguous
        Two distinct clusters lie within ``10 * cluster_tol`` of each other.
    IllConditioned
        A projection has norm above ``tol.projection_norm``.
    """
    A = np.asarray(A, dtype=float)
    q = A.shape[0]
    scale = np.linalg.norm(A, 2)
    if cluster_tol is None:
        cluster_tol = tol.cluster_rel * max(scale, 1.0)
    T, Z = linalg.schur(A.astype(complex), output="complex")
    diag = np.diag(T).copy()
    groups = _cluster(list(diag), cluster_tol)

    for i, g in enumerate(groups):
        for h in groups[i + 1:]:
            gap = min(abs(diag[x] - diag[y]) for x in g for y in h)
            if gap < 10 * cluster_tol:
                raise ClusteringAmbiguous(
                    f"eigenvalue clusters {diag[g[0]]:.6g} and {diag[h[0]]:.6g} are {gap:.3g} apart "
                    f"(cluster_tol={cluster_tol:.3g}); choose a different cluster_tol"
                )

    clusters = []
    for g in groups:
        lam = complex(np.mean(diag[g]))
        if abs(lam.imag) <= cluster_tol:
            lam = complex(lam.real, 0.0)
        select = np.zeros(q, dtype=bool)
        select[g] = True
        P = _projection(T, Z, select)
        if lam.imag == 0.0:
            P = P.real.astype(complex)
        pnorm = np.linalg.norm(P, 2)
        if pnorm > tol.projection_norm:
            raise IllConditioned(f"projection for eigenvalue {lam:.6g} has norm {pnorm:.3g}")
        N = A @ P - lam * P
        nu = _nilpotency_index(N, len(g), max(scale, 1e-300), tol.nu_rel)
        members = tuple(complex(x) for x in diag[g])
        clusters.append(EigenCluster(lam, len(g), P, N, nu, members))

    clusters.sort(key=lambda c: (-c.eigenvalue.real, -c.nu, -c.eigenvalue.imag))
    lambda2, nu2 = _second(clusters)
    return SpectralDecomposition(
        A=A,
        clusters=tuple(clusters),
        lambda1=clusters[0].eigenvalue.real,
        lambda2=lambda2,
        nu2=nu2,
        cluster_tol=cluster_tol,
    )


def dominant_eigendata(spec: UrnSpec, decomp: SpectralDecomposition, tol: Tolerances = DEFAULT):
    """Check that ``b`` is the simple dominant eigenvalue; return ``(lambda1, u1, v1)``.

    ``u1`` is the activity vector and ``v1`` the right eigenvector scaled so
    that ``a . v1 = 1``.

    Raises
    ------
    DominantMismatch
        Some eigenvalue has real part above ``b`` (typically colours that can
        never appear in the urn; prune them).
    DominantNotSimple
        ``b`` is a multiple eigenvalue or carries a nilpotent part.
    """
    return _with_dominant(spec, decomp, tol)[1:]


def _with_dominant(spec, decomp, tol):
    b = check_balance(spec, tol)
    scale = max(np.linalg.norm(decomp.A, 2), 1.0)
    slack = tol.dominant_rel * scale
    a = spec.a
    top = decomp.clusters[0]
    if top.eigenvalue.real > b + slack:
        raise DominantMismatch(
            f"largest eigenvalue {top.eigenvalue.real:.6g} exceeds the balance b={b:.6g}; "
            "some colours can never occur in the urn and should be pruned",
            eigenvalue=top.eigenvalue,
            balance=b,
        )
    distances = [abs(c.eigenvalue - b) for c in decomp.clusters]
    k = int(np.argmin(distances))
    if distances[k] > max(decomp.cluster_tol, slack):
        raise DominantMismatch(f"balance b={b:.6g} not found in the spectrum", balance=b)
    dom = decomp.clusters[k]
    if dom.multiplicity > 1:
        raise DominantNotSimple(
            f"eigenvalue b={b:.6g} has multiplicity {dom.multiplicity}; X_n/n need not converge to a constant"
        )
    if dom.nu > 0:
        raise DominantNotSimple(f"eigenvalue b={b:.6g} carries a nilpotent part (nu={dom.nu})")

    warnings = list(decomp.warnings)
    for c in decomp.clusters:
        if c is not dom and abs(c.eigenvalue.real - b) <= slack:
            warnings.append(f"eigenvalue {c.eigenvalue:.6g} has real part equal to b (unexpected for tenable urns)")

    w = dom.P @ a
    if np.max(np.abs(w.imag)) > tol.imag_residue * max(1.0, np.max(np.abs(w.real))):
        raise DominantNotSimple("dominant eigenvector is not real")
    v1 = w.real / float(a @ w.real)
    P1 = np.outer(v1, a)
    Phat = np.eye(spec.q) - P1

    rest = [c for c in decomp.clusters if c is not dom]
    clusters = (dataclasses.replace(dom, eigenvalue=complex(b, 0.0)), *rest)
    if rest:
        lambda2, nu2 = rest[0].eigenvalue, rest[0].nu
    else:
        lambda2, nu2 = complex(b, 0.0), 0
    filled = dataclasses.replace(
        decomp,
        clusters=clusters,
        lambda1=b,
        lambda2=lambda2,
        nu2=nu2,
        u1=a.copy(),
        v1=v1,
        P1=P1,
        Phat=Phat,
        warnings=tuple(warnings),
    )
    return filled, b, a.copy(), v1


def decompose_urn(spec: UrnSpec, cluster_tol: Optional[float] = None, tol: Tolerances = DEFAULT) -> SpectralDecomposition:
    """Decomposition of the intensity matrix with the dominant data filled in."""
    decomp = spectral_decomposition(intensity_matrix(spec), cluster_tol, tol)
    return _with_dominant(spec, decomp, tol)[0]


def classify(decomp: SpectralDecomposition, tol: Tolerances = DEFAULT, reason: str = "") -> UrnClass:
    """Strictly small, critically small or large, by ``Re lambda_2`` against ``lambda_1 / 2``."""
    if not decomp.has_dominant:
        return UrnClass(UrnKind.NOT_APPLICABLE, reason or "dominant eigenvalue checks not passed")
    lam1 = decomp.lambda1
    eps = tol.classify_rel * lam1
    re2 = decomp.lambda2.real
    if len(decomp.clusters) == 1:
        return UrnClass(UrnKind.NOT_APPLICABLE, "single eigenvalue")
    if re2 < lam1 / 2 - eps:
        return UrnClass(UrnKind.STRICTLY_SMALL)
    if re2 > lam1 / 2 + eps:
        return UrnClass(UrnKind.LARGE)
    return UrnClass(UrnKind.CRITICALLY_SMALL)


# ---------------------------------------------------------------------------
# functional calculus
# ---------------------------------------------------------------------------


def apply_entire_function(decomp: SpectralDecomposition, f_derivatives: Sequence[Sequence[complex]], clusters=None) -> np.ndarray:
    """Evaluate ``f(A) = sum_lambda sum_m f^(m)(lambda) / m! N^m P``.

    ``f_derivatives[k]`` holds ``f(lambda_k), f'(lambda_k), ...`` up to at
    least order ``nu`` of the ``k``-th cluster.  Pass ``clusters`` to restrict
    the sum to a subset (``f_derivatives`` then follows that subset).
    """
    clusters = decomp.clusters if clusters is None else clusters
    if len(f_derivatives) != len(clusters):
        raise MissingDerivatives(f"need derivatives for {len(clusters)} clusters, got {len(f_derivatives)}")
    q = decomp.A.shape[0]
    out = np.zeros((q, q), dtype=complex)
    for c, ders in zip(clusters, f_derivatives):
        if len(ders) < c.nu + 1:
            raise MissingDerivatives(
                f"eigenvalue {c.eigenvalue:.6g} needs derivatives up to order {c.nu}, got {len(ders) - 1}"
            )
        term = c.P.astype(complex)
        for m in range(c.nu + 1):
            out += ders[m] / math.factorial(m) * term
            term = c.N @ term
    return out


def exp_derivatives(decomp: SpectralDecomposition, s: float, clusters=None):
    """Derivatives of ``z -> exp(s z)`` at every cluster, for :func:`apply_entire_function`."""
    clusters = decomp.clusters if clusters is None else clusters
    return [[s**m * np.exp(s * c.eigenvalue) for m in range(c.nu + 1)] for c in clusters]


def realify(M, tol: Tolerances = DEFAULT, what="matrix"):
    """Drop the imaginary part after checking it is only rounding noise."""
    M = np.asarray(M)
    if np.iscomplexobj(M):
        scale = max(1.0, float(np.max(np.abs(M))))
        residue = float(np.max(np.abs(M.imag))) if M.size else 0.0
        if residue > tol.imag_residue * scale:
            raise ArithmeticError(f"{what} has imaginary residue {residue:.3g}")
        M = M.real
    return np.array(M, dtype=float)
