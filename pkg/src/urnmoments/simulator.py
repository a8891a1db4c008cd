"""Seeded Monte Carlo simulation of the urn process.

Replication ``r`` draws from its own counter-based stream (Philox, spawned
from ``SeedSequence(seed)``), consuming two uniforms per step: one picks the
colour, one picks the atom.  Trajectories are advanced in vectorised blocks
of replications, and every operation is row-wise, so the estimates are
bit-identical whatever the block size.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import TenabilityViolation
from .spectral import SpectralDecomposition, UrnKind, classify, decompose_urn
from .urn_model import UrnSpec

log = logging.getLogger(__name__)

REPS_PER_BLOCK = 4096
STEPS_PER_BLOCK = 256


@dataclass(frozen=True, eq=False)
class SimulationEstimate:
    n: int
    reps: int
    seed: int
    mean_hat: np.ndarray
    cov_hat: np.ndarray
    mean_se: np.ndarray
    cov_se: float


@dataclass(frozen=True, eq=False)
class ProbeRow:
    """One grid point of :func:`convergence_probe`."""

    n: int
    l2_error: float
    l2_error_se: float
    normalizer: float
    cov_normalized: np.ndarray
    estimate: SimulationEstimate


class _Tables:
    """Padded atom tables for vectorised sampling."""

    def __init__(self, spec: UrnSpec):
        spec.require_complete()
        self.q = spec.q
        self.a = spec.a
        k = max(len(law.atoms) for law in spec.replacements)
        self.cum = np.ones((self.q, k))
        self.atoms = np.zeros((self.q, k, self.q))
        for i, law in enumerate(spec.replacements):
            c = np.cumsum(law.probabilities)
            self.cum[i, : len(c)] = c
            self.cum[i, len(c) - 1:] = np.inf  # absorb rounding in the last atom
            self.atoms[i, : len(c)] = law.vectors
            self.atoms[i, len(c):] = law.vectors[-1]
        self.integer = all(law.is_integer() for law in spec.replacements) and all(
            float(x).is_integer() for x in spec.x0
        )


def _violation(state, color, why):
    return TenabilityViolation(
        f"urn left the admissible region ({why}) after drawing colour {color + 1}; state {state.tolist()}",
        state=state.tolist(),
        color=color + 1,
    )


def step(state, spec: UrnSpec, rng, tol: Tolerances = DEFAULT):
    """One draw and replacement from ``state``.

    Colour ``i`` is drawn with probability ``a_i X_i / sum_j a_j X_j`` and an
    atom of its replacement law is added.

    Raises
    ------
    TenabilityViolation
        The total activity is not positive, or the new state has a negative
        coordinate.
    """
    state = np.asarray(state, dtype=float)
    tables = _Tables(spec)
    rng = np.random.default_rng(rng)
    weights = tables.a * state
    total = weights.sum()
    if not total > 0:
        raise _violation(state, -1, "zero total activity")
    u = rng.random(2)
    color = int(np.argmax(np.cumsum(weights) > u[0] * total))
    atom = int(np.argmax(tables.cum[color] > u[1]))
    new = state + tables.atoms[color, atom]
    if np.any(new < -tol.balance) or not (tables.a @ new) > 0:
        raise _violation(new, color, "negative coordinate or zero activity")
    return new


def _advance(tables: _Tables, X, comp, uniforms, k0, tol):
    """Advance the block ``X`` by ``len(uniforms[0])`` steps in place."""
    for t in range(uniforms.shape[1]):
        weights = tables.a * X
        cum = np.cumsum(weights, axis=1)
        total = cum[:, -1]
        if np.any(total <= 0):
            r = int(np.flatnonzero(total <= 0)[0])
            raise _violation(X[r], -1, f"zero total activity at step {k0 + t}")
        color = np.argmax(cum > (uniforms[:, t, 0] * total)[:, None], axis=1)
        atom = np.argmax(tables.cum[color] > uniforms[:, t, 1][:, None], axis=1)
        delta = tables.atoms[color, atom]
        if tables.integer:
            X += delta
        else:
            # compensated summation keeps long float trajectories on the balance line
            y = delta - comp
            s = X + y
            comp[:] = (s - X) - y
            X[:] = s
        bad = np.any(X < -tol.balance, axis=1)
        if bad.any():
            r = int(np.flatnonzero(bad)[0])
            raise _violation(X[r], int(color[r]), f"negative coordinate at step {k0 + t + 1}")


def simulate_states(
    spec: UrnSpec,
    record: Sequence[int],
    reps: int,
    seed: int,
    block_reps: int = REPS_PER_BLOCK,
    tol: Tolerances = DEFAULT,
) -> dict:
    """States of ``reps`` independent trajectories at each step count in ``record``.

    Returns ``{n: array of shape (reps, q)}``.  Results do not depend on
    ``block_reps``.
    """
    record = sorted(set(int(n) for n in record))
    if not record or record[0] < 0:
        raise ValueError("record must hold non-negative step counts")
    n_max = record[-1]
    tables = _Tables(spec)
    streams = np.random.SeedSequence(seed).spawn(reps)
    out = {n: np.empty((reps, spec.q)) for n in record}
    for start in range(0, reps, block_reps):
        gens = [np.random.Generator(np.random.Philox(s)) for s in streams[start:start + block_reps]]
        X = np.tile(spec.x0, (len(gens), 1))
        comp = np.zeros_like(X)
        k = 0
        if 0 in out:
            out[0][start:start + len(gens)] = X
        targets = [n for n in record if n > 0]
        while k < n_max:
            # stop each block at the next recording point
            nxt = min(n for n in targets if n > k)
            t = min(STEPS_PER_BLOCK, nxt - k)
            uniforms = np.stack([g.random((t, 2)) for g in gens])
            _advance(tables, X, comp, uniforms, k, tol)
            k += t
            if k in out:
                out[k][start:start + len(gens)] = X
    return out


def _summarize(samples, n, seed) -> SimulationEstimate:
    reps = samples.shape[0]
    mean = samples.mean(axis=0)
    centred = samples - mean
    cov = centred.T @ centred / (reps - 1)
    cov = (cov + cov.T) / 2
    mean_se = np.sqrt(np.diag(cov) / reps)
    prods = centred[:, :, None] * centred[:, None, :]
    cov_se = float(np.max(np.std(prods, axis=0, ddof=1)) / math.sqrt(reps))
    return SimulationEstimate(n, reps, seed, mean, cov, mean_se, cov_se)


def estimate_moments(spec: UrnSpec, n: int, reps: int, seed: int, tol: Tolerances = DEFAULT) -> SimulationEstimate:
    """Sample mean and unbiased sample covariance of ``X_n`` over ``reps`` runs."""
    if reps < 2:
        raise ValueError("reps must be at least 2")
    states = simulate_states(spec, [n], reps, seed, tol=tol)[n]
    return _summarize(states, n, seed)


def _normalizer(decomp: SpectralDecomposition, n: int, tol: Tolerances) -> float:
    kind = classify(decomp, tol).kind
    if kind is UrnKind.CRITICALLY_SMALL:
        return n * math.log(n) ** (2 * decomp.nu2 + 1)
    if kind is UrnKind.LARGE:
        return n ** (2 * decomp.lambda2.real / decomp.lambda1) * max(math.log(n), 1.0) ** (2 * decomp.nu2)
    return float(n)


def convergence_probe(
    spec: UrnSpec,
    n_grid: Sequence[int],
    reps: int,
    seed: int,
    decomp: Optional[SpectralDecomposition] = None,
    tol: Tolerances = DEFAULT,
):
    """Empirical ``E||X_n/n - lambda_1 v_1||^2`` and normalised covariance along ``n_grid``.

    The covariance is divided by ``n`` (strictly small), ``n log^{2 nu_2 + 1} n``
    (critically small) or ``n^{2 Re lambda_2 / lambda_1} log^{2 nu_2} n`` (large).
    All grid points come from the same trajectories.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    if any(n < 1 for n in n_grid):
        raise ValueError("grid points must be positive")
    decomp = decompose_urn(spec, tol=tol) if decomp is None else decomp
    target = decomp.lambda1 * decomp.v1
    states = simulate_states(spec, n_grid, reps, seed, tol=tol)
    rows = []
    for n in sorted(states):
        S = states[n]
        err = np.sum((S / n - target) ** 2, axis=1)
        est = _summarize(S, n, seed)
        norm = _normalizer(decomp, n, tol)
        rows.append(
            ProbeRow(n, float(err.mean()), float(err.std(ddof=1) / math.sqrt(reps)), norm, est.cov_hat / norm, est)
        )
    return rows


__all__ = [
    "SimulationEstimate",
    "ProbeRow",
    "step",
    "simulate_states",
    "estimate_moments",
    "convergence_probe",
]
