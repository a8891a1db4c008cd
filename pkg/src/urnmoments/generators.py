"""Random balanced urns with rational laws, for testing and benchmarking."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .urn_model import UrnSpec, make_urn


def _atom(rng, a, i, b, allow_removal):
    """A non-negative integer vector (except possibly -1 at ``i``) with ``a . v = b``."""
    q = len(a)
    v = [0] * q
    remaining = b
    if allow_removal and a[i] > 0 and rng.random() < 0.5:
        v[i] = -1
        remaining += a[i]
    while remaining > 0:
        options = [j for j in range(q) if 0 < a[j] <= remaining]
        j = options[rng.integers(len(options))]
        v[j] += 1
        remaining -= a[j]
    return v


def random_balanced_urn(
    rng,
    q: int,
    b: int = 3,
    max_atoms: int = 3,
    max_activity: int = 2,
    allow_removal: bool = True,
    name: str = "random",
) -> UrnSpec:
    """A random balanced urn that satisfies the sufficient tenability condition.

    Activities are integers in ``1..max_activity`` (colour 1 always has
    activity 1 so every ``b`` is reachable), atoms are integer vectors with
    ``a . v = b``, and each law has up to ``max_atoms`` atoms with rational
    probabilities.
    """
    rng = np.random.default_rng(rng)
    a = [1] + [int(rng.integers(1, max_activity + 1)) for _ in range(q - 1)]
    laws = []
    for i in range(q):
        k = int(rng.integers(1, max_atoms + 1))
        weights = [int(w) for w in rng.integers(1, 6, size=k)]
        total = sum(weights)
        laws.append([(Fraction(w, total), _atom(rng, a, i, b, allow_removal)) for w in weights])
    x0 = [int(x) for x in rng.integers(0, 3, size=q)]
    x0[0] += 1
    return make_urn(a, laws, x0, name=name)
