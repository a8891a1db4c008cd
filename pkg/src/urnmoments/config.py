"""Numerical tolerances in one place.

Every tolerance used by the library has a documented default here.  A
profile can be overridden through environment variables named
``URNMOMENTS_TOL_<FIELD>`` (for example ``URNMOMENTS_TOL_CLUSTER_REL=1e-6``)
or through the ``--tol-*`` flags of the command line tool.
"""

import dataclasses
import os
from dataclasses import dataclass

ENV_PREFIX = "URNMOMENTS_TOL_"


@dataclass(frozen=True)
class Tolerances:
    #: probabilities of one replacement distribution must sum to 1 within this
    prob_sum: float = 1e-12
    #: a.v may differ across atoms by this much (scaled by max(1, |b|))
    balance: float = 1e-9
    #: eigenvalues closer than cluster_rel * ||A|| are merged
    cluster_rel: float = 1e-7
    #: nilpotency index threshold, ||N^m|| > nu_rel * ||A||^m
    nu_rel: float = 1e-8
    #: largest admissible norm of a spectral projection
    projection_norm: float = 1e8
    #: relative tolerance for the dominant eigenvalue check (times ||A||)
    dominant_rel: float = 1e-8
    #: relative tolerance of the small / critical / large classification (times lambda_1)
    classify_rel: float = 1e-9
    #: absolute tail tolerance of the Sigma_I quadrature
    quad: float = 1e-13
    #: allowed imaginary residue when realifying complex sums
    imag_residue: float = 1e-8
    #: entries of the reduced intensity matrix below this count as zero edges
    graph_zero: float = 1e-12
    #: Gamma-route poles closer than this to a factor raise PoleProximity
    pole: float = 1e-6
    #: u' Sigma u below degeneracy * max(1, ||Sigma||) * ||u||^2 is degenerate
    degeneracy: float = 1e-10
    #: Sigma_I quadrature vs Lyapunov relative agreement required by reports
    sigma_crosscheck: float = 1e-8

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_env(cls, environ=None):
        """Defaults overridden by ``URNMOMENTS_TOL_*`` variables."""
        environ = os.environ if environ is None else environ
        changes = {}
        for field in dataclasses.fields(cls):
            key = ENV_PREFIX + field.name.upper()
            if key in environ:
                changes[field.name] = float(environ[key])
        return cls(**changes)

    def as_dict(self):
        return dataclasses.asdict(self)


DEFAULT = Tolerances()
