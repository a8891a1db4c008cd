"""Urn specifications: parsing, validation, and the derived matrices.

A configuration is a small YAML document::

    name: friedman
    q: 2
    activities: [1, 1]
    initial: [1, 1]
    replacements:
      - color: 1
        atoms:
          - {p: 1, v: [0, 1]}
      - color: 2
        atoms:
          - {p: 1, v: [1, 0]}

Colours are numbered from 1.  Every number may be written as an integer, a
decimal, or a ``"num/den"`` string; internally all of them are kept as
:class:`fractions.Fraction` so that round trips are exact.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
import yaml

from .config import DEFAULT, Tolerances
from .errors import IncompleteSpecError, NonPositiveBalance, NotBalanced, SpecError

log = logging.getLogger(__name__)

TENABILITY_STATUSES = ("verified-sufficient", "verified-by-exploration", "unverified", "violated")


def as_fraction(value, field=None, line=None) -> Fraction:
    """Convert an int, float, decimal string or ``"num/den"`` string exactly."""
    if isinstance(value, bool):
        raise SpecError(f"expected a number, got {value!r}", field, line)
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not np.isfinite(value):
            raise SpecError(f"non-finite number {value!r}", field, line)
        # repr gives the shortest decimal that round-trips, so 0.1 -> 1/10
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise SpecError(f"cannot parse number {value!r}", field, line) from None
    raise SpecError(f"expected a number, got {type(value).__name__}", field, line)


def _fraction_text(x: Fraction):
    return int(x) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class ReplacementDistribution:
    """Finite-support law of the replacement vector of one colour.

    ``atoms`` is a tuple of ``(probability, vector)`` pairs.
    """

    atoms: tuple

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([float(p) for p, _ in self.atoms])

    @property
    def vectors(self) -> np.ndarray:
        return np.array([[float(x) for x in v] for _, v in self.atoms])

    def mean(self) -> np.ndarray:
        return self.probabilities @ self.vectors

    def second_moment(self) -> np.ndarray:
        V = self.vectors
        return (V.T * self.probabilities) @ V

    def is_integer(self) -> bool:
        return all(x.denominator == 1 for _, v in self.atoms for x in v)


@dataclass(frozen=True)
class UrnSpec:
    """A balanced-urn candidate: activities, replacement laws, initial state.

    When ``incomplete`` is true some entries of ``replacements`` are ``None``;
    only :func:`check_tenability` accepts such fragments.
    """

    q: int
    activities: tuple
    replacements: tuple
    initial: tuple
    name: str = "urn"
    description: str = ""
    incomplete: bool = False

    @property
    def a(self) -> np.ndarray:
        return np.array([float(x) for x in self.activities])

    @property
    def x0(self) -> np.ndarray:
        return np.array([float(x) for x in self.initial])

    @property
    def w0(self) -> float:
        return float(self.w0_exact)

    @property
    def w0_exact(self) -> Fraction:
        return sum((a * x for a, x in zip(self.activities, self.initial)), Fraction(0))

    def require_complete(self):
        if self.incomplete:
            missing = [i + 1 for i, r in enumerate(self.replacements) if r is None]
            raise IncompleteSpecError(
                f"urn {self.name!r} is an incomplete fragment (no replacement law for colours {missing})"
            )


@dataclass(frozen=True)
class TenabilityReport:
    status: str
    witness: Optional[dict] = None
    explored: int = 0
    note: str = ""


@dataclass(frozen=True)
class ValidationReport:
    balance: Optional[float]
    balance_error: Optional[str]
    tenability: TenabilityReport
    dominant_ok: Optional[bool] = None
    warnings: tuple = field(default_factory=tuple)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _plain(node, path, lines):
    """Convert a composed YAML node to Python objects, recording source lines."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for knode, vnode in node.value:
            key = knode.value
            out[key] = _plain(vnode, f"{path}.{key}" if path else key, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def _load_yaml(text):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SpecError(f"malformed config: {exc}", line=None if mark is None else mark.line + 1) from None
    if node is None:
        raise SpecError("empty config")
    lines = {}
    return _plain(node, "", lines), lines


def parse_urn(config_text: str, tol: Tolerances = DEFAULT) -> UrnSpec:
    """Parse and validate an urn configuration.

    Raises
    ------
    SpecError
        With the offending field path and source line.
    IncompleteSpecError
        Never; fragments marked ``incomplete: true`` are returned with
        ``None`` for the missing replacement laws.
    """
    data, lines = _load_yaml(config_text)
    if not isinstance(data, dict):
        raise SpecError("config must be a mapping", line=1)

    def need(key):
        if key not in data:
            raise SpecError(f"missing required key {key!r}", key)
        return data[key]

    def vector(raw, length, path):
        if not isinstance(raw, list):
            raise SpecError("expected a list", path, lines.get(path))
        if len(raw) != length:
            raise SpecError(f"expected {length} entries, got {len(raw)}", path, lines.get(path))
        return tuple(as_fraction(x, f"{path}[{i}]", lines.get(f"{path}[{i}]")) for i, x in enumerate(raw))

    q = need("q")
    if not isinstance(q, int) or isinstance(q, bool):
        raise SpecError("q must be an integer", "q", lines.get("q"))
    if q < 2:
        raise SpecError(f"need at least 2 colours, got q={q}", "q", lines.get("q"))

    incomplete = bool(data.get("incomplete", False))
    activities = vector(need("activities"), q, "activities")
    for i, x in enumerate(activities):
        if x < 0:
            raise SpecError(f"negative activity {x}", f"activities[{i}]", lines.get(f"activities[{i}]"))

    if "initial" in data:
        initial = vector(data["initial"], q, "initial")
    elif incomplete:
        initial = tuple(Fraction(0) for _ in range(q))
    else:
        raise SpecError("missing required key 'initial'", "initial")
    for i, x in enumerate(initial):
        if x < 0:
            raise SpecError(f"negative initial count {x}", f"initial[{i}]", lines.get(f"initial[{i}]"))

    raw_reps = need("replacements")
    if not isinstance(raw_reps, list):
        raise SpecError("expected a list", "replacements", lines.get("replacements"))
    replacements = [None] * q
    for k, entry in enumerate(raw_reps):
        path = f"replacements[{k}]"
        if not isinstance(entry, dict) or "color" not in entry or "atoms" not in entry:
            raise SpecError("each replacement needs 'color' and 'atoms'", path, lines.get(path))
        color = entry["color"]
        if not isinstance(color, int) or not 1 <= color <= q:
            raise SpecError(f"colour must be an integer in 1..{q}", f"{path}.color", lines.get(f"{path}.color"))
        if replacements[color - 1] is not None:
            raise SpecError(f"duplicate replacement for colour {color}", path, lines.get(path))
        atoms = []
        if not isinstance(entry["atoms"], list) or not entry["atoms"]:
            raise SpecError("atoms must be a non-empty list", f"{path}.atoms", lines.get(f"{path}.atoms"))
        for m, atom in enumerate(entry["atoms"]):
            apath = f"{path}.atoms[{m}]"
            if not isinstance(atom, dict) or "p" not in atom or "v" not in atom:
                raise SpecError("each atom needs 'p' and 'v'", apath, lines.get(apath))
            p = as_fraction(atom["p"], f"{apath}.p", lines.get(f"{apath}.p"))
            if p < 0 or p > 1:
                raise SpecError(f"probability {p} outside [0, 1]", f"{apath}.p", lines.get(f"{apath}.p"))
            v = vector(atom["v"], q, f"{apath}.v")
            atoms.append((p, v))
        total = sum(p for p, _ in atoms)
        if abs(float(total) - 1.0) > tol.prob_sum:
            raise SpecError(
                f"probabilities sum to {float(total):g}", f"{path}.atoms", lines.get(f"{path}.atoms")
            )
        replacements[color - 1] = ReplacementDistribution(tuple(atoms))

    missing = [i + 1 for i, r in enumerate(replacements) if r is None]
    if missing and not incomplete:
        raise SpecError(f"no replacement law for colours {missing}", "replacements", lines.get("replacements"))

    spec = UrnSpec(
        q=q,
        activities=activities,
        replacements=tuple(replacements),
        initial=initial,
        name=str(data.get("name", "urn")),
        description=str(data.get("description", "")),
        incomplete=incomplete,
    )
    if not incomplete and spec.w0_exact <= 0:
        raise SpecError("initial total activity a.X0 must be positive", "initial", lines.get("initial"))
    return spec


def serialize_urn(spec: UrnSpec) -> str:
    """Inverse of :func:`parse_urn` (exact, rationals as ``"num/den"``)."""
    data = {"name": spec.name}
    if spec.description:
        data["description"] = spec.description
    data["q"] = spec.q
    if spec.incomplete:
        data["incomplete"] = True
    data["activities"] = [_fraction_text(x) for x in spec.activities]
    data["initial"] = [_fraction_text(x) for x in spec.initial]
    data["replacements"] = [
        {
            "color": i + 1,
            "atoms": [{"p": _fraction_text(p), "v": [_fraction_text(x) for x in v]} for p, v in rep.atoms],
        }
        for i, rep in enumerate(spec.replacements)
        if rep is not None
    ]
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


def load_urn(path, tol: Tolerances = DEFAULT) -> UrnSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_urn(fh.read(), tol)


def make_urn(activities, replacements, initial, name="urn", description="") -> UrnSpec:
    """Build an :class:`UrnSpec` from Python values.

    ``replacements[i]`` is either a single vector (deterministic replacement)
    or a list of ``(p, vector)`` pairs.
    """
    q = len(activities)
    reps = []
    for r in replacements:
        r = list(r)
        if r and isinstance(r[0], (tuple, list)) and len(r[0]) == 2 and isinstance(r[0][1], (tuple, list)):
            atoms = tuple((as_fraction(p), tuple(as_fraction(x) for x in v)) for p, v in r)
        else:
            atoms = ((Fraction(1), tuple(as_fraction(x) for x in r)),)
        reps.append(ReplacementDistribution(atoms))
    spec = UrnSpec(
        q=q,
        activities=tuple(as_fraction(x) for x in activities),
        replacements=tuple(reps),
        initial=tuple(as_fraction(x) for x in initial),
        name=name,
        description=description,
    )
    # reuse the parser's checks
    return parse_urn(serialize_urn(spec))


# ---------------------------------------------------------------------------
# derived quantities
# ---------------------------------------------------------------------------


def check_balance(spec: UrnSpec, tol: Tolerances = DEFAULT) -> float:
    """Return the balance ``b`` such that ``a.v = b`` for every atom."""
    spec.require_complete()
    a = spec.activities
    values = []
    for i, rep in enumerate(spec.replacements):
        for m, (_, v) in enumerate(rep.atoms):
            values.append((i + 1, m + 1, sum((x * y for x, y in zip(a, v)), Fraction(0))))
    b = values[0][2]
    scale = max(1.0, abs(float(b)))
    offenders = [(c, m, float(s)) for c, m, s in values if abs(float(s - b)) > tol.balance * scale]
    if offenders:
        detail = ", ".join(f"colour {c} atom {m}: a.v={s:g}" for c, m, s in offenders)
        raise NotBalanced(f"urn is not balanced: expected a.v={float(b):g}; {detail}", offenders)
    if float(b) <= 0:
        raise NonPositiveBalance(f"balance b={float(b):g} must be positive (b=0 is excluded)")
    return float(b)


def intensity_matrix(spec: UrnSpec) -> np.ndarray:
    """``A[i, j] = a_j E xi_{j,i}``: column ``j`` is ``a_j E xi_j``."""
    spec.require_complete()
    return np.column_stack([aj * rep.mean() for aj, rep in zip(spec.a, spec.replacements)])


def total_activity(spec: UrnSpec, n: int, tol: Tolerances = DEFAULT) -> float:
    """``w_n = w_0 + n b`` (computed exactly when the balance is exact)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    b = check_balance(spec, tol)
    exact = exact_balance(spec)
    if exact is not None:
        return float(spec.w0_exact + n * exact)
    return spec.w0 + n * b


def exact_balance(spec: UrnSpec) -> Optional[Fraction]:
    """The balance as a fraction if every atom gives exactly the same ``a.v``."""
    spec.require_complete()
    a = spec.activities
    sums = {sum((x * y for x, y in zip(a, v)), Fraction(0)) for rep in spec.replacements for _, v in rep.atoms}
    return sums.pop() if len(sums) == 1 else None


def second_moment_matrices(spec: UrnSpec) -> list:
    spec.require_complete()
    return [rep.second_moment() for rep in spec.replacements]


# ---------------------------------------------------------------------------
# tenability
# ---------------------------------------------------------------------------


def satisfies_sufficient_condition(spec: UrnSpec) -> bool:
    """The classical integer condition: only the drawn ball may be removed.

    All counts and replacements are integers, ``xi_ij >= 0`` for ``j != i``,
    ``xi_ii >= -1`` and ``a.xi_i >= 0``.
    """
    if spec.incomplete:
        return False
    if any(x.denominator != 1 for x in spec.initial):
        return False
    a = spec.activities
    for i, rep in enumerate(spec.replacements):
        if not rep.is_integer():
            return False
        for _, v in rep.atoms:
            if any(v[j] < 0 for j in range(spec.q) if j != i) or v[i] < -1:
                return False
            if sum(x * y for x, y in zip(a, v)) < 0:
                return False
    return True


def _colour_closure(spec, state):
    """Colours that can ever hold balls starting from ``state``."""
    present = {j for j, x in enumerate(state) if x > 0}
    frontier = list(present)
    while frontier:
        i = frontier.pop()
        rep = spec.replacements[i]
        if spec.activities[i] == 0 or rep is None:
            continue
        for _, v in rep.atoms:
            for j, x in enumerate(v):
                if x > 0 and j not in present:
                    present.add(j)
                    frontier.append(j)
    return present


def unreachable_colours(spec: UrnSpec) -> list:
    """Colours (numbered from 1) that can never hold balls, starting from ``X_0``."""
    closure = _colour_closure(spec, spec.initial)
    return [j + 1 for j in range(spec.q) if j not in closure]


def _monotone_from(spec, state):
    """True if every atom that can ever be drawn from ``state`` is non-negative."""
    closure = _colour_closure(spec, state)
    for i in closure:
        if spec.activities[i] == 0:
            continue
        rep = spec.replacements[i]
        if rep is None or any(x < 0 for _, v in rep.atoms for x in v):
            return False
    return True


def check_tenability(spec: UrnSpec, exploration_budget: int = 10_000) -> TenabilityReport:
    """Decide tenability where possible.

    Returns ``verified-sufficient`` when the classical integer condition
    holds.  Otherwise reachable compositions are explored breadth first;
    a state from which only non-negative replacements can ever be drawn is
    not expanded further, since counts can then only grow.  The result is
    ``violated`` (with a witness), ``verified-by-exploration`` when the
    exploration closes, or ``unverified`` when the budget runs out or a
    colour without a known replacement law becomes drawable.
    """
    if satisfies_sufficient_condition(spec):
        return TenabilityReport("verified-sufficient")

    a = spec.activities
    start = tuple(spec.initial)
    if sum(x * y for x, y in zip(a, start)) <= 0:
        if spec.incomplete:
            return TenabilityReport("unverified", note="fragment has no usable initial composition")
        return TenabilityReport("violated", {"state": [str(x) for x in start], "color": None, "atom": None})
    seen = {start}
    queue = deque([start])
    explored = 0
    while queue:
        state = queue.popleft()
        explored += 1
        if _monotone_from(spec, state):
            continue
        if explored > exploration_budget:
            return TenabilityReport("unverified", explored=explored, note="exploration budget exhausted")
        for i in range(spec.q):
            if a[i] * state[i] <= 0:
                continue
            rep = spec.replacements[i]
            if rep is None:
                return TenabilityReport(
                    "unverified",
                    explored=explored,
                    note=f"colour {i + 1} becomes drawable but its replacement law is unknown",
                    witness={"state": [str(x) for x in state], "color": i + 1, "atom": None},
                )
            for p, v in rep.atoms:
                if p == 0:
                    continue
                nxt = tuple(x + y for x, y in zip(state, v))
                if any(x < 0 for x in nxt) or sum(x * y for x, y in zip(a, nxt)) <= 0:
                    return TenabilityReport(
                        "violated",
                        {
                            "state": [str(x) for x in state],
                            "color": i + 1,
                            "atom": [str(x) for x in v],
                            "next": [str(x) for x in nxt],
                        },
                        explored,
                    )
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
    return TenabilityReport("verified-by-exploration", explored=explored)


def validate_urn(spec: UrnSpec, exploration_budget: int = 10_000, tol: Tolerances = DEFAULT) -> ValidationReport:
    """Balance and tenability in one report (``dominant_ok`` is left unset)."""
    warnings = []
    b = err = None
    try:
        b = check_balance(spec, tol)
    except SpecError as exc:
        err = str(exc)
    tenability = check_tenability(spec, exploration_budget)
    if tenability.status == "unverified":
        warnings.append(f"tenability not verified: {tenability.note}")
    return ValidationReport(b, err, tenability, None, tuple(warnings))
