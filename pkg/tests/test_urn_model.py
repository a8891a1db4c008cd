from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from urnmoments.corpus import corpus_names, load_corpus, load_corpus_urn
from urnmoments.errors import IncompleteSpecError, NonPositiveBalance, NotBalanced, SpecError
from urnmoments.urn_model import (
    check_balance,
    check_tenability,
    intensity_matrix,
    make_urn,
    parse_urn,
    second_moment_matrices,
    serialize_urn,
    total_activity,
    unreachable_colours,
    validate_urn,
)

from conftest import balanced_urns

FRIEDMAN_TEXT = """
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
"""


def test_parse_friedman():
    spec = parse_urn(FRIEDMAN_TEXT)
    assert spec.q == 2
    assert spec.w0 == 2
    assert spec.replacements[0].atoms == ((Fraction(1), (Fraction(0), Fraction(1))),)


def test_probability_sum_error_names_field_and_line():
    text = FRIEDMAN_TEXT.replace("- {p: 1, v: [0, 1]}", "- {p: 0.5, v: [0, 1]}\n      - {p: 0.4, v: [0, 1]}")
    with pytest.raises(SpecError, match="probabilities sum to 0.9") as info:
        parse_urn(text)
    assert info.value.field == "replacements[0].atoms"
    assert info.value.line == 9


@pytest.mark.parametrize(
    "old, new, message",
    [
        ("activities: [1, 1]", "activities: [1, -1]", "negative activity"),
        ("q: 2", "q: 1", "at least 2 colours"),
        ("initial: [1, 1]", "initial: [0, 0]", "must be positive"),
        ("initial: [1, 1]", "initial: [1, 1, 1]", "expected 2 entries"),
        ("v: [0, 1]", "v: [0, x]", "cannot parse"),
        ("color: 2", "color: 1", "duplicate"),
    ],
)
def test_schema_errors(old, new, message):
    with pytest.raises(SpecError, match=message):
        parse_urn(FRIEDMAN_TEXT.replace(old, new, 1))


def test_missing_replacement_law_rejected_unless_incomplete():
    text = FRIEDMAN_TEXT.split("  - color: 2")[0]
    with pytest.raises(SpecError, match="no replacement law"):
        parse_urn(text)
    spec = parse_urn(text + "incomplete: true\n")
    assert spec.incomplete and spec.replacements[1] is None
    with pytest.raises(IncompleteSpecError):
        spec.require_complete()


def test_rational_strings_are_exact():
    spec = make_urn([1, 1], [[(Fraction(1, 3), [1, 0]), (Fraction(2, 3), [0, 1])], [0, 1]], [1, 1])
    assert spec.replacements[0].atoms[0][0] == Fraction(1, 3)
    assert "1/3" in serialize_urn(spec)


def test_five_type_fragment_two_atom_law():
    spec = load_corpus_urn("protected_tree_types")
    law = spec.replacements[1]
    assert [p for p, _ in law.atoms] == [Fraction(1, 3), Fraction(2, 3)]
    S = law.second_moment()
    u = np.array([1, -1, 0, 0, 0.0])
    e4 = np.eye(5)[3]
    np.testing.assert_allclose(S, np.outer(u, u) / 3 + 2 * np.outer(e4, e4) / 3, atol=1e-15)


def test_balance_values(friedman, ebad):
    assert check_balance(friedman) == 1
    assert check_balance(ebad) == 3


def test_not_balanced_lists_offenders():
    spec = make_urn([1, 1], [[1, 0], [0, 2]], [1, 1])
    with pytest.raises(NotBalanced) as info:
        check_balance(spec)
    assert "2" in str(info.value)


def test_non_positive_balance():
    spec = make_urn([1, 1], [[-1, 1], [1, -1]], [1, 1])
    with pytest.raises(NonPositiveBalance):
        check_balance(spec)


def test_intensity_matrices(friedman, ebad, e2):
    np.testing.assert_array_equal(intensity_matrix(friedman), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(intensity_matrix(ebad), [[1, 2, -1], [2, 1, 0], [0, 0, 4]])
    np.testing.assert_allclose(intensity_matrix(e2), [[0.75, 0.25], [0.25, 0.75]])


def test_total_activity(friedman, ebad):
    assert total_activity(friedman, 0) == 2
    assert total_activity(friedman, 10) == 12
    assert total_activity(ebad, 5) == 16


def test_second_moments(friedman, e2):
    np.testing.assert_array_equal(second_moment_matrices(friedman)[0], [[0, 0], [0, 1]])
    np.testing.assert_allclose(second_moment_matrices(e2)[0], np.diag([0.75, 0.25]))


def test_tenability_statuses(friedman, ebad, tri03):
    assert check_tenability(friedman).status == "verified-sufficient"
    assert check_tenability(ebad).status == "verified-by-exploration"
    assert check_tenability(tri03).status == "verified-by-exploration"


def test_gap_fragment_not_sufficient_but_explored():
    spec = load_corpus_urn("protected_tree_gaps")
    report = check_tenability(spec)
    assert report.status == "unverified"
    assert "replacement law is unknown" in report.note
    assert report.witness["state"] == ["0", "1", "2", "2", "0"]


def test_tenability_violation_witness():
    # drawing colour 1 removes two balls of colour 1 from a single-ball start
    spec = make_urn([1, 1], [[-2, 3], [1, 0]], [1, 1])
    report = check_tenability(spec)
    assert report.status == "violated"
    assert report.witness["color"] == 1
    assert report.witness["next"] == ["-1", "4"]


def test_exploration_budget():
    spec = make_urn([1, 1], [[-2, 3], [2, -1]], [2, 2])
    report = check_tenability(spec, exploration_budget=5)
    assert report.status in ("unverified", "violated")


def test_validate_urn_collects_balance_error():
    report = validate_urn(make_urn([1, 1], [[1, 0], [0, 2]], [1, 1]))
    assert report.balance is None and "not balanced" in report.balance_error.lower()


def test_unreachable_colours(ebad, friedman):
    assert unreachable_colours(ebad) == [3]
    assert unreachable_colours(friedman) == []


def test_corpus_contents():
    names = corpus_names()
    assert len(names) >= 6
    assert sum(u.incomplete for u in load_corpus()) == 2
    for name in ("friedman", "e2_critical", "triangular_0.3", "ebad", "polya_original"):
        assert name in names


@given(balanced_urns())
def test_round_trip(spec):
    again = parse_urn(serialize_urn(spec))
    assert again == spec


@given(balanced_urns())
def test_intensity_left_eigenvector(spec):
    b = check_balance(spec)
    A = intensity_matrix(spec)
    np.testing.assert_allclose(spec.a @ A, b * spec.a, atol=1e-10 * max(1, b))


@given(balanced_urns())
def test_second_moments_psd(spec):
    for S in second_moment_matrices(spec):
        np.testing.assert_allclose(S, S.T)
        assert np.linalg.eigvalsh(S).min() >= -1e-12


@given(balanced_urns(), st.integers(0, 10**6))
def test_total_activity_affine(spec, n):
    b = check_balance(spec)
    assert total_activity(spec, n) == pytest.approx(spec.w0 + n * b, rel=1e-15)
