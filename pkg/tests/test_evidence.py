"""Evidence expressions: grammar round trip and three-valued evaluation."""
from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from cogloop import evidence
from cogloop.evidence import (
    UNKNOWN,
    Comparison,
    EvidenceParseError,
    GoalRef,
    Literal,
    MemoryRef,
    evaluate,
    evaluate_all,
    parse,
    referenced_keys,
    render,
)
from cogloop.memory import EntryKind, MemoryStore


@pytest.fixture()
def snapshot():
    store = MemoryStore()
    store.write_staged(
        "obs.Seoul", EntryKind.OBSERVATION, {"temp_f": 51.8, "precipitation": False}, "t"
    )
    store.write_staged(
        "obs.Jeju", EntryKind.OBSERVATION, {"temp_f": 60.8, "precipitation": True}, "t"
    )
    store.write_staged("goal.policy", EntryKind.OBSERVATION, {"rule": "colder wins"}, "t")
    return store.commit_cycle()


# ------------------------------------------------------------------- parsing
def test_parse_bare_keys():
    assert parse("obs.Seoul.temp_f") == MemoryRef("obs.Seoul.temp_f")
    assert parse("goal.policy.rule") == GoalRef("goal.policy.rule")


@pytest.mark.parametrize(
    "text,expected",
    [
        ("obs.A.x <= obs.B.x", Comparison("obs.A.x", "<=", "obs.B.x")),
        ("obs.A.x == true", Comparison("obs.A.x", "==", Literal(True))),
        ("obs.A.x != false", Comparison("obs.A.x", "!=", Literal(False))),
        ("obs.A.x > 3", Comparison("obs.A.x", ">", Literal(3))),
        ("obs.A.x < 3.5", Comparison("obs.A.x", "<", Literal(3.5))),
        ('obs.A.x == "rain"', Comparison("obs.A.x", "==", Literal("rain"))),
    ],
)
def test_parse_comparisons(text, expected):
    assert parse(text) == expected


def test_parse_picks_first_operator_occurrence():
    expr = parse("obs.A.x <= obs.B.x")
    assert isinstance(expr, Comparison) and expr.op == "<="


@pytest.mark.parametrize("bad", ["", "   ", "obs.A.x <", "<= obs.A.x", "nonsense key", "obs.A.x ~ 3"])
def test_parse_rejects_malformed(bad):
    with pytest.raises(EvidenceParseError):
        parse(bad)


def test_render_round_trip_examples():
    for text in (
        "obs.Seoul.temp_f",
        "goal.policy.rule",
        "obs.Seoul.temp_f < obs.Jeju.temp_f",
        "obs.Seoul.precipitation == true",
        'obs.Seoul.sky == "clear"',
        "obs.Seoul.temp_f >= 51.8",
    ):
        assert render(parse(text)) == text


def test_referenced_keys():
    assert referenced_keys(parse("obs.A.x <= obs.B.y")) == ["obs.A.x", "obs.B.y"]
    assert referenced_keys(parse("obs.A.x == 3")) == ["obs.A.x"]
    assert referenced_keys(parse("goal.g.rule")) == ["goal.g.rule"]


# ---------------------------------------------------------------- evaluation
def test_evaluate_comparisons(snapshot):
    assert evaluate(parse("obs.Seoul.temp_f < obs.Jeju.temp_f"), snapshot) is True
    assert evaluate(parse("obs.Jeju.temp_f <= obs.Seoul.temp_f"), snapshot) is False
    assert evaluate(parse("obs.Seoul.precipitation == false"), snapshot) is True
    assert evaluate(parse("obs.Jeju.precipitation == true"), snapshot) is True
    assert evaluate(parse("obs.Seoul.temp_f == 51.8"), snapshot) is True


def test_unresolved_reference_is_unknown(snapshot):
    assert evaluate(parse("obs.Busan.temp_f < obs.Seoul.temp_f"), snapshot) is UNKNOWN
    assert evaluate(parse("obs.Seoul.missing == true"), snapshot) is UNKNOWN


def test_relational_ops_false_for_non_numbers(snapshot):
    # The claim resolved but is not a numeric relation, so it is unsupported.
    assert evaluate(parse("obs.Seoul.precipitation < 3"), snapshot) is False
    store = MemoryStore()
    store.write_staged("obs.A", EntryKind.OBSERVATION, {"x": "text"}, "t")
    snap = store.commit_cycle()
    assert evaluate(parse("obs.A.x > 1"), snap) is False


def test_equality_defined_for_any_types(snapshot):
    assert evaluate(parse('obs.Seoul.temp_f != "text"'), snapshot) is True
    assert evaluate(parse('obs.Seoul.precipitation == false'), snapshot) is True


def test_evaluate_all_conjunction_ordering(snapshot):
    true_expr = parse("obs.Seoul.temp_f < obs.Jeju.temp_f")
    false_expr = parse("obs.Jeju.temp_f < obs.Seoul.temp_f")
    unknown_expr = parse("obs.Busan.temp_f < 50")
    assert evaluate_all([true_expr], snapshot) is True
    assert evaluate_all([true_expr, unknown_expr], snapshot) is UNKNOWN
    assert evaluate_all([false_expr, unknown_expr], snapshot) is False  # False dominates
    assert evaluate_all([], snapshot) is True


def test_unknown_is_a_singleton():
    assert (UNKNOWN is UNKNOWN) and repr(UNKNOWN)
    assert UNKNOWN is not True and UNKNOWN is not False


# ---------------------------------------------------------------- hypothesis
keys = st.from_regex(r"obs\.[A-Z][a-z]{1,6}\.[a-z]{1,6}(_[a-z]{1,3})?", fullmatch=True)
literals = st.one_of(
    st.booleans(),
    st.integers(min_value=-10**6, max_value=10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.text(alphabet="abcdefgh XYZ_-", max_size=10),
)


@given(keys, st.sampled_from(sorted(evidence.OPERATORS)), keys)
def test_round_trip_ref_comparisons(left, op, right):
    text = f"{left} {op} {right}"
    assert render(parse(text)) == text


@given(keys, st.sampled_from(sorted(evidence.OPERATORS)), literals)
def test_round_trip_literal_comparisons(left, op, value):
    expr = Comparison(left, op, Literal(value))
    assert parse(render(expr)) == expr
