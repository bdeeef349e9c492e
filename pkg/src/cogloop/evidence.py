"""Evidence expressions: the tiny grammar used for citations and conditions.

An expression is either a bare memory key (``obs.Seoul.temp_f``, or a goal
reference like ``goal.choose_colder``) or a comparison between a key and a
key-or-literal: ``obs.Seoul.temp_f < obs.Jeju.temp_f``. Rendering and parsing
round-trip exactly, so expressions can live as plain strings in scenario
files, proposals, and traces.

Evaluation over a memory snapshot is three-valued: True, False, or UNKNOWN
when any referenced key does not resolve.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Union

from .memory import NOT_FOUND, MalformedKey, MemoryKey, MemorySnapshot

OPERATORS = ("<=", ">=", "==", "!=", "<", ">")


class EvidenceParseError(Exception):
    """Expression text does not follow the grammar."""


class _Unknown:
    """Three-valued logic marker for 'cannot be evaluated yet'."""

    _instance: "_Unknown | None" = None

    def __new__(cls) -> "_Unknown":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "<unknown>"

    def __bool__(self) -> bool:
        return False


UNKNOWN = _Unknown()


@dataclass(frozen=True)
class MemoryRef:
    """Bare reference: the cited key must resolve."""

    key: str

    def render(self) -> str:
        return self.key


@dataclass(frozen=True)
class GoalRef:
    """Bare reference into the goal namespace."""

    key: str

    def render(self) -> str:
        return self.key


@dataclass(frozen=True)
class Literal:
    value: bool | int | float | str

    def render(self) -> str:
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        if isinstance(self.value, str):
            return json.dumps(self.value)
        return repr(self.value)


@dataclass(frozen=True)
class Comparison:
    """`<key> <op> <key-or-literal>`; truth requires both sides to resolve."""

    lhs: str
    op: str
    rhs: Union[str, Literal]

    def render(self) -> str:
        rhs = self.rhs.render() if isinstance(self.rhs, Literal) else self.rhs
        return f"{self.lhs} {self.op} {rhs}"


EvidenceExpr = Union[MemoryRef, GoalRef, Comparison]


def _parse_operand(text: str) -> Union[str, Literal]:
    try:
        return MemoryKey.parse(text).render()
    except MalformedKey:
        pass
    if text == "true":
        return Literal(True)
    if text == "false":
        return Literal(False)
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        try:
            value = json.loads(text)
        except json.JSONDecodeError as exc:
            raise EvidenceParseError(f"bad string literal {text!r}") from exc
        return Literal(value)
    try:
        return Literal(int(text))
    except ValueError:
        pass
    try:
        return Literal(float(text))
    except ValueError:
        raise EvidenceParseError(f"operand {text!r} is neither a key nor a literal") from None


def parse(text: str) -> EvidenceExpr:
    """Parse an expression string; inverse of `render`."""
    if not isinstance(text, str) or not text.strip():
        raise EvidenceParseError(f"empty evidence expression: {text!r}")
    stripped = text.strip()
    for op in OPERATORS:
        idx = stripped.find(f" {op} ")
        if idx < 0:
            continue
        lhs_text = stripped[:idx].strip()
        rhs_text = stripped[idx + len(op) + 2 :].strip()
        try:
            lhs = MemoryKey.parse(lhs_text).render()
        except MalformedKey as exc:
            raise EvidenceParseError(f"left side of {text!r} must be a memory key") from exc
        return Comparison(lhs=lhs, op=op, rhs=_parse_operand(rhs_text))
    try:
        key = MemoryKey.parse(stripped)
    except MalformedKey as exc:
        raise EvidenceParseError(f"bare expression {text!r} is not a memory key") from exc
    if key.prefix == "goal":
        return GoalRef(key.render())
    return MemoryRef(key.render())


def render(expr: EvidenceExpr) -> str:
    return expr.render()


def referenced_keys(expr: EvidenceExpr) -> list[str]:
    """Memory keys the expression depends on, in appearance order."""
    if isinstance(expr, (MemoryRef, GoalRef)):
        return [expr.key]
    keys = [expr.lhs]
    if not isinstance(expr.rhs, Literal):
        keys.append(expr.rhs)
    return keys


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def evaluate(expr: EvidenceExpr, snapshot: MemorySnapshot) -> Any:
    """Evaluate to True, False, or UNKNOWN (some referenced key unresolved)."""
    if isinstance(expr, (MemoryRef, GoalRef)):
        return UNKNOWN if snapshot.resolve(expr.key) is NOT_FOUND else True
    lhs = snapshot.resolve(expr.lhs)
    rhs = expr.rhs.value if isinstance(expr.rhs, Literal) else snapshot.resolve(expr.rhs)
    if lhs is NOT_FOUND or rhs is NOT_FOUND:
        return UNKNOWN
    if expr.op == "==":
        return lhs == rhs
    if expr.op == "!=":
        return lhs != rhs
    # Relational operators are defined for numbers only.
    if not (_is_number(lhs) and _is_number(rhs)):
        return False
    if expr.op == "<":
        return lhs < rhs
    if expr.op == ">":
        return lhs > rhs
    if expr.op == "<=":
        return lhs <= rhs
    return lhs >= rhs


def evaluate_all(exprs: list[EvidenceExpr], snapshot: MemorySnapshot) -> Any:
    """Three-valued conjunction: False dominates, then UNKNOWN, else True."""
    saw_unknown = False
    for expr in exprs:
        verdict = evaluate(expr, snapshot)
        if verdict is False:
            return False
        if verdict is UNKNOWN:
            saw_unknown = True
    return UNKNOWN if saw_unknown else True
