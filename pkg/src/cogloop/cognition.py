"""Proposal generation: serialized inputs, deterministic planners, wire codec.

The proposer sees the world only through a serialized input: the task text,
rendered rules, one fact line per memory entry, and the previous cycle's
constraints. It answers with at most one tool call plus citations. Two
built-in proposers implement that contract deterministically:

* ``ScriptedProposer`` follows the goal spec — gather missing facts one
  entity at a time, evaluate the cancellation guard before any branch, emit
  branch actions with their condition expressions as citations, then signal
  completion with a null call.
* ``FaultyProposer`` wraps the scripted plan and, from a seeded stream,
  replaces at most one cycle's proposal with a labeled defect (duplicate
  call, stripped arguments, missing citations, premature branch action, or a
  citation to a key that does not exist). Labels are ground truth for the
  error-localization metric.

``ExternalProposer`` adapts any `dict -> dict` transport (e.g. an actual
model behind HTTP) to the same interface via an explicit JSON request and
response shape; malformed responses surface as ``ProposerFailure``.
"""
from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from . import evidence
from .evidence import EvidenceExpr, GoalRef, MemoryRef
from .goals import GoalSpec
from .memory import (
    FIELD_ALIASES,
    NOT_FOUND,
    EntryKind,
    MemoryQuery,
    MemorySnapshot,
)
from .regulation import RuleSet
from .runtime import ToolCall
from .util import content_digest

logger = logging.getLogger(__name__)

DEFAULT_SYSTEM = (
    "You are the reasoning component of a governed agent loop. Propose exactly one "
    "tool call per cycle, or a null call to signal completion. Follow every rule; "
    "cite memory keys as evidence for any comparison you rely on."
)

FACT_PREFIX = "[Memory Fact] "

# A key that no scenario world can ever observe; used for citation faults.
PHANTOM_KEY = "obs.Phantom.temp_f"

FAULT_TYPES = (
    "duplicate",
    "missing_arg",
    "uncited_claim",
    "premature_action",
    "false_citation",
)


class ProposerFailure(Exception):
    """Proposer produced no usable proposal (malformed response, transport error)."""


class PolicyGap(ProposerFailure):
    """The scripted policy has no move for the current state."""


# --------------------------------------------------------------------- input
@dataclass(frozen=True)
class CognitionInput:
    """Everything the proposer is allowed to see for one cycle."""

    system: str
    task: str
    rules: str
    facts: tuple[str, ...]
    constraints: tuple[str, ...]

    def to_request(self) -> dict[str, Any]:
        return {
            "system": self.system,
            "task": self.task,
            "rules": self.rules,
            "facts": list(self.facts),
            "constraints": list(self.constraints),
        }

    def digest(self) -> str:
        return content_digest(self.to_request())


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    return str(value)


def format_memory_fact(entry) -> str:
    """One-line rendering of an entry for the proposer's fact list."""
    if entry.kind is EntryKind.OBSERVATION and entry.key.startswith("obs."):
        entity = entry.key[len("obs.") :]
        fields = {
            k: v
            for k, v in entry.payload.items()
            if not (k == "location" and v == entity)
        }
    elif entry.kind is EntryKind.OBSERVATION:  # goal.* context facts
        entity = entry.key
        fields = dict(entry.payload)
    elif entry.kind is EntryKind.ACTION:
        entity = entry.key
        fields = {
            k: entry.payload[k] for k in ("status", "confirmation") if k in entry.payload
        }
    elif entry.kind is EntryKind.CONTROL_FEEDBACK:
        entity = entry.key
        fields = dict(entry.payload)
    else:
        raise ValueError(f"no fact rendering for entry kind {entry.kind.value!r}")
    rendered = ", ".join(f"{k}={_format_value(v)}" for k, v in fields.items())
    return f"{FACT_PREFIX}{entity}: {rendered}"


_INT_RE = re.compile(r"^-?\d+$")


def _parse_value(text: str) -> Any:
    if text == "true":
        return True
    if text == "false":
        return False
    if _INT_RE.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        pass
    if text[:1] in "[{":
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            pass
    return text


def parse_fact_line(line: str) -> tuple[str, dict[str, Any]] | None:
    """Inverse of `format_memory_fact` for well-formed scalar fields."""
    if not line.startswith(FACT_PREFIX):
        return None
    body = line[len(FACT_PREFIX) :]
    entity, sep, rest = body.partition(": ")
    if not sep or not entity:
        return None
    fields: dict[str, Any] = {}
    for part in rest.split(", "):
        name, eq, raw = part.partition("=")
        if not eq or not name:
            continue
        fields[name] = _parse_value(raw)
    return entity, fields


def assemble_input(
    task: str,
    snapshot: MemorySnapshot,
    constraints: list[str],
    ruleset: RuleSet,
    system: str = DEFAULT_SYSTEM,
) -> CognitionInput:
    """Serialize the snapshot and constraints into the proposer's input.

    Facts come only from the given snapshot (latest version per key, ordered
    by key); constraints are copied verbatim from the previous decision.
    """
    kinds = frozenset(
        {EntryKind.OBSERVATION, EntryKind.ACTION, EntryKind.CONTROL_FEEDBACK}
    )
    entries = snapshot.read(MemoryQuery(kinds=kinds, latest_only=True))
    return CognitionInput(
        system=system,
        task=task,
        rules=ruleset.render_for_cognition(),
        facts=tuple(format_memory_fact(e) for e in entries),
        constraints=tuple(constraints),
    )


# ------------------------------------------------------------------ proposal
@dataclass(frozen=True)
class Proposal:
    """At most one call; a null call signals completion."""

    call: ToolCall | None
    citations: tuple[EvidenceExpr, ...] = ()
    rationale: str = ""

    @property
    def is_completion(self) -> bool:
        return self.call is None

    def to_response(self) -> dict[str, Any]:
        return {
            "call": self.call.to_dict() if self.call else None,
            "citations": [evidence.render(c) for c in self.citations],
            "rationale": self.rationale,
        }

    def describe(self) -> str:
        return "<completion>" if self.call is None else self.call.describe()


def decode_response(payload: Any) -> Proposal:
    """Wire response -> Proposal; anything malformed raises ProposerFailure."""
    if not isinstance(payload, dict):
        raise ProposerFailure(f"response must be an object, got {type(payload).__name__}")
    raw_call = payload.get("call")
    call: ToolCall | None = None
    if raw_call is not None:
        if (
            not isinstance(raw_call, dict)
            or not isinstance(raw_call.get("name"), str)
            or not isinstance(raw_call.get("arguments"), dict)
        ):
            raise ProposerFailure(f"malformed call object: {raw_call!r}")
        call = ToolCall(raw_call["name"], dict(raw_call["arguments"]))
    raw_citations = payload.get("citations", [])
    if not isinstance(raw_citations, list):
        raise ProposerFailure(f"citations must be a list, got {raw_citations!r}")
    citations = []
    for raw in raw_citations:
        if not isinstance(raw, str):
            raise ProposerFailure(f"citation must be a string, got {raw!r}")
        try:
            citations.append(evidence.parse(raw))
        except evidence.EvidenceParseError as exc:
            raise ProposerFailure(f"unparseable citation {raw!r}: {exc}") from exc
    rationale = payload.get("rationale", "")
    if not isinstance(rationale, str):
        raise ProposerFailure(f"rationale must be a string, got {rationale!r}")
    return Proposal(call=call, citations=tuple(citations), rationale=rationale)


# ------------------------------------------------------------- proposer APIs
@dataclass
class ProposeMeta:
    """Side information about one propose call (not part of the wire contract)."""

    fact_reads: list[tuple[str, Any]] = field(default_factory=list)
    fault_label: str | None = None
    phase: str = ""


class Proposer(Protocol):
    def propose(self, cog_input: CognitionInput) -> Proposal: ...


@dataclass(frozen=True)
class GatherTemplate:
    """How to turn a missing observation entity into a tool call."""

    tool: str
    arguments: dict[str, str]

    def build_call(self, entity: str) -> ToolCall:
        args = {
            k: (v.format(entity=entity) if isinstance(v, str) else v)
            for k, v in self.arguments.items()
        }
        return ToolCall(self.tool, args)


@dataclass(frozen=True)
class PlannerPolicy:
    """Scenario-supplied policy: the goal, the gather template, a goal citation."""

    goal: GoalSpec
    gather: GatherTemplate
    goal_citation: str | None = None  # goal.* key cited alongside branch conditions


class _FactView:
    """Resolves dotted paths against parsed fact lines, recording obs reads."""

    def __init__(self, facts: tuple[str, ...]):
        self.entities: dict[str, dict[str, Any]] = {}
        for line in facts:
            parsed = parse_fact_line(line)
            if parsed:
                self.entities[parsed[0]] = parsed[1]
        self.reads: dict[str, Any] = {}

    def resolve(self, path: str) -> Any:
        segments = path.split(".")
        if segments[0] == "obs" and len(segments) >= 2:
            entity = ".".join(segments[1:-1]) if len(segments) > 2 else segments[1]
            fields = self.entities.get(entity)
            if len(segments) == 2:
                value = fields if fields is not None else NOT_FOUND
            elif fields is None:
                value = NOT_FOUND
            else:
                leaf = segments[-1]
                if leaf in fields:
                    value = fields[leaf]
                elif leaf in FIELD_ALIASES and FIELD_ALIASES[leaf] in fields:
                    value = fields[FIELD_ALIASES[leaf]]
                else:
                    value = NOT_FOUND
            if path not in self.reads:
                self.reads[path] = value
            return value
        # goal.* / act.* / feedback.* lines are keyed by their full path.
        fields = self.entities.get(path)
        if fields is not None:
            return fields
        parent = ".".join(segments[:-1])
        parent_fields = self.entities.get(parent)
        if parent_fields is not None and segments[-1] in parent_fields:
            return parent_fields[segments[-1]]
        return NOT_FOUND

    def executed(self, tool_name: str) -> bool:
        record = self.entities.get(f"act.{tool_name}")
        return bool(record) and record.get("status") == "executed"

    def clean_entities(self) -> list[str]:
        """Observation entities with real data (no error marker), sorted."""
        found = []
        for entity, fields in self.entities.items():
            if "." in entity or entity.startswith(("act", "goal", "feedback")):
                continue
            if "error" not in fields and fields:
                found.append(entity)
        return sorted(found)


class ScriptedProposer:
    """Deterministic goal-spec planner; a pure function of the serialized input."""

    def __init__(self, policy: PlannerPolicy):
        self.policy = policy
        self.last_meta = ProposeMeta()

    def _action_citations(self, condition: tuple[EvidenceExpr, ...]) -> tuple[EvidenceExpr, ...]:
        citations: list[EvidenceExpr] = list(condition)
        if self.policy.goal_citation:
            citations.append(GoalRef(self.policy.goal_citation))
        return tuple(citations)

    def _plan(self, view: _FactView) -> tuple[Proposal, str]:
        goal = self.policy.goal
        # 1. Gather required facts, one entity at a time, in spec order.
        for entity in goal.entities():
            needed = goal.facts_for_entity(entity)
            values = [view.resolve(key) for key in needed]
            if any(v is NOT_FOUND for v in values):
                return (
                    Proposal(
                        call=self.policy.gather.build_call(entity),
                        rationale=f"missing required facts for {entity}",
                    ),
                    "gather",
                )
        # 2. Cancellation guard comes before any branch.
        if goal.cancellation is not None:
            verdict = evidence.evaluate_all(list(goal.cancellation.condition), view)
            if verdict is evidence.UNKNOWN:
                return self._regather_unknown(list(goal.cancellation.condition), view)
            if verdict is True:
                action = goal.cancellation.action
                if not view.executed(action.name):
                    return (
                        Proposal(
                            call=action,
                            citations=self._action_citations(goal.cancellation.condition),
                            rationale="cancellation condition satisfied",
                        ),
                        "cancel",
                    )
                return Proposal(call=None, rationale="cancellation handled"), "complete"
        # 3. First true branch whose actions are still outstanding.
        for branch in goal.branches:
            verdict = evidence.evaluate_all(list(branch.condition), view)
            if verdict is evidence.UNKNOWN:
                return self._regather_unknown(list(branch.condition), view)
            if verdict is not True:
                continue
            for action in branch.actions:
                if not view.executed(action.name):
                    return (
                        Proposal(
                            call=action,
                            citations=self._action_citations(branch.condition),
                            rationale="branch condition satisfied",
                        ),
                        "branch",
                    )
        return Proposal(call=None, rationale="all goal work complete"), "complete"

    def _regather_unknown(
        self, conditions: list[EvidenceExpr], view: _FactView
    ) -> tuple[Proposal, str]:
        for expr in conditions:
            for key in evidence.referenced_keys(expr):
                if key.startswith("obs.") and view.resolve(key) is NOT_FOUND:
                    entity = key.split(".")[1]
                    return (
                        Proposal(
                            call=self.policy.gather.build_call(entity),
                            rationale=f"condition key {key} unresolved",
                        ),
                        "gather",
                    )
        raise PolicyGap("condition unknown but every referenced key resolves")

    def propose(self, cog_input: CognitionInput) -> Proposal:
        view = _FactView(cog_input.facts)
        proposal, phase = self._plan(view)
        self.last_meta = ProposeMeta(
            fact_reads=list(view.reads.items()), fault_label=None, phase=phase
        )
        return proposal


@dataclass(frozen=True)
class FaultConfig:
    """Per-cycle injection probabilities for each labeled fault type."""

    seed: int = 0
    p_duplicate: float = 0.0
    p_missing_arg: float = 0.0
    p_uncited_claim: float = 0.0
    p_premature_action: float = 0.0
    p_false_citation: float = 0.0

    def probability(self, fault_type: str) -> float:
        return getattr(self, f"p_{fault_type}")

    def any_enabled(self) -> bool:
        return any(self.probability(t) > 0.0 for t in FAULT_TYPES)

    @classmethod
    def from_dict(cls, config: dict[str, Any]) -> "FaultConfig":
        known = {"seed", *(f"p_{t}" for t in FAULT_TYPES)}
        unknown = set(config) - known
        if unknown:
            raise ValueError(f"unknown fault config fields: {sorted(unknown)}")
        return cls(**config)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"seed": self.seed}
        for fault_type in FAULT_TYPES:
            p = self.probability(fault_type)
            if p:
                data[f"p_{fault_type}"] = p
        return data


class FaultyProposer:
    """Scripted planner plus a seeded stream of labeled single-fault mutations.

    At most one fault is injected per cycle, and only into cycles where the
    plan proposes real work (a completion proposal is never mutated, so every
    label corresponds to a call that validation can reject).
    """

    def __init__(self, policy: PlannerPolicy, faults: FaultConfig, episode_seed: int = 0):
        self._scripted = ScriptedProposer(policy)
        self.policy = policy
        self.faults = faults
        self._rng = random.Random(f"faults:{faults.seed}:{episode_seed}")
        self.last_meta = ProposeMeta()

    def propose(self, cog_input: CognitionInput) -> Proposal:
        view = _FactView(cog_input.facts)
        base, phase = self._scripted._plan(view)
        meta = ProposeMeta(fact_reads=list(view.reads.items()), fault_label=None, phase=phase)
        draws = [self._rng.random() for _ in FAULT_TYPES]
        if base.call is not None:
            for draw, fault_type in zip(draws, FAULT_TYPES):
                if draw >= self.faults.probability(fault_type):
                    continue
                mutated = self._mutate(fault_type, base, phase, view)
                if mutated is not None:
                    meta.fault_label = fault_type
                    self.last_meta = meta
                    logger.debug("injected %s fault: %s", fault_type, mutated.describe())
                    return mutated
        self.last_meta = meta
        return base

    def _mutate(
        self, fault_type: str, base: Proposal, phase: str, view: _FactView
    ) -> Proposal | None:
        goal = self.policy.goal
        if fault_type == "duplicate":
            # Re-propose a gather that already succeeded.
            for entity in goal.entities():
                if entity in view.clean_entities():
                    return Proposal(
                        call=self.policy.gather.build_call(entity),
                        rationale="re-checking a known fact",
                    )
            return None
        if fault_type == "missing_arg":
            if not base.call.arguments:
                return None
            return Proposal(call=ToolCall(base.call.name, {}), citations=base.citations,
                            rationale=base.rationale)
        if fault_type == "uncited_claim":
            if not base.citations:
                return None
            return Proposal(call=base.call, citations=(), rationale=base.rationale)
        if fault_type == "premature_action":
            if phase != "gather":
                return None
            for branch in goal.branches:
                if branch.actions:
                    citations: list[EvidenceExpr] = list(branch.condition)
                    return Proposal(
                        call=branch.actions[0],
                        citations=tuple(citations),
                        rationale="skipping ahead to the branch action",
                    )
            return None
        if fault_type == "false_citation":
            citations = tuple(base.citations) + (MemoryRef(PHANTOM_KEY),)
            return Proposal(call=base.call, citations=citations, rationale=base.rationale)
        return None


class ExternalProposer:
    """Adapts a `request dict -> response dict` transport to the Proposer API."""

    def __init__(self, transport: Callable[[dict[str, Any]], Any]):
        self.transport = transport

    def propose(self, cog_input: CognitionInput) -> Proposal:
        request = cog_input.to_request()
        try:
            raw = self.transport(request)
        except Exception as exc:  # transport errors become proposer failures
            raise ProposerFailure(f"transport error: {exc}") from exc
        return decode_response(raw)
