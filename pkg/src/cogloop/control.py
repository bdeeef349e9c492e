"""Validation layer: every proposal is checked against rules, memory, and goal.

``validate`` runs a fixed sequence of checks and reports *all* violations,
each tagged with the rule ids it breaches, so rejections are attributable:

1. termination — goal satisfied, completion signaled, or budget exhausted
2. argument completeness (R-ARGS): schema-required args present, no placeholders
3. sequencing (R-SEQ): no new call while an unconfirmed action is pending
4. duplicate suppression (R-DEDUP): identical successful call not re-run
   unless a key it depended on has gained a newer version since
5. preconditions (R-COND-EXEC): memory keys the call requires must resolve
6. cancellation priority (R-COND-PRIORITY): branch actions wait until the
   cancellation guard is evaluable
7. conditional execution (R-COND-EXEC): a planned action runs only under a
   true condition; effect tools outside the plan are never authorized
8. citations (R-NUM-COMPARE): comparison-backed actions cite evidence, and
   every citation must resolve and hold arithmetically

Approval never mutates anything; rejected proposals produce a feedback
constraint for the next cycle. R-DEDUP is minted here rather than configured,
because duplicate suppression is a control policy, not prompt guidance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from . import evidence
from .evidence import Comparison, EvidenceExpr, GoalRef, Literal, MemoryRef
from .goals import GoalSpec
from .memory import (
    NOT_FOUND,
    EntryKind,
    MemoryQuery,
    MemorySnapshot,
    encode_value,
)
from .regulation import CheckKind, RuleSet
from .runtime import (
    StagedWrite,
    ToolCall,
    ToolRegistry,
    ToolResult,
    canon_args,
    argument_problems,
)

logger = logging.getLogger(__name__)

DEDUP_RULE_ID = "R-DEDUP"
DEDUP_STATEMENT = (
    "Do not repeat a tool call that already succeeded with identical arguments "
    "unless the memory it depended on has changed."
)

ESCALATION_THRESHOLD = 2  # consecutive failures of one tool before escalating


class Verdict(str, Enum):
    APPROVED = "approved"
    REJECTED = "rejected"
    TERMINATE = "terminate"


class TerminationReason(str, Enum):
    GOAL_SATISFIED = "GoalSatisfied"
    COMPLETION_SIGNAL = "CompletionSignal"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True)
class Violation:
    check: str
    rule_ids: tuple[str, ...]
    detail: str
    short: str  # compact reason used in log lines


@dataclass
class ControlDecision:
    """Outcome of validating one proposal."""

    verdict: Verdict
    call: ToolCall | None = None
    violations: tuple[Violation, ...] = ()
    feedback: str = ""
    reason: TerminationReason | None = None
    constraints_next: tuple[str, ...] = ()
    log_lines: tuple[str, ...] = ()
    consumptions: tuple[tuple[str, Any], ...] = ()
    read_set: dict[str, int] = field(default_factory=dict)

    def rule_ids(self) -> tuple[str, ...]:
        ordered: list[str] = []
        for violation in self.violations:
            for rule_id in violation.rule_ids:
                if rule_id not in ordered:
                    ordered.append(rule_id)
        return tuple(ordered)

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "call": self.call.to_dict() if self.call else None,
            "rule_ids": list(self.rule_ids()),
            "violations": [
                {"check": v.check, "rule_ids": list(v.rule_ids), "detail": v.detail}
                for v in self.violations
            ],
            "feedback": self.feedback,
            "reason": self.reason.value if self.reason else None,
            "constraints_next": list(self.constraints_next),
            "log_lines": list(self.log_lines),
            "consumptions": [[k, encode_value(v)] for k, v in self.consumptions],
            "read_set": dict(self.read_set),
        }


class DedupCache:
    """Successful calls with the memory versions their approval depended on.

    A cached call counts as a duplicate while none of its read-set keys has
    gained a newer version; calls with an empty read set stay duplicates
    forever (re-running them could not produce new information).
    """

    def __init__(self) -> None:
        self._entries: dict[str, dict[str, int]] = {}

    def record(self, call: ToolCall, read_set: dict[str, int]) -> None:
        self._entries[call.call_id()] = dict(read_set)

    def is_duplicate(self, call: ToolCall, snapshot: MemorySnapshot) -> bool:
        read_set = self._entries.get(call.call_id())
        if read_set is None:
            return False
        return all(snapshot.latest_version(key) <= version for key, version in read_set.items())

    def __len__(self) -> int:
        return len(self._entries)


def check_termination(
    proposal_is_completion: bool,
    snapshot: MemorySnapshot,
    goal: GoalSpec,
    cycle_index: int,
    max_cycles: int,
) -> TerminationReason | None:
    """Exit precedence: goal satisfaction, then completion signal, then budget."""
    if goal.success(snapshot):
        return TerminationReason.GOAL_SATISFIED
    if proposal_is_completion:
        return TerminationReason.COMPLETION_SIGNAL
    if cycle_index >= max_cycles:
        return TerminationReason.BUDGET_EXHAUSTED
    return None


def _entry_watermark(snapshot: MemorySnapshot, leaf_key: str) -> tuple[str, int] | None:
    """Map a dotted leaf reference to its owning entry key and current version."""
    segments = leaf_key.split(".")
    for cut in range(len(segments), 0, -1):
        key = ".".join(segments[:cut])
        version = snapshot.latest_version(key)
        if version:
            return key, version
    return None


class _Validation:
    """One validate() run; collects violations, consumptions, and log lines."""

    def __init__(
        self,
        proposal,
        snapshot: MemorySnapshot,
        goal: GoalSpec,
        ruleset: RuleSet,
        cache: DedupCache,
        registry: ToolRegistry,
    ):
        self.proposal = proposal
        self.snapshot = snapshot
        self.goal = goal
        self.ruleset = ruleset
        self.cache = cache
        self.registry = registry
        self.call = proposal.call.canonical() if proposal.call else None
        self.spec = registry.get(self.call.name) if self.call else None
        self.template = goal.matching_template(self.call) if self.call else None
        self.violations: list[Violation] = []
        self.consumed: dict[str, Any] = {}
        self.read_keys: set[str] = set()

    def rule_ids_for(self, check: CheckKind) -> tuple[str, ...]:
        return tuple(r.id for r in self.ruleset.active_for_check(check))

    def add(self, check: CheckKind | None, label: str, detail: str, short: str) -> None:
        if check is None:
            rule_ids: tuple[str, ...] = (DEDUP_RULE_ID,)
        else:
            rule_ids = self.rule_ids_for(check)
            if not rule_ids:  # rule explicitly disabled: check not enforced
                return
        self.violations.append(Violation(check=label, rule_ids=rule_ids, detail=detail, short=short))

    def consume(self, key: str) -> Any:
        value = self.snapshot.resolve(key)
        if key not in self.consumed:
            self.consumed[key] = value
        self.read_keys.add(key)
        return value

    # ------------------------------------------------------------- the checks
    def check_arguments(self) -> None:
        if self.spec is None:
            self.add(
                CheckKind.ARGUMENTS_COMPLETE,
                "Arguments",
                f"no registered tool named {self.call.name!r}",
                "unknown tool",
            )
            return
        problems = argument_problems(self.spec, self.call.arguments)
        if problems:
            self.add(
                CheckKind.ARGUMENTS_COMPLETE,
                "Arguments",
                "; ".join(problems),
                "incomplete arguments",
            )

    def check_sequencing(self) -> None:
        for prefix, kind in (("act", EntryKind.ACTION), ("pending", EntryKind.PENDING_ACTION)):
            records = self.snapshot.read(
                MemoryQuery(prefix=prefix, kinds=frozenset({kind}), latest_only=True)
            )
            for entry in records:
                if entry.payload.get("status") == "pending":
                    self.add(
                        CheckKind.ONE_ACTION_PER_CYCLE,
                        "Sequence",
                        f"action {entry.key} is still pending confirmation",
                        "unconfirmed action pending",
                    )
                    return

    def check_dedup(self) -> None:
        if not self.cache.is_duplicate(self.call, self.snapshot):
            return
        if self.spec is not None and self.spec.observes is not None:
            detail = "Observation already exists"
        else:
            detail = (
                f"identical call {self.call.describe()} already executed "
                "without intervening state changes"
            )
        self.add(None, "Dedup", detail, "duplicate")

    def check_preconditions(self) -> None:
        if self.spec is None or self.spec.memory_requires is None:
            return
        missing = []
        for key in self.spec.memory_requires(self.call.arguments):
            if self.consume(key) is NOT_FOUND:
                missing.append(key)
        if missing:
            self.add(
                CheckKind.PRECONDITIONS_SATISFIED,
                "Precondition",
                f"required memory not present: {', '.join(missing)}",
                "precondition",
            )

    def check_cancellation_priority(self) -> None:
        if self.goal.cancellation is None or self.template is None:
            return
        if self.template[0] != "branch":
            return
        verdict = self._evaluate(list(self.goal.cancellation.condition))
        if verdict is evidence.UNKNOWN:
            self.add(
                CheckKind.CANCELLATION_BEFORE_BRANCH,
                "Priority",
                "cancellation condition not yet evaluable; gather its facts first",
                "premature",
            )

    def check_condition(self) -> None:
        if self.call is None:
            return
        if self.template is None:
            if self.spec is not None and self.spec.effect:
                self.add(
                    CheckKind.PRECONDITIONS_SATISFIED,
                    "Condition",
                    f"no goal branch authorizes effect call {self.call.describe()}",
                    "unauthorized action",
                )
            return
        kind, condition = self.template
        verdict = self._evaluate(list(condition))
        if verdict is True:
            return
        rendered = " and ".join(evidence.render(c) for c in condition)
        if verdict is evidence.UNKNOWN:
            detail = f"{kind} condition not established: {rendered}"
        else:
            detail = f"{kind} condition is false: {rendered}"
        self.add(CheckKind.PRECONDITIONS_SATISFIED, "Condition", detail, "condition not satisfied")

    def check_citations(self) -> None:
        if self.template is not None and not self.proposal.citations:
            self.add(
                CheckKind.CITATION_REQUIRED_FOR_COMPARISON,
                "Citation",
                "comparison-backed action proposed without citations",
                "missing citations",
            )
        for expr in self.proposal.citations:
            if isinstance(expr, (MemoryRef, GoalRef)):
                if self.consume(expr.key) is NOT_FOUND:
                    self.add(
                        CheckKind.CITATION_REQUIRED_FOR_COMPARISON,
                        "Citation",
                        f"cited key {expr.key} does not resolve",
                        "invalid citation",
                    )
                continue
            verdict = self._evaluate([expr])
            if verdict is evidence.UNKNOWN:
                self.add(
                    CheckKind.CITATION_REQUIRED_FOR_COMPARISON,
                    "Citation",
                    f"citation {evidence.render(expr)} references missing memory",
                    "invalid citation",
                )
            elif verdict is False:
                self.add(
                    CheckKind.CITATION_REQUIRED_FOR_COMPARISON,
                    "Citation",
                    f"citation {evidence.render(expr)} is not supported by memory",
                    "invalid citation",
                )

    def _evaluate(self, exprs: list[EvidenceExpr]) -> Any:
        for expr in exprs:
            for key in evidence.referenced_keys(expr):
                self.consume(key)
        return evidence.evaluate_all(exprs, self.snapshot)

    # ------------------------------------------------------------- assembly
    def approval_log_line(self) -> str:
        if self.spec is not None and self.spec.observes is not None:
            obs_key = self.spec.observes(self.call.arguments)
            entity = obs_key.split(".", 1)[1] if "." in obs_key else obs_key
            prior = self.snapshot.latest(obs_key)
            if prior is None:
                detail = f"No prior observation for {entity}"
            elif "error" in prior.payload:
                detail = f"Previous observation for {entity} failed"
            else:
                detail = f"Fresh observation permitted for {entity}"
            return f"[Control] Precondition: {detail} → Approved"
        if self.template is not None:
            rendered = " and ".join(evidence.render(c) for c in self.template[1])
            return f"[Control] Condition: {rendered} satisfied → Approved"
        return "[Control] Precondition: required memory present → Approved"

    def read_set_watermarks(self) -> dict[str, int]:
        watermarks: dict[str, int] = {}
        for key in sorted(self.read_keys):
            entry = _entry_watermark(self.snapshot, key)
            if entry is not None:
                watermarks[entry[0]] = entry[1]
        return watermarks


def validate(
    proposal,
    snapshot: MemorySnapshot,
    goal: GoalSpec,
    ruleset: RuleSet,
    cache: DedupCache,
    registry: ToolRegistry,
    cycle_index: int,
    max_cycles: int,
) -> ControlDecision:
    """Run every applicable check; approve, reject with all violations, or terminate."""
    reason = check_termination(
        proposal.call is None, snapshot, goal, cycle_index, max_cycles
    )
    if reason is not None:
        details = {
            TerminationReason.GOAL_SATISFIED: "goal satisfied",
            TerminationReason.COMPLETION_SIGNAL: "completion signaled",
            TerminationReason.BUDGET_EXHAUSTED: f"cycle budget {max_cycles} exhausted",
        }
        line = f"[Control] Termination: {details[reason]} → Terminate ({reason.value})"
        return ControlDecision(
            verdict=Verdict.TERMINATE, reason=reason, log_lines=(line,)
        )

    run = _Validation(proposal, snapshot, goal, ruleset, cache, registry)
    run.check_arguments()
    run.check_sequencing()
    run.check_dedup()
    run.check_preconditions()
    run.check_cancellation_priority()
    run.check_condition()
    run.check_citations()

    consumptions = tuple(run.consumed.items())
    if not run.violations:
        decision = ControlDecision(
            verdict=Verdict.APPROVED,
            call=run.call,
            log_lines=(run.approval_log_line(),),
            consumptions=consumptions,
            read_set=run.read_set_watermarks(),
        )
        logger.debug("approved %s", run.call.describe())
        return decision

    rule_ids: list[str] = []
    for violation in run.violations:
        for rule_id in violation.rule_ids:
            if rule_id not in rule_ids:
                rule_ids.append(rule_id)
    details = "; ".join(v.detail for v in run.violations)
    feedback = (
        f"Proposal rejected [{', '.join(rule_ids)}]: {details}. "
        "Revise the proposal using current memory."
    )
    log_lines = tuple(
        f"[Control] {v.check}: {v.detail} → Rejected ({v.short})" for v in run.violations
    )
    logger.debug("rejected %s: %s", proposal.describe(), ", ".join(rule_ids))
    return ControlDecision(
        verdict=Verdict.REJECTED,
        call=run.call,
        violations=tuple(run.violations),
        feedback=feedback,
        constraints_next=(feedback,),
        log_lines=log_lines,
        consumptions=consumptions,
    )


@dataclass(frozen=True)
class FailureAdvice:
    """What control stages and constrains after a tool failure."""

    constraint: str
    staged: tuple[StagedWrite, ...]
    escalated: bool


def on_tool_failure(
    call: ToolCall,
    result: ToolResult,
    registry: ToolRegistry,
    cycle_index: int,
    consecutive_failures: int,
) -> FailureAdvice:
    """Record a failure in memory and steer the next proposal.

    ``consecutive_failures`` counts this failure too; at the escalation
    threshold the constraint switches from retry advice to seeking
    clarification. The failure is staged twice: as cycle feedback, and — for
    sensors — as an error-marker version under the observation key itself, so
    a later successful reading lands alongside the failed one in history.
    """
    code = result.error_code.value if result.error_code else "UnknownError"
    escalated = consecutive_failures >= ESCALATION_THRESHOLD
    if escalated:
        constraint = (
            f"Tool {call.name} failed {consecutive_failures} times: {code}. "
            "Seek clarification before retrying."
        )
    else:
        constraint = f"Tool {call.name} failed: {code}. Propose an alternative or retry."
    message = result.error_message or code
    staged: list[StagedWrite] = [
        StagedWrite(
            key=f"feedback.cycle{cycle_index}",
            kind=EntryKind.CONTROL_FEEDBACK,
            payload={
                "tool": call.name,
                "code": code,
                "message": message,
                "constraint": constraint,
            },
        )
    ]
    spec = registry.get(call.name)
    if spec is not None and spec.observes is not None:
        staged.append(
            StagedWrite(
                key=spec.observes(canon_args(call.arguments)),
                kind=EntryKind.OBSERVATION,
                payload={"error": code, "tool": call.name},
            )
        )
    return FailureAdvice(constraint=constraint, staged=tuple(staged), escalated=escalated)
