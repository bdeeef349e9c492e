"""Episode orchestration: the atomic propose → validate → execute → commit cycle.

Each cycle reads the snapshot committed by the previous cycle, asks the
proposer for at most one tool call, validates it against the active ruleset,
executes only approved calls, and commits every resulting write atomically —
proposal record, observations, action records, feedback, and termination flag
all land together or not at all. The loop exits through the validator's
termination check (goal satisfied, completion signaled, or cycle budget
exhausted), never on its own.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from . import evidence
from .cognition import (
    CognitionInput,
    FaultConfig,
    FaultyProposer,
    PlannerPolicy,
    Proposal,
    ProposerFailure,
    ScriptedProposer,
    assemble_input,
)
from .control import (
    ControlDecision,
    DedupCache,
    TerminationReason,
    Verdict,
    on_tool_failure,
    validate,
)
from .memory import EntryKind, MalformedKey, MemoryKey, MemoryStore, encode_value
from .regulation import RuleSet, default_ruleset
from .runtime import Runtime, WorldState, builtin_registry
from .trace import CycleRecord, EpisodeTrace, TraceHeader
from .util import content_digest

logger = logging.getLogger(__name__)

CYCLE_BUDGET_FACTOR = 3  # default budget = factor * (facts to gather + actions to run)


class ConfigError(Exception):
    """Episode or scenario configuration is invalid."""


class EpisodeStatus(str, Enum):
    COMPLETED = "Completed"
    PARTIAL = "PartialCompletion"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass
class EpisodeConfig:
    """Everything one governed episode needs, resolved and validated."""

    scenario: str
    task: str
    policy: PlannerPolicy
    ruleset: RuleSet = field(default_factory=default_ruleset)
    context: dict[str, dict[str, Any]] = field(default_factory=dict)
    world: dict[str, Any] = field(default_factory=dict)
    extra_tools: tuple[str, ...] = ()
    seed: int = 1
    faults: FaultConfig | None = None
    max_cycles: int | None = None

    @property
    def proposer_kind(self) -> str:
        if self.faults is not None and self.faults.any_enabled():
            return "faulty"
        return "scripted"

    def resolved_max_cycles(self) -> int:
        if self.max_cycles is not None:
            return self.max_cycles
        goal = self.policy.goal
        return CYCLE_BUDGET_FACTOR * (
            len(goal.required_facts) + goal.total_planned_actions()
        )

    def validate(self) -> None:
        if not self.task.strip():
            raise ConfigError("task must be a non-empty string")
        if self.max_cycles is not None and self.max_cycles < 1:
            raise ConfigError(f"max_cycles must be positive, got {self.max_cycles}")
        self.policy.goal.validate()
        try:
            registry = builtin_registry(list(self.extra_tools))
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        wanted = [self.policy.gather.tool] + [
            t.name for t in self.policy.goal.action_templates()
        ]
        missing = sorted({name for name in wanted if registry.get(name) is None})
        if missing:
            raise ConfigError(f"goal references unregistered tools: {missing}")
        for key, payload in self.context.items():
            try:
                MemoryKey.parse(key)
            except MalformedKey as exc:
                raise ConfigError(f"bad context key {key!r}: {exc}") from exc
            if not isinstance(payload, dict) or not payload:
                raise ConfigError(f"context value for {key!r} must be a non-empty object")

    def describe(self) -> dict[str, Any]:
        """Stable dict identifying this configuration (digest input)."""
        return {
            "scenario": self.scenario,
            "task": self.task,
            "goal": self.policy.goal.to_dict(),
            "gather": {
                "tool": self.policy.gather.tool,
                "arguments": self.policy.gather.arguments,
            },
            "goal_citation": self.policy.goal_citation,
            "ruleset_version": self.ruleset.version,
            "context": self.context,
            "world": self.world,
            "extra_tools": list(self.extra_tools),
            "seed": self.seed,
            "faults": self.faults.to_dict() if self.faults else None,
            "max_cycles": self.resolved_max_cycles(),
            "proposer": self.proposer_kind,
        }

    def digest(self) -> str:
        return content_digest(self.describe())


@dataclass
class EpisodeResult:
    status: EpisodeStatus
    reason: TerminationReason
    cycles_used: int
    max_cycles: int
    final_response: str
    trace: EpisodeTrace
    store: MemoryStore
    invocation_log: list[dict[str, Any]]


def _make_proposer(config: EpisodeConfig):
    if config.proposer_kind == "faulty":
        return FaultyProposer(config.policy, config.faults, episode_seed=config.seed)
    return ScriptedProposer(config.policy)


def _proposal_payload(proposal: Proposal) -> dict[str, Any]:
    return {
        "proposition": proposal.describe(),
        "evidence": [evidence.render(c) for c in proposal.citations],
        "rationale": proposal.rationale,
    }


def _commit_delta(store: MemoryStore) -> list[dict[str, Any]]:
    before = len(store.entries())
    store.commit_cycle()
    return [entry.to_dict() for entry in store.entries()[before:]]


def _action_summary(store: MemoryStore) -> str:
    parts: list[str] = []
    for entry in store.entries():
        if entry.kind is not EntryKind.ACTION:
            continue
        payload = entry.payload
        if payload.get("status") != "executed":
            continue
        extras = [
            str(v) for k, v in sorted(payload.items()) if k not in ("name", "args", "status")
        ]
        parts.append(f"{payload['name']} ({extras[0]})" if extras else str(payload["name"]))
    return ", ".join(parts) if parts else "none"


def _final_response(
    status: EpisodeStatus, cycles_used: int, max_cycles: int, summary: str
) -> str:
    if status is EpisodeStatus.COMPLETED:
        return f"Goal satisfied in {cycles_used} cycles. Actions executed: {summary}."
    if status is EpisodeStatus.PARTIAL:
        return (
            f"Completion signaled after {cycles_used} cycles but the goal is unmet. "
            f"Actions executed: {summary}."
        )
    return (
        f"Cycle budget of {max_cycles} exhausted after {cycles_used} cycles. "
        f"Actions executed: {summary}."
    )


def run_episode(config: EpisodeConfig) -> EpisodeResult:
    """Run one governed episode to termination and return its full record."""
    config.validate()
    registry = builtin_registry(list(config.extra_tools))
    runtime = Runtime(registry, WorldState.from_dict(config.world))
    store = MemoryStore()
    cache = DedupCache()
    proposer = _make_proposer(config)
    goal = config.policy.goal
    max_cycles = config.resolved_max_cycles()

    # Cycle 0: commit the static context and the (false) termination flag.
    for key in sorted(config.context):
        store.write_staged(key, EntryKind.OBSERVATION, config.context[key], source="init")
    store.write_staged(
        "status.terminated", EntryKind.TERMINATION_FLAG, {"terminated": False}, source="init"
    )
    init_delta = _commit_delta(store)
    records = [
        CycleRecord(
            cycle=0,
            memory_delta=init_delta,
            log_lines=[f"[Memory] initialized {len(init_delta)} context entries"],
        )
    ]

    constraints: list[str] = []
    consecutive_failures: dict[str, int] = {}
    reason: TerminationReason | None = None
    cycles_used = 0

    for cycle in range(1, max_cycles + 1):
        cycles_used = cycle
        snapshot = store.snapshot
        cog_input = assemble_input(config.task, snapshot, constraints, config.ruleset)
        constraints = []
        log_lines: list[str] = []

        try:
            proposal = proposer.propose(cog_input)
        except ProposerFailure as exc:
            note = f"Proposer failure: {exc}"
            log_lines.append(f"[Cognition] {note}")
            store.write_staged(
                f"feedback.cycle{cycle}",
                EntryKind.CONTROL_FEEDBACK,
                {"message": note},
                source="control",
            )
            constraints = [f"{note}. Provide a well-formed proposal."]
            records.append(
                CycleRecord(
                    cycle=cycle,
                    input_digest=cog_input.digest(),
                    memory_delta=_commit_delta(store),
                    log_lines=log_lines,
                )
            )
            continue

        meta = proposer.last_meta
        log_lines.append(f"[Cognition] Proposal: {proposal.describe()}")
        if meta.fault_label:
            log_lines.append(f"[Faults] injected {meta.fault_label}")
        consumptions: dict[str, Any] = dict(meta.fact_reads)

        decision = validate(
            proposal, snapshot, goal, config.ruleset, cache, registry, cycle, max_cycles
        )
        log_lines.extend(decision.log_lines)
        for key, value in decision.consumptions:
            consumptions.setdefault(key, value)

        store.write_staged(
            f"prop.cycle{cycle}",
            EntryKind.PROPOSAL,
            _proposal_payload(proposal),
            source="cognition",
        )

        invocation: dict[str, Any] | None = None
        if decision.verdict is Verdict.TERMINATE:
            reason = decision.reason
            if reason is not TerminationReason.BUDGET_EXHAUSTED:
                store.update_status("status.terminated", {"terminated": True}, source="control")
        elif decision.verdict is Verdict.APPROVED:
            result, staged = runtime.execute(decision.call, cycle)
            invocation = runtime.invocation_log[-1]
            name = decision.call.name
            if result.ok:
                for write in staged:
                    store.write_staged(write.key, write.kind, write.payload, source=name)
                cache.record(decision.call, decision.read_set)
                consecutive_failures[name] = 0
                log_lines.append(f"[Runtime] {name} ok ({result.latency_ms} ms)")
            else:
                count = consecutive_failures.get(name, 0) + 1
                consecutive_failures[name] = count
                advice = on_tool_failure(decision.call, result, registry, cycle, count)
                for write in advice.staged:
                    store.write_staged(write.key, write.kind, write.payload, source="control")
                constraints.append(advice.constraint)
                log_lines.append(
                    f"[Runtime] {name} failed: {result.error_code.value}"
                )
                log_lines.append(f"[Control] Failure guidance: {advice.constraint}")
        else:  # rejected
            store.write_staged(
                f"feedback.cycle{cycle}",
                EntryKind.CONTROL_FEEDBACK,
                {"message": decision.feedback},
                source="control",
            )
            constraints.extend(decision.constraints_next)

        records.append(
            CycleRecord(
                cycle=cycle,
                input_digest=cog_input.digest(),
                proposal=proposal.to_response(),
                decision=decision.to_dict(),
                invocation=invocation,
                memory_delta=_commit_delta(store),
                consumptions=[[k, encode_value(v)] for k, v in consumptions.items()],
                fault_label=meta.fault_label,
                log_lines=log_lines,
            )
        )
        if reason is not None:
            break
    else:
        reason = TerminationReason.BUDGET_EXHAUSTED  # budget ended on a failed cycle

    status = {
        TerminationReason.GOAL_SATISFIED: EpisodeStatus.COMPLETED,
        TerminationReason.COMPLETION_SIGNAL: EpisodeStatus.PARTIAL,
        TerminationReason.BUDGET_EXHAUSTED: EpisodeStatus.BUDGET_EXHAUSTED,
    }[reason]
    header = TraceHeader(
        config_digest=config.digest(),
        scenario=config.scenario,
        seed=config.seed,
        baseline=False,
        proposer=config.proposer_kind,
        ruleset_version=config.ruleset.version,
        max_cycles=max_cycles,
    )
    return EpisodeResult(
        status=status,
        reason=reason,
        cycles_used=cycles_used,
        max_cycles=max_cycles,
        final_response=_final_response(
            status, cycles_used, max_cycles, _action_summary(store)
        ),
        trace=EpisodeTrace(header=header, cycles=records),
        store=store,
        invocation_log=runtime.invocation_log,
    )
