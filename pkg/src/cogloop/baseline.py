"""Monolithic comparison system: same policy, bounded context, no validation.

Instead of the versioned store, this runner keeps working knowledge in a
bounded context window: a FIFO of leaf facts with at most ``budget`` slots,
where each retained fact is recalled each cycle only with probability
max(0, 1 - decay * age). The same scripted policy reads through that decayed
window, and whatever it proposes executes immediately — there is no
validator, so decision markers in the trace are synthetic auto-approvals and
injected faults reach the runtime.

An authoritative store still records every committed observation and action
so that traces stay replayable and the persistence metric can compare what
the policy saw against what was actually established. With ``budget`` at
least the total fact count and ``decay`` zero, the window never loses
anything and the run matches the governed system's outcomes exactly.
"""
from __future__ import annotations

import logging
import random
from typing import Any

from .cognition import (
    DEFAULT_SYSTEM,
    CognitionInput,
    ProposerFailure,
    format_memory_fact,
)
from .control import TerminationReason, check_termination
from .loop import (
    ConfigError,
    EpisodeConfig,
    EpisodeResult,
    EpisodeStatus,
    _action_summary,
    _commit_delta,
    _final_response,
    _make_proposer,
    _proposal_payload,
)
from .memory import EntryKind, MemoryEntry, MemoryStore, encode_value
from .runtime import Runtime, WorldState, builtin_registry, canon_args
from .trace import CycleRecord, EpisodeTrace, TraceHeader

logger = logging.getLogger(__name__)

_KIND_BY_PREFIX = {
    "obs": EntryKind.OBSERVATION,
    "goal": EntryKind.OBSERVATION,
    "act": EntryKind.ACTION,
}


class ContextModel:
    """Bounded, decaying recall over leaf facts.

    Facts enter the window when a tool returns; re-inserting an existing key
    refreshes both its value and its slot age. When the window exceeds its
    budget the oldest-inserted fact is evicted. Static context facts (the
    episode's initial entries) are exempt from both the budget and decay.
    """

    def __init__(self, budget: int, decay: float, seed: int, static: dict[str, dict[str, Any]]):
        if budget < 1:
            raise ConfigError(f"context budget must be positive, got {budget}")
        if decay < 0:
            raise ConfigError(f"context decay must be non-negative, got {decay}")
        self.budget = budget
        self.decay = decay
        self._rng = random.Random(f"context:{seed}")
        self._static = dict(static)
        self._facts: dict[str, tuple[Any, int]] = {}  # leaf key -> (value, inserted cycle)

    def insert(self, entry_key: str, kind: EntryKind, payload: dict[str, Any], cycle: int) -> None:
        entity = entry_key.split(".", 1)[1] if entry_key.startswith("obs.") else entry_key
        for field_name in sorted(payload):
            value = payload[field_name]
            if kind is EntryKind.OBSERVATION and field_name == "location" and value == entity:
                continue  # echo of the entity name; rendering skips it too
            if kind is EntryKind.ACTION and field_name in ("name", "args"):
                continue  # fact lines carry only status and confirmation
            leaf = f"{entry_key}.{field_name}"
            if leaf in self._facts:
                del self._facts[leaf]  # refresh slot position
            self._facts[leaf] = (value, cycle)
            while len(self._facts) > self.budget:
                evicted = next(iter(self._facts))
                del self._facts[evicted]
                logger.debug("context evicted %s", evicted)

    def retained(self) -> int:
        return len(self._facts)

    def visible_entries(self, cycle: int) -> list[MemoryEntry]:
        """One recall draw per retained fact; assemble visible facts as entries."""
        grouped: dict[str, dict[str, Any]] = {}
        for leaf, (value, inserted) in self._facts.items():
            age = cycle - inserted
            recall = max(0.0, 1.0 - self.decay * age)
            if self._rng.random() < recall:
                entry_key, _, field_name = leaf.rpartition(".")
                grouped.setdefault(entry_key, {})[field_name] = value
        entries: dict[str, MemoryEntry] = {}
        for key, payload in self._static.items():
            entries[key] = _context_entry(key, dict(payload))
        for key, fields in grouped.items():
            entries[key] = _context_entry(key, fields)
        return [entries[key] for key in sorted(entries)]


def _context_entry(key: str, payload: dict[str, Any]) -> MemoryEntry:
    kind = _KIND_BY_PREFIX.get(key.split(".", 1)[0], EntryKind.OBSERVATION)
    return MemoryEntry(
        key=key, kind=kind, payload=payload, source="context", timestamp="", version=1
    )


def run_baseline_episode(
    config: EpisodeConfig, budget: int, decay: float
) -> EpisodeResult:
    """Run one unvalidated bounded-context episode and return its full record."""
    config.validate()
    registry = builtin_registry(list(config.extra_tools))
    runtime = Runtime(registry, WorldState.from_dict(config.world))
    store = MemoryStore()
    proposer = _make_proposer(config)
    goal = config.policy.goal
    max_cycles = config.resolved_max_cycles()
    context = ContextModel(budget, decay, config.seed, config.context)

    for key in sorted(config.context):
        store.write_staged(key, EntryKind.OBSERVATION, config.context[key], source="init")
    init_delta = _commit_delta(store)
    records = [
        CycleRecord(
            cycle=0,
            memory_delta=init_delta,
            log_lines=[f"[Baseline] initialized {len(init_delta)} context entries"],
        )
    ]

    reason: TerminationReason | None = None
    cycles_used = 0
    for cycle in range(1, max_cycles + 1):
        cycles_used = cycle
        snapshot = store.snapshot
        entries = context.visible_entries(cycle)
        cog_input = CognitionInput(
            system=DEFAULT_SYSTEM,
            task=config.task,
            rules=config.ruleset.render_for_cognition(),
            facts=tuple(format_memory_fact(e) for e in entries),
            constraints=(),
        )
        log_lines: list[str] = []
        try:
            proposal = proposer.propose(cog_input)
        except ProposerFailure as exc:
            log_lines.append(f"[Baseline] Proposer failure: {exc}")
            records.append(
                CycleRecord(cycle=cycle, input_digest=cog_input.digest(), log_lines=log_lines)
            )
            continue

        meta = proposer.last_meta
        log_lines.append(f"[Baseline] Proposal: {proposal.describe()}")
        if meta.fault_label:
            log_lines.append(f"[Faults] injected {meta.fault_label}")
        consumptions = dict(meta.fact_reads)

        store.write_staged(
            f"prop.cycle{cycle}",
            EntryKind.PROPOSAL,
            _proposal_payload(proposal),
            source="cognition",
        )

        reason = check_termination(proposal.call is None, snapshot, goal, cycle, max_cycles)
        invocation: dict[str, Any] | None = None
        if reason is not None:
            decision = {
                "verdict": "terminate",
                "call": None,
                "rule_ids": [],
                "reason": reason.value,
                "synthetic": True,
            }
            log_lines.append(f"[Baseline] Termination: {reason.value}")
        else:
            call = proposal.call.canonical()
            decision = {
                "verdict": "approved",
                "call": call.to_dict(),
                "rule_ids": [],
                "reason": None,
                "synthetic": True,
            }
            log_lines.append("[Baseline] auto-approved (no validation layer)")
            result, staged = runtime.execute(call, cycle)
            invocation = runtime.invocation_log[-1]
            if result.ok:
                for write in staged:
                    store.write_staged(write.key, write.kind, write.payload, source=call.name)
                spec = registry.get(call.name)
                for write in Runtime._staged_writes(spec, canon_args(call.arguments), result.payload):
                    context.insert(write.key, write.kind, write.payload, cycle)
                log_lines.append(f"[Runtime] {call.name} ok ({result.latency_ms} ms)")
            else:
                log_lines.append(f"[Runtime] {call.name} failed: {result.error_code.value}")
            log_lines.append(
                f"[Baseline] context holds {context.retained()}/{context.budget} facts"
            )

        records.append(
            CycleRecord(
                cycle=cycle,
                input_digest=cog_input.digest(),
                proposal=proposal.to_response(),
                decision=decision,
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
        reason = TerminationReason.BUDGET_EXHAUSTED

    status = {
        TerminationReason.GOAL_SATISFIED: EpisodeStatus.COMPLETED,
        TerminationReason.COMPLETION_SIGNAL: EpisodeStatus.PARTIAL,
        TerminationReason.BUDGET_EXHAUSTED: EpisodeStatus.BUDGET_EXHAUSTED,
    }[reason]
    header = TraceHeader(
        config_digest=config.digest(),
        scenario=config.scenario,
        seed=config.seed,
        baseline=True,
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
