"""Episode traces: serialized cycle records, justification chains, metrics.

A trace file is self-contained: a header line (config digest, seed, flags)
followed by one JSON line per cycle, each carrying the serialized proposal,
decision, invocation, committed memory delta, recorded fact consumptions, and
the injected-fault label when one exists. Everything below — chain
reconstruction and all three metrics — works from the parsed file alone, with
no live episode state.

Metrics:

* state persistence accuracy (SPA): of the fact reads whose key had an
  authoritative value committed in an earlier cycle, the fraction that saw
  exactly that value. A consumption is a planner fact read, a validation-time
  citation or condition resolution, or a tool argument bound from memory.
* trace completeness (TC): fraction of executed (ok) invocations whose
  justification chain is fully reconstructable: proposal, approval,
  invocation record, resulting memory entries, and citations that resolve
  truthfully against the pre-cycle snapshot.
* error localization precision (ELP): of the labeled injected faults that
  reached validation, the fraction whose rejection cites the rule mapped to
  that fault type. Faults proposed in the final termination cycle never reach
  validation and are excluded.

A metric with denominator zero is undefined (ratio None), never 1.0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from . import evidence
from .evidence import Comparison, GoalRef, MemoryRef
from .memory import NOT_FOUND, MemoryEntry, MemorySnapshot, decode_value
from .runtime import canon_args
from .util import canonical_json

TRACE_FORMAT = 1

# Fault label -> rule ids that a correct rejection must cite (any one suffices).
FAULT_RULE_MAP: dict[str, frozenset[str]] = {
    "duplicate": frozenset({"R-DEDUP"}),
    "missing_arg": frozenset({"R-ARGS"}),
    "uncited_claim": frozenset({"R-NUM-COMPARE"}),
    "false_citation": frozenset({"R-NUM-COMPARE"}),
    "premature_action": frozenset({"R-COND-PRIORITY", "R-COND-EXEC"}),
}

CHAIN_LINKS = ("proposal", "decision", "invocation", "memory_entries", "citation")


class ParseError(Exception):
    """Trace file is structurally invalid."""


class UnknownAction(Exception):
    """Requested action reference does not occur in the trace."""


class MissingLabels(Exception):
    """Error-localization metric requested on a trace without fault injection."""


@dataclass(frozen=True)
class TraceHeader:
    config_digest: str
    scenario: str
    seed: int
    baseline: bool
    proposer: str
    ruleset_version: str
    max_cycles: int
    format: int = TRACE_FORMAT

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "header",
            "format": self.format,
            "config_digest": self.config_digest,
            "scenario": self.scenario,
            "seed": self.seed,
            "baseline": self.baseline,
            "proposer": self.proposer,
            "ruleset_version": self.ruleset_version,
            "max_cycles": self.max_cycles,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TraceHeader":
        try:
            return cls(
                config_digest=data["config_digest"],
                scenario=data["scenario"],
                seed=int(data["seed"]),
                baseline=bool(data["baseline"]),
                proposer=data["proposer"],
                ruleset_version=data["ruleset_version"],
                max_cycles=int(data["max_cycles"]),
                format=int(data.get("format", TRACE_FORMAT)),
            )
        except KeyError as exc:
            raise ParseError(f"trace header missing field {exc}") from exc


@dataclass
class CycleRecord:
    """Everything one cycle did, as plain serializable data.

    ``cycle`` 0 is the initialization commit (static context facts); it has
    no proposal or decision. ``invocation`` is present exactly when the
    decision approved a call (or, for the unvalidated baseline, whenever a
    call executed).
    """

    cycle: int
    input_digest: str = ""
    proposal: dict[str, Any] | None = None
    decision: dict[str, Any] | None = None
    invocation: dict[str, Any] | None = None
    memory_delta: list[dict[str, Any]] = field(default_factory=list)
    consumptions: list[list[Any]] = field(default_factory=list)
    fault_label: str | None = None
    log_lines: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "cycle",
            "cycle": self.cycle,
            "input_digest": self.input_digest,
            "proposal": self.proposal,
            "decision": self.decision,
            "invocation": self.invocation,
            "memory_delta": self.memory_delta,
            "consumptions": self.consumptions,
            "fault_label": self.fault_label,
            "log_lines": self.log_lines,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CycleRecord":
        try:
            return cls(
                cycle=int(data["cycle"]),
                input_digest=data.get("input_digest", ""),
                proposal=data.get("proposal"),
                decision=data.get("decision"),
                invocation=data.get("invocation"),
                memory_delta=list(data.get("memory_delta", [])),
                consumptions=list(data.get("consumptions", [])),
                fault_label=data.get("fault_label"),
                log_lines=list(data.get("log_lines", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed cycle record: {exc}") from exc

    def approved(self) -> bool:
        return bool(self.decision) and self.decision.get("verdict") == "approved"

    def executed_ok(self) -> bool:
        return bool(self.invocation) and bool(self.invocation.get("outcome", {}).get("ok"))


@dataclass
class EpisodeTrace:
    header: TraceHeader
    cycles: list[CycleRecord]

    # ---------------------------------------------------------- serialization
    def dumps(self) -> str:
        lines = [canonical_json(self.header.to_dict())]
        lines.extend(canonical_json(record.to_dict()) for record in self.cycles)
        return "\n".join(lines) + "\n"

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "EpisodeTrace":
        header: TraceHeader | None = None
        cycles: list[CycleRecord] = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {line_no}: not valid JSON ({exc})") from exc
            kind = data.get("type")
            if kind == "header":
                header = TraceHeader.from_dict(data)
            elif kind == "cycle":
                cycles.append(CycleRecord.from_dict(data))
            else:
                raise ParseError(f"line {line_no}: unknown record type {kind!r}")
        if header is None:
            raise ParseError("trace has no header line")
        return cls(header=header, cycles=cycles)

    @classmethod
    def load(cls, path: str | Path) -> "EpisodeTrace":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    # -------------------------------------------------------------- replaying
    def snapshot_before(self, cycle: int) -> MemorySnapshot:
        """Authoritative memory state a given cycle read: all earlier commits."""
        entries: list[MemoryEntry] = []
        for record in self.cycles:
            if record.cycle >= cycle:
                continue
            entries.extend(MemoryEntry.from_dict(e) for e in record.memory_delta)
        return MemorySnapshot(tuple(entries))

    def record_for(self, cycle: int) -> CycleRecord | None:
        for record in self.cycles:
            if record.cycle == cycle:
                return record
        return None


# ------------------------------------------------------------------- chains
@dataclass
class JustificationChain:
    """Reconstructed evidence path for one executed action."""

    action_ref: str
    cycle: int
    call: dict[str, Any]
    citations: list[str]
    resolved: list[list[Any]]  # [key, value] pairs at the pre-cycle snapshot
    invocation: dict[str, Any]
    entries: list[dict[str, Any]]
    complete: bool = True


@dataclass
class GapReport:
    """A chain link that could not be reconstructed from the trace."""

    action_ref: str
    cycle: int
    missing_link: str
    detail: str


def _call_matches(call: dict[str, Any] | None, tool: str, args: dict[str, Any]) -> bool:
    if not isinstance(call, dict):
        return False
    return call.get("name") == tool and canon_args(call.get("arguments", {})) == canon_args(args)


def _chain_for_record(
    trace: EpisodeTrace, record: CycleRecord, action_ref: str
) -> JustificationChain | GapReport:
    invocation = record.invocation
    if not invocation or not invocation.get("outcome", {}).get("ok"):
        return GapReport(action_ref, record.cycle, "invocation", "no successful invocation record")
    tool = invocation.get("tool", "")
    args = invocation.get("args", {})

    proposal = record.proposal
    if not proposal or not _call_matches(proposal.get("call"), tool, args):
        return GapReport(
            action_ref, record.cycle, "proposal", "no proposal matching the invocation"
        )

    decision = record.decision
    if not decision or decision.get("verdict") != "approved":
        return GapReport(action_ref, record.cycle, "decision", "no approval decision")
    if not _call_matches(decision.get("call"), tool, args):
        return GapReport(action_ref, record.cycle, "decision", "approval names a different call")

    entries = record.memory_delta
    own_entries = [
        e
        for e in entries
        if e.get("source") == tool
        or (e.get("kind") == "action" and e.get("payload", {}).get("name") == tool)
    ]
    if not own_entries and not invocation.get("idempotency_hit"):
        return GapReport(
            action_ref, record.cycle, "memory_entries", "execution left no memory entries"
        )

    snapshot = trace.snapshot_before(record.cycle)
    resolved: list[list[Any]] = []
    citations = [c for c in proposal.get("citations", [])]
    for raw in citations:
        try:
            expr = evidence.parse(raw)
        except evidence.EvidenceParseError as exc:
            return GapReport(action_ref, record.cycle, "citation", f"unparseable citation: {exc}")
        for key in evidence.referenced_keys(expr):
            value = snapshot.resolve(key)
            resolved.append([key, value if value is not NOT_FOUND else None])
            if value is NOT_FOUND:
                return GapReport(
                    action_ref, record.cycle, "citation", f"cited key {key} does not resolve"
                )
        if isinstance(expr, Comparison) and evidence.evaluate(expr, snapshot) is not True:
            return GapReport(
                action_ref, record.cycle, "citation", f"citation {raw} not supported by memory"
            )
    return JustificationChain(
        action_ref=action_ref,
        cycle=record.cycle,
        call={"name": tool, "arguments": args},
        citations=citations,
        resolved=resolved,
        invocation=invocation,
        entries=own_entries,
    )


def reconstruct_chain(trace: EpisodeTrace, action_ref: str) -> JustificationChain | GapReport:
    """Chain for an action record reference: ``act.<tool>`` or ``act.<tool>@<version>``."""
    key, _, raw_version = action_ref.partition("@")
    version = int(raw_version) if raw_version else None
    for record in trace.cycles:
        for entry in record.memory_delta:
            if entry.get("key") != key or entry.get("kind") != "action":
                continue
            if entry.get("payload", {}).get("status") != "executed":
                continue
            if version is not None and entry.get("version") != version:
                continue
            return _chain_for_record(trace, record, action_ref)
    raise UnknownAction(f"no executed action record matches {action_ref!r}")


def iter_chains(trace: EpisodeTrace) -> Iterator[JustificationChain | GapReport]:
    """One chain (or gap) per executed invocation, plus structural gap checks."""
    for record in trace.cycles:
        if record.cycle == 0:
            continue
        if record.approved() and record.invocation is None:
            yield GapReport(
                f"cycle{record.cycle}", record.cycle, "invocation", "approved call never logged"
            )
            continue
        if record.executed_ok():
            ref = f"cycle{record.cycle}:{record.invocation.get('tool', '?')}"
            yield _chain_for_record(trace, record, ref)


# ------------------------------------------------------------------- metrics
@dataclass(frozen=True)
class Metric:
    name: str
    numerator: int
    denominator: int

    @property
    def ratio(self) -> float | None:
        if self.denominator == 0:
            return None
        return self.numerator / self.denominator

    def render(self) -> str:
        return "undefined" if self.ratio is None else f"{self.ratio:.3f}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "numerator": self.numerator,
            "denominator": self.denominator,
            "ratio": self.ratio,
        }


def compute_spa(trace: EpisodeTrace) -> Metric:
    """State persistence accuracy over cross-cycle fact consumptions."""
    numerator = denominator = 0
    for record in trace.cycles:
        if record.cycle == 0 or not record.consumptions:
            continue
        snapshot = trace.snapshot_before(record.cycle)
        for key, raw_value in record.consumptions:
            authoritative = snapshot.resolve(key)
            if authoritative is NOT_FOUND:
                continue  # nothing persisted earlier to be faithful to
            denominator += 1
            if decode_value(raw_value) == authoritative:
                numerator += 1
    return Metric("spa", numerator, denominator)


def compute_tc(trace: EpisodeTrace) -> Metric:
    """Trace completeness over executed invocations."""
    numerator = denominator = 0
    for record in trace.cycles:
        if record.cycle == 0 or not record.executed_ok():
            continue
        denominator += 1
        ref = f"cycle{record.cycle}:{record.invocation.get('tool', '?')}"
        if isinstance(_chain_for_record(trace, record, ref), JustificationChain):
            numerator += 1
    return Metric("tc", numerator, denominator)


def compute_elp(trace: EpisodeTrace) -> Metric:
    """Error localization precision over validated injected faults."""
    if trace.header.proposer != "faulty":
        raise MissingLabels(
            "trace was not produced with fault injection; no ground-truth labels"
        )
    numerator = denominator = 0
    for record in trace.cycles:
        if record.fault_label is None:
            continue
        decision = record.decision or {}
        if decision.get("verdict") == "terminate":
            continue  # the loop exited before this proposal reached the checks
        denominator += 1
        expected = FAULT_RULE_MAP.get(record.fault_label, frozenset())
        cited = set(decision.get("rule_ids", []))
        if decision.get("verdict") == "rejected" and cited & expected:
            numerator += 1
    return Metric("elp", numerator, denominator)


def compute_metrics(trace: EpisodeTrace) -> dict[str, Metric]:
    """All metrics computable for this trace; ELP only for fault-injected runs."""
    metrics = {"spa": compute_spa(trace), "tc": compute_tc(trace)}
    if trace.header.proposer == "faulty":
        metrics["elp"] = compute_elp(trace)
    return metrics


def aggregate_metrics(per_episode: list[dict[str, Metric]]) -> dict[str, Metric]:
    """Micro-average: sum numerators and denominators across episodes."""
    totals: dict[str, list[int]] = {}
    for metrics in per_episode:
        for name, metric in metrics.items():
            bucket = totals.setdefault(name, [0, 0])
            bucket[0] += metric.numerator
            bucket[1] += metric.denominator
    return {name: Metric(name, num, den) for name, (num, den) in sorted(totals.items())}
