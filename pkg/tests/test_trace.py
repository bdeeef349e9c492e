"""Trace format, replay, justification chains, and the three metrics."""
from __future__ import annotations

import pytest

from cogloop.cognition import FaultConfig
from cogloop.loop import run_episode
from cogloop.memory import NOT_FOUND
from cogloop.trace import (
    EpisodeTrace,
    GapReport,
    JustificationChain,
    Metric,
    MissingLabels,
    ParseError,
    TraceHeader,
    UnknownAction,
    aggregate_metrics,
    compute_elp,
    compute_metrics,
    compute_spa,
    compute_tc,
    iter_chains,
    reconstruct_chain,
)


@pytest.fixture
def clean_trace(two_city) -> EpisodeTrace:
    return run_episode(two_city.episode_config(seed=1)).trace


def reparse(trace: EpisodeTrace) -> EpisodeTrace:
    """Independent mutable copy via the wire format."""
    return EpisodeTrace.loads(trace.dumps())


def cycle_of(trace: EpisodeTrace, tool: str):
    for record in trace.cycles:
        if record.invocation and record.invocation.get("tool") == tool:
            return record
    raise AssertionError(f"no invocation of {tool}")


# ------------------------------------------------------------- serialization
def test_round_trip_is_byte_stable(clean_trace, tmp_path):
    text = clean_trace.dumps()
    assert EpisodeTrace.loads(text).dumps() == text
    path = tmp_path / "episode.jsonl"
    clean_trace.dump(path)
    again = EpisodeTrace.load(path)
    assert again.header == clean_trace.header
    assert len(again.cycles) == len(clean_trace.cycles)


def test_header_round_trip():
    header = TraceHeader(config_digest="d", scenario="s", seed=7, baseline=True,
                         proposer="scripted", ruleset_version="v", max_cycles=9)
    assert TraceHeader.from_dict(header.to_dict()) == header


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("not json\n", "not valid JSON"),
        ('{"type": "mystery"}\n', "unknown record type"),
        ('{"type": "cycle", "cycle": 1}\n', "no header"),
        ('{"type": "header", "scenario": "x"}\n', "missing field"),
    ],
)
def test_malformed_traces_rejected(text, fragment):
    with pytest.raises(ParseError, match=fragment):
        EpisodeTrace.loads(text)


# ------------------------------------------------------------------- replay
def test_snapshot_before_replays_deltas_in_cycle_order(clean_trace):
    before_first = clean_trace.snapshot_before(1)
    assert before_first.resolve("goal.choose_colder.rule")
    assert before_first.resolve("obs.Seoul.temp_f") is NOT_FOUND
    before_second = clean_trace.snapshot_before(2)
    assert before_second.resolve("obs.Seoul.temp_f") == 51.8
    assert before_second.resolve("obs.Jeju.temp_f") is NOT_FOUND
    before_third = clean_trace.snapshot_before(3)
    assert before_third.resolve("obs.Jeju.temp_f") == 60.8


def test_record_lookup(clean_trace):
    assert clean_trace.record_for(0).cycle == 0
    assert clean_trace.record_for(2).cycle == 2
    assert clean_trace.record_for(99) is None


# ------------------------------------------------------------------- chains
def test_clean_trace_chains_are_complete(clean_trace):
    chains = list(iter_chains(clean_trace))
    assert [type(c) for c in chains] == [JustificationChain] * 3
    tools = [c.call["name"] for c in chains]
    assert tools == ["get_weather", "get_weather", "book_flight"]
    book = chains[2]
    assert book.citations == [
        "obs.Seoul.temp_f < obs.Jeju.temp_f",
        "goal.choose_colder.rule",
    ]
    resolved = {key: value for key, value in book.resolved}
    assert resolved["obs.Seoul.temp_f"] == 51.8
    assert resolved["obs.Jeju.temp_f"] == 60.8
    assert book.entries and book.entries[0]["payload"]["confirmation"] == "ABC123"


def test_reconstruct_chain_by_action_reference(clean_trace):
    chain = reconstruct_chain(clean_trace, "act.book_flight")
    assert isinstance(chain, JustificationChain)
    assert chain.call == {"name": "book_flight", "arguments": {"location": "Seoul"}}
    versioned = reconstruct_chain(clean_trace, "act.book_flight@1")
    assert versioned.cycle == chain.cycle
    with pytest.raises(UnknownAction):
        reconstruct_chain(clean_trace, "act.make_chart")
    with pytest.raises(UnknownAction):
        reconstruct_chain(clean_trace, "act.book_flight@7")


def test_missing_proposal_breaks_chain(clean_trace):
    broken = reparse(clean_trace)
    cycle_of(broken, "book_flight").proposal = None
    gap = reconstruct_chain(broken, "act.book_flight")
    assert isinstance(gap, GapReport) and gap.missing_link == "proposal"


def test_unapproved_decision_breaks_chain(clean_trace):
    broken = reparse(clean_trace)
    cycle_of(broken, "book_flight").decision["verdict"] = "rejected"
    gap = reconstruct_chain(broken, "act.book_flight")
    assert isinstance(gap, GapReport) and gap.missing_link == "decision"


def test_decision_for_different_call_breaks_chain(clean_trace):
    broken = reparse(clean_trace)
    cycle_of(broken, "book_flight").decision["call"]["arguments"]["location"] = "Jeju"
    gap = reconstruct_chain(broken, "act.book_flight")
    assert isinstance(gap, GapReport)
    assert gap.missing_link == "decision" and "different call" in gap.detail


def test_approved_cycle_without_invocation_is_a_gap(clean_trace):
    broken = reparse(clean_trace)
    cycle_of(broken, "book_flight").invocation = None
    gaps = [c for c in iter_chains(broken) if isinstance(c, GapReport)]
    assert len(gaps) == 1 and gaps[0].missing_link == "invocation"
    assert "never logged" in gaps[0].detail


def test_execution_without_memory_entries_is_a_gap(clean_trace):
    broken = reparse(clean_trace)
    record = cycle_of(broken, "book_flight")
    record.memory_delta = [e for e in record.memory_delta if e["kind"] != "action"]
    gap = next(c for c in iter_chains(broken) if isinstance(c, GapReport))
    assert gap.missing_link == "memory_entries"


def test_unresolvable_citation_breaks_chain(clean_trace):
    broken = reparse(clean_trace)
    seoul_gather = cycle_of(broken, "get_weather")
    seoul_gather.memory_delta = []  # the observation the citation depends on
    gaps = [c for c in iter_chains(broken) if isinstance(c, GapReport)]
    citation_gaps = [g for g in gaps if g.missing_link == "citation"]
    assert citation_gaps and "obs.Seoul.temp_f does not resolve" in citation_gaps[0].detail


def test_unsupported_citation_breaks_chain(clean_trace):
    broken = reparse(clean_trace)
    seoul_gather = cycle_of(broken, "get_weather")
    for entry in seoul_gather.memory_delta:
        if entry["key"] == "obs.Seoul":
            entry["payload"]["temp_f"] = 70.0  # warmer than Jeju: claim now false
    gap = next(c for c in iter_chains(broken) if isinstance(c, GapReport))
    assert gap.missing_link == "citation" and "not supported by memory" in gap.detail


def test_unparseable_citation_breaks_chain(clean_trace):
    broken = reparse(clean_trace)
    cycle_of(broken, "book_flight").proposal["citations"] = ["<= obs.Seoul.temp_f"]
    gap = reconstruct_chain(broken, "act.book_flight")
    assert isinstance(gap, GapReport)
    assert gap.missing_link == "citation" and "unparseable" in gap.detail


def test_idempotent_invocation_needs_no_fresh_entries(clean_trace):
    mutated = reparse(clean_trace)
    jeju = mutated.cycles[2]
    assert jeju.invocation["args"]["location"] == "Jeju"
    jeju.memory_delta = []
    jeju.invocation["idempotency_hit"] = True
    chains = list(iter_chains(mutated))
    assert isinstance(chains[1], JustificationChain)  # cached repeat still justified
    assert isinstance(chains[2], GapReport)  # but the booking cited the lost fact


# ------------------------------------------------------------------- metrics
def test_clean_trace_metrics_perfect(clean_trace):
    metrics = compute_metrics(clean_trace)
    assert set(metrics) == {"spa", "tc"}
    assert metrics["spa"].ratio == 1.0 and metrics["spa"].denominator > 0
    assert metrics["tc"].ratio == 1.0 and metrics["tc"].denominator == 3


def test_spa_only_counts_previously_persisted_reads(clean_trace):
    spa = compute_spa(clean_trace)
    # Gather-phase reads of not-yet-observed facts must not dilute the score.
    all_consumptions = sum(len(r.consumptions) for r in clean_trace.cycles)
    assert 0 < spa.denominator < all_consumptions


def test_spa_detects_stale_consumption(clean_trace):
    corrupted = reparse(clean_trace)
    book = cycle_of(corrupted, "book_flight")
    for pair in book.consumptions:
        if pair[0] == "obs.Seoul.temp_f":
            pair[1] = 99.9  # claims to have read a value memory never held
    baseline = compute_spa(clean_trace)
    corrupt = compute_spa(corrupted)
    assert corrupt.denominator == baseline.denominator
    assert corrupt.numerator == baseline.numerator - 1


def test_tc_drops_when_a_chain_breaks(clean_trace):
    broken = reparse(clean_trace)
    cycle_of(broken, "book_flight").proposal = None
    tc = compute_tc(broken)
    assert tc.numerator == 2 and tc.denominator == 3


def test_elp_requires_fault_labels(clean_trace):
    with pytest.raises(MissingLabels):
        compute_elp(clean_trace)


def test_elp_credits_matching_rule_citations(two_city):
    faults = FaultConfig(seed=3, p_missing_arg=0.5)
    result = run_episode(two_city.episode_config(seed=4, faults=faults))
    metrics = compute_metrics(result.trace)
    assert "elp" in metrics
    elp = metrics["elp"]
    assert elp.denominator > 0 and elp.ratio == 1.0

    corrupted = reparse(result.trace)
    labeled = next(r for r in corrupted.cycles if r.fault_label)
    labeled.decision["rule_ids"] = ["R-SEQ"]  # localized to the wrong rule
    worse = compute_elp(corrupted)
    assert worse.numerator == elp.numerator - 1
    assert worse.denominator == elp.denominator


def test_elp_accepts_either_premature_action_rule(two_city):
    faults = FaultConfig(seed=2, p_premature_action=1.0)
    result = run_episode(two_city.episode_config(seed=1, faults=faults, max_cycles=4))
    elp = compute_elp(result.trace)
    assert elp.denominator > 0 and elp.ratio == 1.0


def test_elp_excludes_budget_terminated_cycles(two_city):
    faults = FaultConfig(seed=1, p_missing_arg=1.0)
    result = run_episode(two_city.episode_config(seed=1, faults=faults, max_cycles=3))
    labeled = [r for r in result.trace.cycles if r.fault_label]
    assert labeled[-1].decision["verdict"] == "terminate"
    elp = compute_elp(result.trace)
    assert elp.denominator == len(labeled) - 1
    assert elp.ratio == 1.0


def test_metric_rendering_and_undefined_ratio():
    assert Metric("spa", 2, 3).render() == "0.667"
    assert Metric("spa", 3, 3).render() == "1.000"
    empty = Metric("elp", 0, 0)
    assert empty.ratio is None and empty.render() == "undefined"
    assert empty.to_dict() == {"numerator": 0, "denominator": 0, "ratio": None}


def test_metrics_undefined_on_empty_trace():
    header = TraceHeader(config_digest="d", scenario="s", seed=1, baseline=False,
                         proposer="faulty", ruleset_version="v", max_cycles=1)
    empty = EpisodeTrace(header=header, cycles=[])
    metrics = compute_metrics(empty)
    assert all(m.ratio is None for m in metrics.values())


def test_aggregate_is_micro_average():
    episodes = [
        {"spa": Metric("spa", 1, 2)},
        {"spa": Metric("spa", 3, 4), "elp": Metric("elp", 2, 3)},
        {"spa": Metric("spa", 0, 0)},
    ]
    combined = aggregate_metrics(episodes)
    assert combined["spa"].numerator == 4 and combined["spa"].denominator == 6
    assert combined["spa"].ratio == pytest.approx(4 / 6)
    assert combined["elp"].numerator == 2 and combined["elp"].denominator == 3
    assert aggregate_metrics([]) == {}
