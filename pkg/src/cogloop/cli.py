"""Command-line interface: run episodes, sweep the suite, inspect traces.

Exit codes: 0 for a completed run (or a clean trace), 1 for configuration
errors and unknown references, 2 for episodes that stop without satisfying
the goal, 3 when chain reconstruction finds a gap.
"""
from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Any

from .baseline import run_baseline_episode
from .cognition import FAULT_TYPES, FaultConfig
from .loop import ConfigError, EpisodeResult, EpisodeStatus, run_episode
from .scenario import Scenario, load_scenario, load_suite
from .trace import (
    EpisodeTrace,
    GapReport,
    Metric,
    MissingLabels,
    ParseError,
    UnknownAction,
    aggregate_metrics,
    compute_metrics,
    iter_chains,
    reconstruct_chain,
)
from .util import canonical_json

logger = logging.getLogger(__name__)

METRIC_LABELS = {
    "spa": "state persistence",
    "tc": "trace completeness",
    "elp": "error localization",
}
_FAULT_ALIASES = {
    "duplicates": "duplicate",
    "missing_args": "missing_arg",
    "uncited_claims": "uncited_claim",
    "premature_actions": "premature_action",
    "false_citations": "false_citation",
}


def parse_faults(spec: str | None, seed: int = 0) -> FaultConfig | None:
    """Parse ``type=prob,...`` (plural aliases and ``all=`` accepted)."""
    if not spec:
        return None
    config: dict[str, Any] = {"seed": seed}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, raw = part.partition("=")
        if not sep:
            raise ConfigError(f"fault spec {part!r} must look like type=probability")
        try:
            prob = float(raw)
        except ValueError:
            raise ConfigError(f"fault probability {raw!r} is not a number") from None
        if not 0.0 <= prob <= 1.0:
            raise ConfigError(f"fault probability {prob} outside [0, 1]")
        key = key.strip().lower()
        if key.startswith("p_"):
            key = key[2:]
        key = _FAULT_ALIASES.get(key, key)
        if key == "all":
            for fault_type in FAULT_TYPES:
                config[f"p_{fault_type}"] = prob
        elif key in FAULT_TYPES:
            config[f"p_{key}"] = prob
        else:
            raise ConfigError(
                f"unknown fault type {key!r} (known: {', '.join(FAULT_TYPES)})"
            )
    return FaultConfig.from_dict(config)


def parse_seeds(spec: str) -> list[int]:
    try:
        seeds = [int(part) for part in spec.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"seeds {spec!r} must be comma-separated integers") from None
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def render_table(columns: dict[str, dict[str, Metric]]) -> str:
    """Aligned metric table; undefined ratios render as n/a."""
    names = [n for n in ("spa", "tc", "elp") if any(n in col for col in columns.values())]
    header = f"{'metric':<20}" + "".join(f"{system:>12}" for system in columns)
    lines = [header]
    for name in names:
        row = f"{METRIC_LABELS[name]:<20}"
        for metrics in columns.values():
            metric = metrics.get(name)
            if metric is None:
                cell = "-"
            elif metric.ratio is None:
                cell = "n/a"
            else:
                cell = f"{metric.ratio:.3f}"
            row += f"{cell:>12}"
        lines.append(row)
    return "\n".join(lines)


def _metrics_json(columns: dict[str, dict[str, Metric]]) -> str:
    payload = {
        system: {name: metric.to_dict() for name, metric in metrics.items()}
        for system, metrics in columns.items()
    }
    return canonical_json(payload) + "\n"


def _baseline_params(args: argparse.Namespace, scenario: Scenario) -> tuple[int, float]:
    budget = args.baseline_budget if args.baseline_budget is not None else scenario.baseline_budget
    decay = args.baseline_decay if args.baseline_decay is not None else scenario.baseline_decay
    return budget, decay


def _print_status(label: str, result: EpisodeResult) -> None:
    print(
        f"{label}: {result.status.value} in {result.cycles_used}/{result.max_cycles} cycles"
    )


# ---------------------------------------------------------------- subcommands
def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else scenario.seeds[0]
    faults = parse_faults(args.faults)
    config = scenario.episode_config(seed, faults=faults, max_cycles=args.max_cycles)
    result = run_episode(config)
    print(f"scenario {scenario.name} seed {seed}")
    _print_status("governed", result)
    if args.verbose:
        for record in result.trace.cycles:
            for line in record.log_lines:
                print(f"  c{record.cycle} {line}")
    print(f"final: {result.final_response}")
    columns = {"governed": compute_metrics(result.trace)}

    baseline_result = None
    if args.compare:
        budget, decay = _baseline_params(args, scenario)
        baseline_result = run_baseline_episode(config, budget, decay)
        _print_status("baseline", baseline_result)
        columns["baseline"] = compute_metrics(baseline_result.trace)
    print(render_table(columns))

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{scenario.name}_s{seed}"
        result.trace.dump(out / f"{stem}_governed.jsonl")
        if baseline_result is not None:
            baseline_result.trace.dump(out / f"{stem}_baseline.jsonl")
        (out / f"{stem}_metrics.json").write_text(_metrics_json(columns), encoding="utf-8")
        print(f"wrote artifacts to {out}")
    return 0 if result.status is EpisodeStatus.COMPLETED else 2


def cmd_suite(args: argparse.Namespace) -> int:
    scenarios = load_suite(args.directory)
    faults = parse_faults(args.faults)
    seeds_override = parse_seeds(args.seeds) if args.seeds else None
    episodes: list[dict[str, Any]] = []
    per_system: dict[str, list[dict[str, Metric]]] = {"governed": []}
    statuses: dict[str, Counter] = {"governed": Counter()}
    if args.compare:
        per_system["baseline"] = []
        statuses["baseline"] = Counter()

    for scenario in scenarios:
        for seed in seeds_override or scenario.seeds:
            config = scenario.episode_config(seed, faults=faults, max_cycles=args.max_cycles)
            result = run_episode(config)
            metrics = compute_metrics(result.trace)
            per_system["governed"].append(metrics)
            statuses["governed"][result.status.value] += 1
            episodes.append(
                {
                    "scenario": scenario.name,
                    "seed": seed,
                    "system": "governed",
                    "status": result.status.value,
                    "cycles": result.cycles_used,
                    "metrics": {n: m.to_dict() for n, m in metrics.items()},
                }
            )
            if args.compare:
                budget, decay = _baseline_params(args, scenario)
                baseline_result = run_baseline_episode(config, budget, decay)
                baseline_metrics = compute_metrics(baseline_result.trace)
                per_system["baseline"].append(baseline_metrics)
                statuses["baseline"][baseline_result.status.value] += 1
                episodes.append(
                    {
                        "scenario": scenario.name,
                        "seed": seed,
                        "system": "baseline",
                        "status": baseline_result.status.value,
                        "cycles": baseline_result.cycles_used,
                        "metrics": {n: m.to_dict() for n, m in baseline_metrics.items()},
                    }
                )

    total = sum(statuses["governed"].values())
    print(f"suite: {len(scenarios)} scenarios, {total} episodes per system")
    columns = {system: aggregate_metrics(rows) for system, rows in per_system.items()}
    for system, counter in statuses.items():
        summary = ", ".join(f"{count} {status}" for status, count in sorted(counter.items()))
        print(f"{system}: {summary}")
    print(render_table(columns))

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "faults": args.faults,
            "aggregate": {
                system: {name: metric.to_dict() for name, metric in metrics.items()}
                for system, metrics in columns.items()
            },
            "episodes": episodes,
        }
        (out / "metrics.json").write_text(canonical_json(payload) + "\n", encoding="utf-8")
        print(f"wrote metrics to {out / 'metrics.json'}")
    return 0


def _print_chain(chain) -> None:
    print(f"chain {chain.action_ref} (cycle {chain.cycle}): complete")
    call = chain.call
    rendered_args = ", ".join(f"{k}={v!r}" for k, v in call["arguments"].items())
    print(f"  proposal:   {call['name']}({rendered_args})")
    print("  decision:   approved")
    outcome = chain.invocation.get("outcome", {})
    print(
        f"  invocation: ok={outcome.get('ok')} latency={chain.invocation.get('latency_ms')} ms"
    )
    for entry in chain.entries:
        print(f"  entry:      {entry['key']} v{entry['version']}")
    for citation in chain.citations:
        print(f"  citation:   {citation}")
    for key, value in chain.resolved:
        print(f"    resolved  {key} = {value!r}")


def cmd_trace(args: argparse.Namespace) -> int:
    trace = EpisodeTrace.load(args.trace_file)
    header = trace.header
    system = "baseline" if header.baseline else "governed"
    print(
        f"trace: scenario {header.scenario} seed {header.seed} system {system} "
        f"proposer {header.proposer} cycles {len(trace.cycles) - 1}"
    )
    if args.action:
        chain = reconstruct_chain(trace, args.action)
        if isinstance(chain, GapReport):
            print(
                f"GAP {chain.action_ref} (cycle {chain.cycle}) "
                f"[{chain.missing_link}]: {chain.detail}"
            )
            return 3
        _print_chain(chain)
        return 0

    gaps = 0
    for chain in iter_chains(trace):
        if isinstance(chain, GapReport):
            gaps += 1
            print(
                f"GAP {chain.action_ref} (cycle {chain.cycle}) "
                f"[{chain.missing_link}]: {chain.detail}"
            )
        else:
            print(
                f"chain {chain.action_ref}: complete "
                f"({len(chain.citations)} citations, {len(chain.entries)} entries)"
            )
    print(render_table({system: compute_metrics(trace)}))
    return 3 if gaps else 0


# --------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogloop",
        description="Deterministic governed agent loop: run scenarios, compare, inspect traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario episode")
    run_p.add_argument("scenario", help="path to a scenario JSON file")
    run_p.add_argument("--seed", type=int, help="episode seed (default: first scenario seed)")
    run_p.add_argument("--faults", help="inject faults, e.g. duplicate=0.3,missing_arg=0.1")
    run_p.add_argument("--max-cycles", type=int, dest="max_cycles", help="override cycle budget")
    run_p.add_argument("--compare", action="store_true", help="also run the bounded-context baseline")
    run_p.add_argument("--baseline-budget", type=int, dest="baseline_budget")
    run_p.add_argument("--baseline-decay", type=float, dest="baseline_decay")
    run_p.add_argument("--out", help="directory for trace and metric artifacts")
    run_p.add_argument("--verbose", action="store_true", help="print per-cycle log lines")
    run_p.set_defaults(func=cmd_run)

    suite_p = sub.add_parser("suite", help="run every scenario in a directory")
    suite_p.add_argument("directory", help="directory of scenario JSON files")
    suite_p.add_argument("--seeds", help="comma-separated seed override")
    suite_p.add_argument("--faults", help="inject faults, e.g. all=0.1")
    suite_p.add_argument("--max-cycles", type=int, dest="max_cycles")
    suite_p.add_argument("--compare", action="store_true")
    suite_p.add_argument("--baseline-budget", type=int, dest="baseline_budget")
    suite_p.add_argument("--baseline-decay", type=float, dest="baseline_decay")
    suite_p.add_argument("--out", help="directory for the aggregated metrics file")
    suite_p.set_defaults(func=cmd_suite)

    trace_p = sub.add_parser("trace", help="inspect a trace file")
    trace_p.add_argument("trace_file", help="path to a trace JSONL file")
    trace_p.add_argument("action", nargs="?", help="action reference, e.g. act.book_flight")
    trace_p.set_defaults(func=cmd_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (UnknownAction, MissingLabels) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
