"""Simulated tool runtime: registry, guarded execution, and invocation logging.

Execution never raises for tool problems — schema violations, unknown tools,
scheduled transient faults, and domain errors all come back as error-valued
results. A successful execution returns the normalized payload plus the
memory writes it wants staged; a failed one stages nothing, so a failing
handler can never leave partial state behind.

The world is a deterministic fixture: weather readings, an outbox, a booking
ledger, and a fault schedule keyed by (tool, invocation ordinal). Confirmation
tokens, message ids, and pseudo-latencies all derive from the world seed.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .memory import EntryKind
from .util import canonical_json

logger = logging.getLogger(__name__)

PLACEHOLDER_VALUES = ("", "TBD")


class ErrorCode(str, Enum):
    SCHEMA_VIOLATION = "SchemaViolation"
    TOOL_UNAVAILABLE = "ToolUnavailable"
    TRANSIENT_FAILURE = "TransientFailure"
    DOMAIN_ERROR = "DomainError"


class DuplicateToolError(Exception):
    """Two tool specs registered under one name."""


class ToolFailure(Exception):
    """Raised inside handlers; converted to an error-valued result by execute."""

    def __init__(self, code: ErrorCode, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass(frozen=True)
class ToolCall:
    """One proposed invocation: tool name plus named arguments."""

    name: str
    arguments: dict[str, Any]

    def canonical(self) -> "ToolCall":
        return ToolCall(self.name, canon_args(self.arguments))

    def call_id(self) -> str:
        return f"{self.name}:{canonical_json(canon_args(self.arguments))}"

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "arguments": self.arguments}

    def describe(self) -> str:
        args = canon_args(self.arguments)
        return f"{self.name}({', '.join(f'{k}={v}' for k, v in args.items())})"


def canon_args(arguments: dict[str, Any]) -> dict[str, Any]:
    """Canonical argument form: keys sorted recursively, strings trimmed."""

    def canon(value: Any) -> Any:
        if isinstance(value, dict):
            return {k: canon(value[k]) for k in sorted(value)}
        if isinstance(value, list):
            return [canon(v) for v in value]
        if isinstance(value, str):
            return value.strip()
        return value

    return {k: canon(arguments[k]) for k in sorted(arguments)}


@dataclass(frozen=True)
class ArgField:
    """One declared argument or output field with a semantic type."""

    name: str
    type: str  # "string" | "number" | "boolean" | "map_str_number"
    required: bool = True


@dataclass(frozen=True)
class StagedWrite:
    """A memory write a successful execution wants committed."""

    key: str
    kind: EntryKind
    payload: dict[str, Any]


@dataclass(frozen=True)
class ToolSpec:
    """Declared surface of one tool: schema, handler, and memory behavior."""

    name: str
    args: tuple[ArgField, ...]
    output: tuple[ArgField, ...]
    handler: Callable[[dict[str, Any], "WorldState"], dict[str, Any]]
    effect: bool = False  # True if the tool changes the world outside memory
    observes: Callable[[dict[str, Any]], str] | None = None  # obs key for sensors
    memory_requires: Callable[[dict[str, Any]], list[str]] | None = None
    confirmation_field: str | None = None


def _check_type(value: Any, type_name: str) -> bool:
    if type_name == "string":
        return isinstance(value, str)
    if type_name == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if type_name == "boolean":
        return isinstance(value, bool)
    if type_name == "map_str_number":
        return (
            isinstance(value, dict)
            and bool(value)
            and all(
                isinstance(k, str) and isinstance(v, (int, float)) and not isinstance(v, bool)
                for k, v in value.items()
            )
        )
    return False


def argument_problems(spec: ToolSpec, arguments: dict[str, Any]) -> list[str]:
    """Schema problems for a call: missing/placeholder/mistyped/unknown args.

    Shared with the validation layer so 'argument completeness' means the same
    thing before approval and at execution time.
    """
    problems: list[str] = []
    declared = {f.name: f for f in spec.args}
    for fld in spec.args:
        if fld.name not in arguments:
            if fld.required:
                problems.append(f"missing required argument '{fld.name}'")
            continue
        value = arguments[fld.name]
        if isinstance(value, str) and value.strip() in PLACEHOLDER_VALUES:
            problems.append(f"argument '{fld.name}' is a placeholder ({value!r})")
        elif value is None:
            problems.append(f"argument '{fld.name}' is a placeholder (None)")
        elif not _check_type(value, fld.type):
            problems.append(f"argument '{fld.name}' must be {fld.type}, got {value!r}")
    for name in arguments:
        if name not in declared:
            problems.append(f"unknown argument '{name}'")
    return problems


@dataclass
class WorldState:
    """Deterministic environment fixture shared by all tools in an episode."""

    weather: dict[tuple[str, str], dict[str, Any]] = field(default_factory=dict)
    fault_schedule: dict[tuple[str, int], ErrorCode] = field(default_factory=dict)
    seed: int = 0
    outbox: list[dict[str, Any]] = field(default_factory=list)
    bookings: list[dict[str, Any]] = field(default_factory=list)
    charts: list[dict[str, Any]] = field(default_factory=list)
    attempt_counts: dict[str, int] = field(default_factory=dict)  # per-tool ordinals
    handler_calls: dict[str, int] = field(default_factory=dict)  # real handler runs

    @classmethod
    def from_dict(cls, config: dict[str, Any]) -> "WorldState":
        weather = {}
        for row in config.get("weather", []):
            weather[(row["location"], row["date"])] = {
                "temp_f": float(row["temp_f"]),
                "precipitation": bool(row["precipitation"]),
            }
        schedule = {}
        for row in config.get("fault_schedule", []):
            schedule[(row["tool"], int(row["ordinal"]))] = ErrorCode(row["code"])
        return cls(weather=weather, fault_schedule=schedule, seed=int(config.get("seed", 0)))

    def next_ordinal(self, tool: str) -> int:
        self.attempt_counts[tool] = self.attempt_counts.get(tool, 0) + 1
        return self.attempt_counts[tool]


_TOKEN_SPACE = 26**3 * 10**3
_TOKEN_STRIDE = 1_000_003  # odd, coprime to the token space


def confirmation_token(seed: int, ordinal: int) -> str:
    """Deterministic 3-letter + 3-digit booking reference for the n-th booking."""
    value = (seed * _TOKEN_STRIDE + ordinal) % _TOKEN_SPACE
    letters_value, digits_value = divmod(value, 1000)
    letters = ""
    for _ in range(3):
        letters_value, remainder = divmod(letters_value, 26)
        letters = chr(ord("A") + remainder) + letters
    return letters + f"{digits_value:03d}"


# ------------------------------------------------------------------ handlers
def _get_weather(args: dict[str, Any], world: WorldState) -> dict[str, Any]:
    key = (args["location"], args["date"])
    if key not in world.weather:
        raise ToolFailure(
            ErrorCode.DOMAIN_ERROR, f"no forecast for {args['location']} on {args['date']}"
        )
    reading = world.weather[key]
    return {
        "location": args["location"],
        "temp_f": float(reading["temp_f"]),
        "precipitation": bool(reading["precipitation"]),
    }


def _compare_temperatures(args: dict[str, Any], world: WorldState) -> dict[str, Any]:
    temps = args["temps"]
    if len(temps) < 2:
        raise ToolFailure(ErrorCode.DOMAIN_ERROR, "need at least two named temperatures")
    # Coldest wins; ties break toward the lexicographically smaller location.
    colder = min(temps.items(), key=lambda kv: (kv[1], kv[0]))[0]
    delta = round(max(temps.values()) - min(temps.values()), 6)
    return {"colder": colder, "delta_f": float(delta)}


def _send_email(args: dict[str, Any], world: WorldState) -> dict[str, Any]:
    world.outbox.append(
        {"to": args["to"], "subject": args["subject"], "body": args.get("body", "")}
    )
    return {"message_id": f"MSG-{len(world.outbox):04d}"}


def _book_flight(args: dict[str, Any], world: WorldState) -> dict[str, Any]:
    token = confirmation_token(world.seed, len(world.bookings) + 1)
    world.bookings.append({"location": args["location"], "confirmation": token})
    return {"confirmation": token}


def _make_chart(args: dict[str, Any], world: WorldState) -> dict[str, Any]:
    world.charts.append({"location": args["location"]})
    return {"artifact_id": f"CHART-{len(world.charts):04d}"}


GET_WEATHER = ToolSpec(
    name="get_weather",
    args=(ArgField("location", "string"), ArgField("date", "string")),
    output=(
        ArgField("location", "string"),
        ArgField("temp_f", "number"),
        ArgField("precipitation", "boolean"),
    ),
    handler=_get_weather,
    observes=lambda args: f"obs.{args['location']}",
)

COMPARE_TEMPERATURES = ToolSpec(
    name="compare_temperatures",
    args=(ArgField("temps", "map_str_number"),),
    output=(ArgField("colder", "string"), ArgField("delta_f", "number")),
    handler=_compare_temperatures,
    observes=lambda args: "obs.comparison",
    memory_requires=lambda args: [f"obs.{city}.temp_f" for city in sorted(args["temps"])],
)

SEND_EMAIL = ToolSpec(
    name="send_email",
    args=(
        ArgField("to", "string"),
        ArgField("subject", "string"),
        ArgField("body", "string", required=False),
    ),
    output=(ArgField("message_id", "string"),),
    handler=_send_email,
    effect=True,
    confirmation_field="message_id",
)

BOOK_FLIGHT = ToolSpec(
    name="book_flight",
    args=(ArgField("location", "string"),),
    output=(ArgField("confirmation", "string"),),
    handler=_book_flight,
    effect=True,
    confirmation_field="confirmation",
)

MAKE_CHART = ToolSpec(
    name="make_chart",
    args=(ArgField("location", "string"),),
    output=(ArgField("artifact_id", "string"),),
    handler=_make_chart,
    effect=True,
    confirmation_field="artifact_id",
)

BUILTIN_SPECS = (GET_WEATHER, COMPARE_TEMPERATURES, SEND_EMAIL, BOOK_FLIGHT)
EXTRA_SPECS = {MAKE_CHART.name: MAKE_CHART}


class ToolRegistry:
    """Name -> ToolSpec map; duplicate registration is an error."""

    def __init__(self) -> None:
        self._specs: dict[str, ToolSpec] = {}

    def register(self, spec: ToolSpec) -> None:
        if spec.name in self._specs:
            raise DuplicateToolError(f"tool {spec.name!r} already registered")
        self._specs[spec.name] = spec

    def get(self, name: str) -> ToolSpec | None:
        return self._specs.get(name)

    def names(self) -> list[str]:
        return sorted(self._specs)


def builtin_registry(extra_tools: list[str] | None = None) -> ToolRegistry:
    registry = ToolRegistry()
    for spec in BUILTIN_SPECS:
        registry.register(spec)
    for name in extra_tools or []:
        if name in EXTRA_SPECS:
            registry.register(EXTRA_SPECS[name])
        elif registry.get(name) is None:
            raise KeyError(f"unknown extra tool {name!r}")
    return registry


@dataclass(frozen=True)
class ToolResult:
    """Outcome of one execute call; errors are values, never exceptions."""

    tool: str
    args: dict[str, Any]
    ok: bool
    payload: dict[str, Any] | None
    error_code: ErrorCode | None
    error_message: str | None
    latency_ms: float
    idempotency_hit: bool

    def outcome_dict(self) -> dict[str, Any]:
        if self.ok:
            return {"ok": True, "payload": self.payload}
        return {"ok": False, "code": self.error_code.value, "message": self.error_message}


class Runtime:
    """Executes calls against the world with logging and result caching.

    A repeated call with identical canonical arguments that previously
    succeeded returns the cached payload without re-invoking the handler (and
    stages no new writes); every execute call, cached or not, appends one
    invocation log record.
    """

    def __init__(self, registry: ToolRegistry, world: WorldState):
        self.registry = registry
        self.world = world
        self.invocation_log: list[dict[str, Any]] = []
        self._cache: dict[str, dict[str, Any]] = {}

    def _latency(self, cached: bool) -> float:
        rng = random.Random(f"latency:{self.world.seed}:{len(self.invocation_log) + 1}")
        return round(rng.uniform(0.1, 0.9) if cached else rng.uniform(2.0, 48.0), 1)

    def _record(self, cycle: int, result: ToolResult) -> ToolResult:
        self.invocation_log.append(
            {
                "cycle": cycle,
                "tool": result.tool,
                "args": result.args,
                "outcome": result.outcome_dict(),
                "latency_ms": result.latency_ms,
                "idempotency_hit": result.idempotency_hit,
            }
        )
        return result

    def _error(self, cycle: int, call: ToolCall, code: ErrorCode, message: str) -> ToolResult:
        logger.debug("tool %s failed: %s (%s)", call.name, code.value, message)
        result = ToolResult(
            tool=call.name,
            args=canon_args(call.arguments),
            ok=False,
            payload=None,
            error_code=code,
            error_message=message,
            latency_ms=self._latency(cached=False),
            idempotency_hit=False,
        )
        return self._record(cycle, result)

    def execute(self, call: ToolCall, cycle: int = 0) -> tuple[ToolResult, list[StagedWrite]]:
        """Validate, invoke, normalize, and describe the memory writes to stage."""
        spec = self.registry.get(call.name)
        args = canon_args(call.arguments)
        if spec is None:
            return self._error(cycle, call, ErrorCode.TOOL_UNAVAILABLE, f"no tool named {call.name!r}"), []
        problems = argument_problems(spec, args)
        if problems:
            return self._error(cycle, call, ErrorCode.SCHEMA_VIOLATION, "; ".join(problems)), []

        call_id = call.call_id()
        if call_id in self._cache:
            result = ToolResult(
                tool=call.name,
                args=args,
                ok=True,
                payload=dict(self._cache[call_id]),
                error_code=None,
                error_message=None,
                latency_ms=self._latency(cached=True),
                idempotency_hit=True,
            )
            return self._record(cycle, result), []

        ordinal = self.world.next_ordinal(call.name)
        scheduled = self.world.fault_schedule.get((call.name, ordinal))
        if scheduled is not None:
            return self._error(cycle, call, scheduled, f"scheduled fault at ordinal {ordinal}"), []

        self.world.handler_calls[call.name] = self.world.handler_calls.get(call.name, 0) + 1
        try:
            payload = spec.handler(args, self.world)
        except ToolFailure as failure:
            return self._error(cycle, call, failure.code, failure.message), []

        normalized = self._normalize_output(spec, payload)
        if normalized is None:
            return (
                self._error(
                    cycle, call, ErrorCode.SCHEMA_VIOLATION, f"tool output does not match schema: {payload!r}"
                ),
                [],
            )

        staged = self._staged_writes(spec, args, normalized)
        self._cache[call_id] = dict(normalized)
        result = ToolResult(
            tool=call.name,
            args=args,
            ok=True,
            payload=normalized,
            error_code=None,
            error_message=None,
            latency_ms=self._latency(cached=False),
            idempotency_hit=False,
        )
        return self._record(cycle, result), staged

    @staticmethod
    def _normalize_output(spec: ToolSpec, payload: dict[str, Any]) -> dict[str, Any] | None:
        if not isinstance(payload, dict):
            return None
        normalized = dict(payload)
        for fld in spec.output:
            if fld.name not in normalized:
                return None
            value = normalized[fld.name]
            if fld.type == "number" and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
                normalized[fld.name] = value
            if not _check_type(value, fld.type):
                return None
        return normalized

    @staticmethod
    def _staged_writes(
        spec: ToolSpec, args: dict[str, Any], payload: dict[str, Any]
    ) -> list[StagedWrite]:
        staged: list[StagedWrite] = []
        if spec.observes is not None:
            staged.append(StagedWrite(spec.observes(args), EntryKind.OBSERVATION, dict(payload)))
        if spec.effect:
            record: dict[str, Any] = {"name": spec.name, "args": args, "status": "executed"}
            if spec.confirmation_field and spec.confirmation_field in payload:
                record["confirmation"] = payload[spec.confirmation_field]
            staged.append(StagedWrite(f"act.{spec.name}", EntryKind.ACTION, record))
        return staged
