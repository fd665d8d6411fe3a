"""Episode traces and their line-delimited interchange format.

A trace stream is UTF-8 text: one JSON object per line.  The first line is
the header; every following line is one step.  Canonical form uses compact
separators and this exact key order:

header  {"trace_id":..., "scenario":..., "config_hash":..., "seed":...,
         "terminated_reason":...}
step    {"t":..., "state":..., "attacker_action":..., "defender_action":...,
         "observation":[...], "reward":..., "belief_after":[...]}

``seed`` is null for traces that were produced outside the simulator;
``belief_after`` is null when the trace has not been filtered.  Numbers use
Python's shortest round-trip decimal form, so parse -> serialize is the
identity on canonical streams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import IngestError
from .model import Observation

TERMINATED_REASONS = ("horizon", "terminal_state")

_HEADER_FIELDS = ("trace_id", "scenario", "config_hash", "seed", "terminated_reason")
_STEP_FIELDS = ("t", "state", "attacker_action", "defender_action",
                "observation", "reward", "belief_after")


@dataclass
class StepRecord:
    """One step of an episode, ground truth included (emulation-side logs
    carry the hidden state and the attacker action)."""

    t: int
    state: str
    attacker_action: str
    defender_action: str
    observation: Observation
    reward: float
    belief_after: list[float] | None = None


@dataclass
class EpisodeTrace:
    trace_id: str
    scenario: str
    config_hash: str
    seed: int | None
    steps: list[StepRecord] = field(default_factory=list)
    terminated_reason: str = "horizon"

    @property
    def total_reward(self) -> float:
        return sum(s.reward for s in self.steps)


def _canonical(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def trace_to_lines(trace: EpisodeTrace) -> list[str]:
    """Serialize to canonical interchange lines (no trailing newlines)."""
    lines = [_canonical({
        "trace_id": trace.trace_id,
        "scenario": trace.scenario,
        "config_hash": trace.config_hash,
        "seed": trace.seed,
        "terminated_reason": trace.terminated_reason,
    })]
    for step in trace.steps:
        lines.append(_canonical({
            "t": step.t,
            "state": step.state,
            "attacker_action": step.attacker_action,
            "defender_action": step.defender_action,
            "observation": list(step.observation.bins),
            "reward": float(step.reward),
            "belief_after": None if step.belief_after is None
            else [float(x) for x in step.belief_after],
        }))
    return lines


def trace_to_text(trace: EpisodeTrace) -> str:
    return "\n".join(trace_to_lines(trace)) + "\n"


def _parse_json_line(line: str, lineno: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise IngestError(f"line {lineno}: not valid JSON ({e.msg})", lineno)
    if not isinstance(obj, dict):
        raise IngestError(f"line {lineno}: expected a JSON object", lineno)
    return obj


def _require_fields(obj: dict, fields: tuple[str, ...], lineno: int, kind: str) -> None:
    missing = [f for f in fields if f not in obj]
    extra = [k for k in obj if k not in fields]
    if missing:
        raise IngestError(f"line {lineno}: {kind} record missing field(s) {missing}", lineno)
    if extra:
        raise IngestError(f"line {lineno}: {kind} record has unknown field(s) {extra}", lineno)


def _parse_header(obj: dict, lineno: int) -> EpisodeTrace:
    _require_fields(obj, _HEADER_FIELDS, lineno, "header")
    if not isinstance(obj["trace_id"], str) or not obj["trace_id"]:
        raise IngestError(f"line {lineno}: trace_id must be a non-empty string", lineno)
    for key in ("scenario", "config_hash"):
        if not isinstance(obj[key], str):
            raise IngestError(f"line {lineno}: {key} must be a string", lineno)
    seed = obj["seed"]
    if seed is not None:
        if not isinstance(seed, int) or isinstance(seed, bool) or not (0 <= seed < 2 ** 64):
            raise IngestError(
                f"line {lineno}: seed must be null or an unsigned 64-bit integer", lineno)
    if obj["terminated_reason"] not in TERMINATED_REASONS:
        raise IngestError(
            f"line {lineno}: terminated_reason must be one of {TERMINATED_REASONS}", lineno)
    return EpisodeTrace(
        trace_id=obj["trace_id"], scenario=obj["scenario"],
        config_hash=obj["config_hash"], seed=seed,
        terminated_reason=obj["terminated_reason"])


def _parse_step(obj: dict, lineno: int, expected_t: int) -> StepRecord:
    _require_fields(obj, _STEP_FIELDS, lineno, "step")
    t = obj["t"]
    if not isinstance(t, int) or isinstance(t, bool):
        raise IngestError(f"line {lineno}: t must be an integer", lineno)
    if t != expected_t:
        raise IngestError(
            f"line {lineno}: t must increase by 1 (expected {expected_t}, got {t})", lineno)
    for key in ("state", "attacker_action", "defender_action"):
        if not isinstance(obj[key], str) or not obj[key]:
            raise IngestError(f"line {lineno}: {key} must be a non-empty string", lineno)
    bins = obj["observation"]
    if (not isinstance(bins, list) or not bins
            or any(not isinstance(b, int) or isinstance(b, bool) or b < 0 for b in bins)):
        raise IngestError(
            f"line {lineno}: observation must be a non-empty list of bin indices", lineno)
    reward = obj["reward"]
    if isinstance(reward, bool) or not isinstance(reward, (int, float)) \
            or not math.isfinite(reward):
        raise IngestError(f"line {lineno}: reward must be a finite number", lineno)
    belief = obj["belief_after"]
    if belief is not None:
        if (not isinstance(belief, list) or not belief
                or any(isinstance(x, bool) or not isinstance(x, (int, float))
                       or not math.isfinite(x) for x in belief)):
            raise IngestError(
                f"line {lineno}: belief_after must be null or a list of finite numbers",
                lineno)
        belief = [float(x) for x in belief]
    return StepRecord(
        t=t, state=obj["state"], attacker_action=obj["attacker_action"],
        defender_action=obj["defender_action"], observation=Observation(tuple(bins)),
        reward=float(reward), belief_after=belief)


def lines_to_trace(lines) -> EpisodeTrace:
    """Parse an interchange stream (any iterable of lines).

    Raises :class:`IngestError` naming the offending 1-based line on any
    format violation.
    """
    trace: EpisodeTrace | None = None
    obs_width: int | None = None
    lineno = 0
    for raw in lines:
        lineno += 1
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            raise IngestError(f"line {lineno}: blank line inside trace stream", lineno)
        obj = _parse_json_line(line, lineno)
        if trace is None:
            trace = _parse_header(obj, lineno)
            continue
        step = _parse_step(obj, lineno, expected_t=len(trace.steps) + 1)
        if obs_width is None:
            obs_width = len(step.observation.bins)
        elif len(step.observation.bins) != obs_width:
            raise IngestError(
                f"line {lineno}: observation has {len(step.observation.bins)} entries, "
                f"previous steps had {obs_width}", lineno)
        trace.steps.append(step)
    if trace is None:
        raise IngestError("missing header: trace stream is empty", None)
    if not trace.steps:
        raise IngestError("trace stream has a header but no steps", None)
    return trace


def text_to_trace(text: str) -> EpisodeTrace:
    return lines_to_trace(text.splitlines())


def write_trace(trace: EpisodeTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(trace_to_text(trace))


def read_trace(path) -> EpisodeTrace:
    with open(path, "r", encoding="utf-8") as f:
        return lines_to_trace(f)
