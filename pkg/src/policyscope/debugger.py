"""Stepping sessions over POMDP episodes, in the style of a software
debugger: step, continue, halt, reverse, breakpoints, and side-effect-free
what-if probes.

A session walks either a live simulation or a recorded trace and materializes
one :class:`Frame` per position.  Frames and generator snapshots are stored
as the episode advances, so reversing is pure history traversal and resuming
forward replays the stored frames bit-for-bit; divergence is only possible by
forking, which copies the visited prefix into a new session with a fresh
seed.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field

import numpy as np

from .errors import FinishedError, ImpossibleObservationError, \
    IncompatibilityError, NotFoundError, PreconditionError, RangeError
from .model import Belief, Observation, PomdpModel, belief_update, \
    expected_observation_rows, initial_belief, predict_belief
from .policies import ActionDistribution, Policy, PolicyInput
from .rng import Rng
from .simulate import environment_step
from .trace import EpisodeTrace


@dataclass(frozen=True)
class HaltReason:
    kind: str  # user | breakpoint | terminal | horizon | impossible_observation
    breakpoint_id: int | None = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.breakpoint_id is not None:
            out["breakpoint_id"] = self.breakpoint_id
        return out


@dataclass
class Frame:
    """Inspection snapshot at one episode position.

    ``action_distribution`` is the distribution the policy emitted when the
    action recorded on this frame was chosen; on frame 0 it previews the
    upcoming first step.  ``observation_rows`` are the per-metric bin
    distributions the model expects under the frame's belief, for display
    next to the realized observation.
    """

    t: int
    belief: Belief
    action_distribution: ActionDistribution | None
    defender_action: str | None
    observation: Observation | None
    observation_rows: list[list[float]]
    attacker_action: str | None
    hidden_state: str | None
    reward: float
    cumulative_reward: float
    halt_reason: HaltReason | None = None


# -- breakpoint predicates -----------------------------------------------------

@dataclass(frozen=True)
class TimeEquals:
    t: int


@dataclass(frozen=True)
class DefenderActionIs:
    action: str


@dataclass(frozen=True)
class BeliefThreshold:
    state: str
    op: str  # ">=" or "<="
    value: float


@dataclass(frozen=True)
class MetricThreshold:
    metric: str
    op: str  # ">=" or "<="
    bin: int


@dataclass(frozen=True)
class Conjunction:
    terms: tuple


Predicate = TimeEquals | DefenderActionIs | BeliefThreshold | MetricThreshold | Conjunction

_OPS = {">=", "<="}


def validate_predicate(pred: Predicate, model: PomdpModel) -> None:
    if isinstance(pred, TimeEquals):
        if pred.t < 0:
            raise RangeError(f"breakpoint time must be >= 0, got {pred.t}")
    elif isinstance(pred, DefenderActionIs):
        model.defender_action_index(pred.action)
    elif isinstance(pred, BeliefThreshold):
        model.state_index(pred.state)
        if pred.op not in _OPS:
            raise RangeError(f"bad comparison {pred.op!r}")
        if not (0.0 <= pred.value <= 1.0):
            raise RangeError(f"belief threshold must be in [0, 1], got {pred.value}")
    elif isinstance(pred, MetricThreshold):
        m = model.metric_index(pred.metric)
        if pred.op not in _OPS:
            raise RangeError(f"bad comparison {pred.op!r}")
        if not (0 <= pred.bin < model.metrics[m].bins):
            raise RangeError(f"bin {pred.bin} out of range for metric {pred.metric!r}")
    elif isinstance(pred, Conjunction):
        if not pred.terms:
            raise RangeError("conjunction needs at least one term")
        for term in pred.terms:
            if isinstance(term, Conjunction):
                raise RangeError("conjunctions do not nest")
            validate_predicate(term, model)
    else:
        raise RangeError(f"unknown predicate {pred!r}")


def predicate_matches(pred: Predicate, frame: Frame, model: PomdpModel) -> bool:
    if isinstance(pred, TimeEquals):
        return frame.t == pred.t
    if isinstance(pred, DefenderActionIs):
        return frame.defender_action == pred.action
    if isinstance(pred, BeliefThreshold):
        mass = frame.belief[model.state_index(pred.state)]
        return mass >= pred.value if pred.op == ">=" else mass <= pred.value
    if isinstance(pred, MetricThreshold):
        if frame.observation is None:
            return False
        b = frame.observation.bins[model.metric_index(pred.metric)]
        return b >= pred.bin if pred.op == ">=" else b <= pred.bin
    if isinstance(pred, Conjunction):
        return all(predicate_matches(term, frame, model) for term in pred.terms)
    return False


def predicate_to_dict(pred: Predicate) -> dict:
    if isinstance(pred, TimeEquals):
        return {"kind": "time_equals", "t": pred.t}
    if isinstance(pred, DefenderActionIs):
        return {"kind": "defender_action_is", "action": pred.action}
    if isinstance(pred, BeliefThreshold):
        return {"kind": "belief_threshold", "state": pred.state, "op": pred.op,
                "value": pred.value}
    if isinstance(pred, MetricThreshold):
        return {"kind": "metric_threshold", "metric": pred.metric, "op": pred.op,
                "bin": pred.bin}
    if isinstance(pred, Conjunction):
        return {"kind": "and", "terms": [predicate_to_dict(t) for t in pred.terms]}
    raise RangeError(f"unknown predicate {pred!r}")


def predicate_from_dict(data: dict) -> Predicate:
    try:
        kind = data["kind"]
        if kind == "time_equals":
            return TimeEquals(int(data["t"]))
        if kind == "defender_action_is":
            return DefenderActionIs(str(data["action"]))
        if kind == "belief_threshold":
            return BeliefThreshold(str(data["state"]), str(data["op"]),
                                   float(data["value"]))
        if kind == "metric_threshold":
            return MetricThreshold(str(data["metric"]), str(data["op"]),
                                   int(data["bin"]))
        if kind == "and":
            return Conjunction(tuple(predicate_from_dict(t) for t in data["terms"]))
    except (KeyError, TypeError, ValueError) as e:
        raise RangeError(f"malformed breakpoint predicate: {e}") from None
    raise RangeError(f"unknown breakpoint kind {data.get('kind')!r}")


@dataclass
class Breakpoint:
    id: int
    predicate: Predicate

    def to_dict(self) -> dict:
        return {"id": self.id, "predicate": predicate_to_dict(self.predicate)}


# -- episode sources -----------------------------------------------------------

@dataclass
class SimulationSource:
    model: PomdpModel
    policy: Policy
    seed: int
    horizon: int | None = None

    @property
    def effective_horizon(self) -> int:
        return self.horizon if self.horizon is not None else self.model.horizon


@dataclass
class ReplaySource:
    trace: EpisodeTrace
    model: PomdpModel
    overlay_policy: Policy | None = None


Source = SimulationSource | ReplaySource


@dataclass
class WhatIfReport:
    """Immediate consequences of a probed action at the current frame,
    computed without touching the session."""

    action: str
    expected_reward: float
    predicted_belief: Belief
    observation_rows: list[list[float]]

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "expected_reward": self.expected_reward,
            "predicted_belief": self.predicted_belief.tolist(),
            "observation_rows": self.observation_rows,
        }


_UNBOUNDED = 1 << 31


class DebugSession:
    """One episode walker.  Not thread-safe: callers serialize commands per
    session (the HTTP layer queues them behind a per-session lock)."""

    def __init__(self, source: Source, mode: str = "manual",
                 autoplay_interval: float = 1.0, reveal_attacker: bool = True,
                 session_id: str | None = None):
        if mode not in ("manual", "autoplay"):
            raise RangeError(f"unknown session mode {mode!r}")
        if autoplay_interval <= 0:
            raise RangeError(f"autoplay interval must be > 0, got {autoplay_interval}")
        self.session_id = session_id or f"sess-{uuid.uuid4().hex[:12]}"
        self.source = source
        self.mode = mode
        self.autoplay_interval = autoplay_interval
        self.reveal_attacker = reveal_attacker
        self.status = "halted"
        self.cursor = 0
        self.breakpoints: list[Breakpoint] = []
        self._next_breakpoint_id = 1
        self._final_t: int | None = None

        model = self.model
        if isinstance(source, SimulationSource):
            source.policy.check_compatible(model)
            if source.horizon is not None and source.horizon < 1:
                raise RangeError(f"horizon override must be >= 1, got {source.horizon}")
            self._rng = Rng(source.seed)
            state = self._rng.categorical(model.initial_distribution)
            self._hidden_states = [state]
            self._rng_states = [self._rng.snapshot()]
        else:
            trace = source.trace
            if trace.scenario != model.scenario_name \
                    or trace.config_hash != model.config_hash:
                raise IncompatibilityError(
                    f"trace is from scenario ({trace.scenario}, {trace.config_hash}), "
                    f"model is ({model.scenario_name}, {model.config_hash})")
            if len(trace.steps) > model.horizon:
                raise IncompatibilityError(
                    f"trace has {len(trace.steps)} steps, model horizon is "
                    f"{model.horizon}")
            for step in trace.steps:
                model.defender_action_index(step.defender_action)
                model.attacker_action_index(step.attacker_action)
                model.state_index(step.state)
            if source.overlay_policy is not None:
                source.overlay_policy.check_compatible(model)

        belief = initial_belief(model)
        self.frames: list[Frame] = [Frame(
            t=0,
            belief=belief,
            action_distribution=self._policy_preview(belief, None, 1),
            defender_action=None,
            observation=None,
            observation_rows=self._rows(belief),
            attacker_action=None,
            hidden_state=None,
            reward=0.0,
            cumulative_reward=0.0,
        )]

    # -- helpers -----------------------------------------------------------------

    @property
    def model(self) -> PomdpModel:
        return self.source.model

    @property
    def current_frame(self) -> Frame:
        return self.frames[self.cursor]

    @property
    def _policy(self) -> Policy | None:
        if isinstance(self.source, SimulationSource):
            return self.source.policy
        return self.source.overlay_policy

    @property
    def _horizon(self) -> int:
        if isinstance(self.source, SimulationSource):
            return self.source.effective_horizon
        return self.model.horizon

    def _rows(self, belief: Belief) -> list[list[float]]:
        return [[float(x) for x in row]
                for row in expected_observation_rows(self.model, belief.probs)]

    def _policy_preview(self, belief: Belief, obs: Observation | None,
                        t: int) -> ActionDistribution | None:
        policy = self._policy
        if policy is None:
            return None
        return policy.predict(PolicyInput(belief, obs, t / self._horizon))

    def _first_matching_breakpoint(self, frame: Frame) -> Breakpoint | None:
        for bp in self.breakpoints:
            if predicate_matches(bp.predicate, frame, self.model):
                return bp
        return None

    # -- frame generation ---------------------------------------------------------

    def _generate_next_frame(self) -> Frame:
        prev = self.frames[-1]
        t = len(self.frames)
        model = self.model
        if isinstance(self.source, SimulationSource):
            rng = Rng.restore(self._rng_states[-1])
            dist = self._policy_preview(prev.belief, prev.observation, t)
            action = rng.categorical(dist.probs)
            state, attacker, obs, reward = environment_step(
                model, self._hidden_states[-1], action, rng)
            belief = belief_update(model, prev.belief, action, obs)
            frame = Frame(
                t=t, belief=belief, action_distribution=dist,
                defender_action=model.defender_actions[action].name,
                observation=obs, observation_rows=self._rows(belief),
                attacker_action=model.attacker_actions[attacker],
                hidden_state=model.state_names[state],
                reward=reward, cumulative_reward=prev.cumulative_reward + reward,
            )
            if model.is_terminal(state):
                frame.halt_reason = HaltReason("terminal")
                self._final_t = t
            elif t == self._horizon:
                frame.halt_reason = HaltReason("horizon")
                self._final_t = t
            self.frames.append(frame)
            self._hidden_states.append(state)
            self._rng_states.append(rng.snapshot())
            return frame

        trace = self.source.trace
        record = trace.steps[t - 1]
        action = model.defender_action_index(record.defender_action)
        dist = self._policy_preview(prev.belief, prev.observation, t)
        belief = belief_update(model, prev.belief, action, record.observation)
        frame = Frame(
            t=t, belief=belief, action_distribution=dist,
            defender_action=record.defender_action,
            observation=record.observation, observation_rows=self._rows(belief),
            attacker_action=record.attacker_action,
            hidden_state=record.state,
            reward=record.reward,
            cumulative_reward=prev.cumulative_reward + record.reward,
        )
        if t == len(trace.steps):
            kind = "terminal" if trace.terminated_reason == "terminal_state" else "horizon"
            frame.halt_reason = HaltReason(kind)
            self._final_t = t
        self.frames.append(frame)
        return frame

    # -- commands -------------------------------------------------------------------

    def _require_steppable(self) -> None:
        if self.status == "finished":
            raise FinishedError("session has finished the episode")
        if self.status == "running":
            raise PreconditionError("session is running; halt it first")

    def step(self, n: int = 1) -> Frame:
        """Advance up to ``n`` positions, stopping early at a breakpoint, the
        end of the episode, or a model/trace disagreement.

        Positions already visited are replayed from stored history; new ones
        are generated.  Breakpoints are evaluated on every frame the cursor
        lands on, lowest id first.
        """
        self._require_steppable()
        if n < 1:
            raise RangeError(f"step count must be >= 1, got {n}")
        frame = self.current_frame
        for _ in range(n):
            if self.cursor < len(self.frames) - 1:
                self.cursor += 1
                frame = self.frames[self.cursor]
            else:
                try:
                    frame = self._generate_next_frame()
                except ImpossibleObservationError:
                    frame = self.current_frame
                    frame.halt_reason = HaltReason("impossible_observation")
                    self.status = "halted"
                    return frame
                self.cursor += 1
            if self._final_t is not None and frame.t == self._final_t:
                self.status = "finished"
                return frame
            bp = self._first_matching_breakpoint(frame)
            if bp is not None:
                frame.halt_reason = HaltReason("breakpoint", bp.id)
                self.status = "halted"
                return frame
            if frame.halt_reason is not None \
                    and frame.halt_reason.kind in ("breakpoint", "user"):
                frame.halt_reason = None  # passed through without stopping
        self.status = "halted"
        return frame

    def continue_run(self) -> Frame:
        """Step without bound: runs to the next breakpoint, the end of the
        episode, or an impossible observation."""
        self._require_steppable()
        return self.step(_UNBOUNDED)

    def begin_autoplay(self) -> None:
        """Mark an autoplay session as running; the owning server issues one
        step per tick until something halts it."""
        if self.mode != "autoplay":
            raise PreconditionError("session is not in autoplay mode")
        self._require_steppable()
        self.status = "running"

    def autoplay_tick(self) -> Frame:
        if self.status != "running":
            raise PreconditionError("session is not running")
        self.status = "halted"
        frame = self.step(1)
        if self.status == "halted" and frame.halt_reason is None:
            self.status = "running"
        return frame

    def halt(self) -> Frame:
        """Stop autoplay at the current frame."""
        if self.mode != "autoplay":
            raise PreconditionError("halt applies to autoplay sessions")
        if self.status != "running":
            raise PreconditionError("session is not running")
        self.status = "halted"
        frame = self.current_frame
        frame.halt_reason = HaltReason("user")
        return frame

    def reverse(self, n: int = 1) -> Frame:
        """Move the cursor back through stored history; nothing is recomputed."""
        if self.status == "running":
            raise PreconditionError("session is running; halt it first")
        if n < 1:
            raise RangeError(f"reverse count must be >= 1, got {n}")
        if n > self.cursor:
            raise RangeError(f"cannot reverse {n} from cursor {self.cursor}")
        self.cursor -= n
        self.status = "halted"
        return self.current_frame

    def what_if(self, action: str | int) -> WhatIfReport:
        """Preview one action from the current frame without taking it:
        expected immediate reward under the belief, the predicted next
        belief, and the metric distributions that prediction implies."""
        if self.status == "finished":
            raise PreconditionError("session has finished the episode")
        if self.status == "running":
            raise PreconditionError("session is running; halt it first")
        model = self.model
        if isinstance(action, str):
            a = model.defender_action_index(action)
        else:
            a = int(action)
            if not (0 <= a < model.n_defender_actions):
                raise RangeError(f"defender action id {a} out of range")
        belief = self.current_frame.belief
        predicted = Belief(predict_belief(model, belief, a))
        return WhatIfReport(
            action=model.defender_actions[a].name,
            expected_reward=float(belief.probs @ model.reward[:, a]),
            predicted_belief=predicted,
            observation_rows=self._rows(predicted),
        )

    # -- breakpoints ------------------------------------------------------------------

    def add_breakpoint(self, predicate: Predicate) -> int:
        validate_predicate(predicate, self.model)
        bp = Breakpoint(self._next_breakpoint_id, predicate)
        self._next_breakpoint_id += 1
        self.breakpoints.append(bp)
        return bp.id

    def remove_breakpoint(self, breakpoint_id: int) -> None:
        for i, bp in enumerate(self.breakpoints):
            if bp.id == breakpoint_id:
                del self.breakpoints[i]
                return
        raise NotFoundError(f"no breakpoint with id {breakpoint_id}")

    def list_breakpoints(self) -> list[Breakpoint]:
        return list(self.breakpoints)

    # -- forking ---------------------------------------------------------------------

    def fork(self, seed: int) -> "DebugSession":
        """A new session that shares this session's visited prefix and then
        continues as a fresh simulation from the supplied seed.

        Replay sessions can fork too when they carry an overlay policy: the
        fork picks up the recorded hidden state at the cursor and hands
        control to that policy.
        """
        if self.status == "running":
            raise PreconditionError("halt the session before forking")
        model = self.model
        if isinstance(self.source, SimulationSource):
            policy = self.source.policy
            horizon = self.source.horizon
        else:
            policy = self.source.overlay_policy
            if policy is None:
                raise IncompatibilityError(
                    "cannot fork a replay session without an overlay policy")
            horizon = None
        fork = DebugSession.__new__(DebugSession)
        fork.session_id = f"sess-{uuid.uuid4().hex[:12]}"
        fork.source = SimulationSource(model, policy, seed, horizon)
        fork.mode = self.mode
        fork.autoplay_interval = self.autoplay_interval
        fork.reveal_attacker = self.reveal_attacker
        fork.status = "halted"
        fork.cursor = self.cursor
        fork.breakpoints = list(self.breakpoints)
        fork._next_breakpoint_id = self._next_breakpoint_id
        fork.frames = [Frame(**vars(f)) for f in self.frames[: self.cursor + 1]]
        for f in fork.frames:
            if f.halt_reason is not None \
                    and f.halt_reason.kind not in ("terminal", "horizon"):
                f.halt_reason = None
        rng = Rng(seed)
        if isinstance(self.source, SimulationSource):
            hidden = list(self._hidden_states[: self.cursor + 1])
        else:
            hidden = [model.state_index(self.source.trace.steps[k - 1].state)
                      if k > 0 else rng.categorical(model.initial_distribution)
                      for k in range(self.cursor + 1)]
        fork._hidden_states = hidden
        fork._rng_states = [rng.snapshot()] * (self.cursor + 1)
        fork._final_t = self._final_t if (
            self._final_t is not None and self._final_t <= self.cursor) else None
        if fork._final_t is not None:
            fork.status = "finished" if fork.cursor == fork._final_t else "halted"
        return fork
