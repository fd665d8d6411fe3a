"""HTTP service exposing sessions, traces, scenarios, policies, and
predictions.

All endpoints live under ``/api/v1`` and speak JSON; trace ingest and export
use the line-delimited interchange format.  Library errors surface as one
stable machine code each::

    not_found 404 | conflict 409 | finished 409 | precondition 409
    terminal 409  | impossible_observation 409
    invalid 422   | config 422 | incompatible 422 | range 422 | ingest 422
    load 422      | numeric 422
    internal 500  | training_diverged 500

Commands on one session never interleave: each session carries an asyncio
lock, and autoplay ticks queue behind the same lock.  GET endpoints never
mutate anything.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import logging
import time
from typing import Any

from fastapi import APIRouter, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from . import __version__
from .debugger import DebugSession, Frame, ReplaySource, SimulationSource, \
    predicate_from_dict
from .errors import IncompatibilityError, NotFoundError, PolicyScopeError, \
    PreconditionError, RangeError
from .estimate import EstimationConfig, estimate_observation_model
from .model import Belief, Observation, PomdpModel
from .policies import Policy, PolicyInput, load_policy, parse_builtin_policy
from .scenario import DEFAULT_SCENARIO_NAME, ScenarioConfig, \
    build_intrusion_scenario
from .store import TraceStore
from .trace import EpisodeTrace

logger = logging.getLogger("policyscope.api")

_STATUS_FOR_CODE = {
    "not_found": 404,
    "conflict": 409,
    "finished": 409,
    "precondition": 409,
    "terminal": 409,
    "impossible_observation": 409,
    "invalid": 422,
    "config": 422,
    "incompatible": 422,
    "range": 422,
    "ingest": 422,
    "load": 422,
    "numeric": 422,
    "training_diverged": 500,
    "internal": 500,
}

BUILTIN_POLICY_PREFIXES = ("random", "never_defend", "threshold:")


# -- request bodies -------------------------------------------------------------

class CreateSessionBody(BaseModel):
    source: dict
    mode: str = "manual"
    autoplay_interval: float = 1.0
    reveal_attacker: bool = True


class StepBody(BaseModel):
    n: int = 1


class ReverseBody(BaseModel):
    n: int = 1


class ForkBody(BaseModel):
    seed: int


class WhatIfBody(BaseModel):
    action: str | int


class BreakpointBody(BaseModel):
    predicate: dict


class PredictBody(BaseModel):
    belief: list[float]
    last_observation: list[int] | None = None
    t: int = 1
    horizon: int = 100


class RegisterPolicyBody(BaseModel):
    name: str
    data_base64: str


class RegisterScenarioBody(BaseModel):
    name: str
    config: dict


class EstimateBody(BaseModel):
    trace_ids: list[str]
    alpha: float = 1.0
    min_samples: int = 100
    condition_on_attacker_action: bool = True


# -- wire encoding ----------------------------------------------------------------

def frame_to_dict(frame: Frame, reveal_attacker: bool = True) -> dict:
    return {
        "t": frame.t,
        "belief": frame.belief.tolist(),
        "action_distribution": None if frame.action_distribution is None
        else frame.action_distribution.tolist(),
        "defender_action": frame.defender_action,
        "observation": None if frame.observation is None
        else list(frame.observation.bins),
        "observation_rows": frame.observation_rows,
        "attacker_action": frame.attacker_action if reveal_attacker else None,
        "hidden_state": frame.hidden_state if reveal_attacker else None,
        "reward": frame.reward,
        "cumulative_reward": frame.cumulative_reward,
        "halt_reason": None if frame.halt_reason is None
        else frame.halt_reason.to_dict(),
    }


class SessionEntry:
    def __init__(self, session: DebugSession, source_info: dict):
        self.session = session
        self.source_info = source_info
        self.lock = asyncio.Lock()
        self.last_access = time.monotonic()
        self.autoplay_task: asyncio.Task | None = None

    def touch(self) -> None:
        self.last_access = time.monotonic()

    def to_dict(self) -> dict:
        s = self.session
        return {
            "session_id": s.session_id,
            "source": self.source_info,
            "mode": s.mode,
            "autoplay_interval": s.autoplay_interval,
            "status": s.status,
            "cursor": s.cursor,
            "frame_count": len(s.frames),
            "reveal_attacker": s.reveal_attacker,
            "breakpoints": [bp.to_dict() for bp in s.breakpoints],
        }


class AppState:
    def __init__(self, store: TraceStore, session_cap: int = 64,
                 idle_ttl_seconds: float = 1800.0):
        self.store = store
        self.session_cap = session_cap
        self.idle_ttl = idle_ttl_seconds
        self.sessions: dict[str, SessionEntry] = {}

    # -- session registry ---------------------------------------------------------

    def evict_idle(self) -> None:
        now = time.monotonic()
        for sid in [sid for sid, e in self.sessions.items()
                    if now - e.last_access > self.idle_ttl]:
            self._drop(sid)

    def _drop(self, session_id: str) -> None:
        entry = self.sessions.pop(session_id, None)
        if entry and entry.autoplay_task is not None:
            entry.autoplay_task.cancel()

    def add(self, entry: SessionEntry) -> None:
        self.evict_idle()
        if len(self.sessions) >= self.session_cap:
            raise PreconditionError(
                f"session capacity of {self.session_cap} reached")
        self.sessions[entry.session.session_id] = entry

    def get(self, session_id: str) -> SessionEntry:
        entry = self.sessions.get(session_id)
        if entry is None:
            raise NotFoundError(f"no session with id {session_id!r}")
        entry.touch()
        return entry

    # -- artifact resolution --------------------------------------------------------

    def resolve_scenario(self, ref: str) -> tuple[str, ScenarioConfig]:
        scenario_id = self.store.find_scenario(ref)
        return scenario_id, self.store.get_scenario(scenario_id)

    def build_model(self, ref: str) -> PomdpModel:
        _, config = self.resolve_scenario(ref)
        return build_intrusion_scenario(config)

    def resolve_policy(self, ref: str, model: PomdpModel) -> Policy:
        if ref == "random" or ref == "never_defend" or ref.startswith("threshold:"):
            return parse_builtin_policy(ref, model)
        return self.store.get_policy(self.store.find_policy(ref))


def _build_source(state: AppState, body: CreateSessionBody):
    src = body.source
    kind = src.get("kind")
    if kind == "simulation":
        if "scenario" not in src or "policy" not in src:
            raise RangeError("simulation source needs 'scenario' and 'policy'")
        model = state.build_model(str(src["scenario"]))
        policy = state.resolve_policy(str(src["policy"]), model)
        seed = src.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise RangeError("seed must be a non-negative integer")
        horizon = src.get("horizon")
        if horizon is not None and (not isinstance(horizon, int) or horizon < 1):
            raise RangeError("horizon must be a positive integer")
        source = SimulationSource(model, policy, seed, horizon)
        info = {"kind": "simulation", "scenario": model.scenario_name,
                "policy": str(src["policy"]), "seed": seed, "horizon": horizon}
        return source, info
    if kind == "replay":
        if "trace" not in src:
            raise RangeError("replay source needs 'trace'")
        trace_ref = str(src["trace"])
        trace = state.store.get_trace(trace_ref)
        model = state.build_model(str(src.get("scenario") or trace.scenario))
        overlay = None
        if src.get("overlay_policy"):
            overlay = state.resolve_policy(str(src["overlay_policy"]), model)
        source = ReplaySource(trace, model, overlay)
        info = {"kind": "replay", "trace": trace_ref,
                "scenario": model.scenario_name,
                "overlay_policy": src.get("overlay_policy")}
        return source, info
    raise RangeError(f"unknown source kind {kind!r}")


def _policy_input_from_body(body: PredictBody) -> PolicyInput:
    belief = Belief(body.belief)
    total = float(sum(body.belief))
    if abs(total - 1.0) > 1e-6:
        raise RangeError(f"belief sums to {total:.8g}, expected 1")
    if any(x < 0.0 or x > 1.0 for x in body.belief):
        raise RangeError("belief entries must be in [0, 1]")
    if body.horizon < 1 or not (1 <= body.t <= body.horizon):
        raise RangeError("need 1 <= t <= horizon")
    obs = None
    if body.last_observation is not None:
        if any(b < 0 for b in body.last_observation):
            raise RangeError("observation bins must be >= 0")
        obs = Observation(tuple(body.last_observation))
    return PolicyInput(belief, obs, body.t / body.horizon)


async def _stop_autoplay(entry: SessionEntry) -> None:
    task = entry.autoplay_task
    entry.autoplay_task = None
    if task is not None and not task.done():
        task.cancel()
        try:
            await task
        except asyncio.CancelledError:
            pass


def create_app(store: TraceStore, session_cap: int = 64,
               idle_ttl_seconds: float = 1800.0,
               static_dir: str | None = None) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def _lifespan(app: FastAPI):
        yield
        store.flush()

    state = AppState(store, session_cap, idle_ttl_seconds)
    app = FastAPI(title="policyscope", version=__version__, lifespan=_lifespan)
    app.state.policyscope = state
    api = APIRouter(prefix="/api/v1")

    @app.exception_handler(PolicyScopeError)
    async def _handle_domain_error(request: Request, exc: PolicyScopeError):
        status = _STATUS_FOR_CODE.get(exc.code, 500)
        detail = {k: v for k, v in exc.detail.items() if k != "unnormalized"}
        return JSONResponse(
            {"code": exc.code, "message": exc.message, "detail": detail},
            status_code=status)

    @app.exception_handler(RequestValidationError)
    async def _handle_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            {"code": "invalid", "message": "request body failed validation",
             "detail": {"errors": [
                 {"loc": [str(p) for p in e["loc"]], "msg": e["msg"]}
                 for e in exc.errors()]}},
            status_code=422)

    @app.middleware("http")
    async def _log_requests(request: Request, call_next):
        started = time.monotonic()
        response = await call_next(request)
        logger.info("%s %s -> %d (%.1f ms)", request.method,
                    request.url.path, response.status_code,
                    (time.monotonic() - started) * 1e3)
        return response

    # -- health ---------------------------------------------------------------

    @api.get("/health")
    async def health():
        return {"status": "ok", "version": __version__}

    # -- sessions ---------------------------------------------------------------

    @api.post("/sessions", status_code=201)
    async def create_session(body: CreateSessionBody):
        source, info = _build_source(state, body)
        session = DebugSession(source, mode=body.mode,
                               autoplay_interval=body.autoplay_interval,
                               reveal_attacker=body.reveal_attacker)
        entry = SessionEntry(session, info)
        state.add(entry)
        return {"session": entry.to_dict(),
                "frame": frame_to_dict(session.current_frame,
                                       session.reveal_attacker)}

    @api.get("/sessions")
    async def list_sessions():
        state.evict_idle()
        return {"sessions": [e.to_dict() for e in state.sessions.values()]}

    @api.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        return {"session": state.get(session_id).to_dict()}

    @api.delete("/sessions/{session_id}")
    async def delete_session(session_id: str):
        entry = state.get(session_id)
        await _stop_autoplay(entry)
        state._drop(session_id)
        return {"deleted": session_id}

    def _frame_response(entry: SessionEntry, frame: Frame) -> dict:
        return {"frame": frame_to_dict(frame, entry.session.reveal_attacker),
                "session": entry.to_dict()}

    @api.post("/sessions/{session_id}/step")
    async def step_session(session_id: str, body: StepBody = StepBody()):
        entry = state.get(session_id)
        async with entry.lock:
            frame = entry.session.step(body.n)
        return _frame_response(entry, frame)

    async def _autoplay_loop(entry: SessionEntry):
        session = entry.session
        try:
            while True:
                await asyncio.sleep(session.autoplay_interval)
                async with entry.lock:
                    if session.status != "running":
                        return
                    session.autoplay_tick()
                    if session.status != "running":
                        return
        except asyncio.CancelledError:
            raise

    @api.post("/sessions/{session_id}/continue")
    async def continue_session(session_id: str):
        entry = state.get(session_id)
        session = entry.session
        async with entry.lock:
            if session.mode == "autoplay":
                session.begin_autoplay()
                entry.autoplay_task = asyncio.create_task(_autoplay_loop(entry))
                frame = session.current_frame
            else:
                frame = session.continue_run()
        return _frame_response(entry, frame)

    @api.post("/sessions/{session_id}/halt")
    async def halt_session(session_id: str):
        entry = state.get(session_id)
        async with entry.lock:
            frame = entry.session.halt()
        await _stop_autoplay(entry)
        return _frame_response(entry, frame)

    @api.post("/sessions/{session_id}/reverse")
    async def reverse_session(session_id: str, body: ReverseBody = ReverseBody()):
        entry = state.get(session_id)
        async with entry.lock:
            frame = entry.session.reverse(body.n)
        return _frame_response(entry, frame)

    @api.post("/sessions/{session_id}/fork", status_code=201)
    async def fork_session(session_id: str, body: ForkBody):
        entry = state.get(session_id)
        async with entry.lock:
            fork = entry.session.fork(body.seed)
        info = dict(entry.source_info)
        info.update({"kind": "simulation", "seed": body.seed,
                     "forked_from": session_id})
        new_entry = SessionEntry(fork, info)
        state.add(new_entry)
        return {"session": new_entry.to_dict(),
                "frame": frame_to_dict(fork.current_frame, fork.reveal_attacker)}

    @api.post("/sessions/{session_id}/what-if")
    async def what_if_session(session_id: str, body: WhatIfBody):
        entry = state.get(session_id)
        async with entry.lock:
            report = entry.session.what_if(body.action)
        return {"what_if": report.to_dict()}

    @api.get("/sessions/{session_id}/frame")
    async def current_frame(session_id: str):
        entry = state.get(session_id)
        return _frame_response(entry, entry.session.current_frame)

    @api.get("/sessions/{session_id}/frames")
    async def frame_window(session_id: str, request: Request,
                           to: int | None = None):
        entry = state.get(session_id)
        frames = entry.session.frames
        # "from" is a Python keyword, so it is pulled from the query directly
        raw_from = request.query_params.get("from", "0")
        try:
            start = int(raw_from)
        except ValueError:
            raise RangeError(f"bad 'from' value {raw_from!r}") from None
        end = to if to is not None else len(frames) - 1
        if not (0 <= start <= end <= len(frames) - 1):
            raise RangeError(
                f"frame window [{start}, {end}] outside [0, {len(frames) - 1}]")
        reveal = entry.session.reveal_attacker
        return {"frames": [frame_to_dict(f, reveal) for f in frames[start:end + 1]],
                "from": start, "to": end}

    # -- breakpoints ----------------------------------------------------------------

    @api.get("/sessions/{session_id}/breakpoints")
    async def list_breakpoints(session_id: str):
        entry = state.get(session_id)
        return {"breakpoints": [bp.to_dict()
                                for bp in entry.session.list_breakpoints()]}

    @api.post("/sessions/{session_id}/breakpoints", status_code=201)
    async def add_breakpoint(session_id: str, body: BreakpointBody):
        entry = state.get(session_id)
        async with entry.lock:
            bp_id = entry.session.add_breakpoint(
                predicate_from_dict(body.predicate))
        return {"breakpoint_id": bp_id}

    @api.delete("/sessions/{session_id}/breakpoints/{breakpoint_id}")
    async def remove_breakpoint(session_id: str, breakpoint_id: int):
        entry = state.get(session_id)
        async with entry.lock:
            entry.session.remove_breakpoint(breakpoint_id)
        return {"deleted": breakpoint_id}

    # -- traces ------------------------------------------------------------------------

    @api.get("/traces")
    async def list_traces(scenario: str | None = None):
        return {"traces": store.list_traces(scenario)}

    @api.post("/traces", status_code=201)
    async def ingest_trace(request: Request):
        content_type = request.headers.get("content-type", "")
        raw = await request.body()
        if content_type.startswith("application/json"):
            import json as _json
            try:
                payload = _json.loads(raw)
            except _json.JSONDecodeError as e:
                raise RangeError(f"body is not valid JSON: {e}") from None
            if isinstance(payload, dict) and "lines" in payload:
                lines = [str(x) for x in payload["lines"]]
            elif isinstance(payload, dict) and "text" in payload:
                lines = str(payload["text"]).splitlines()
            else:
                raise RangeError("JSON ingest body needs 'lines' or 'text'")
        else:
            lines = raw.decode("utf-8").splitlines()
        store_id = store.ingest_trace(lines)
        meta = store.list_traces()
        mine = next(m for m in meta if m["store_id"] == store_id)
        return {"store_id": store_id, "trace_id": mine["trace_id"],
                "steps": mine["steps"]}

    @api.get("/traces/{store_id}")
    async def get_trace(store_id: str):
        trace = store.get_trace(store_id)
        return {"store_id": store_id, **_trace_to_dict(trace)}

    @api.get("/traces/{store_id}/export")
    async def export_trace(store_id: str):
        return PlainTextResponse(store.export_trace(store_id),
                                 media_type="application/x-ndjson")

    # -- policies ----------------------------------------------------------------------

    @api.get("/policies")
    async def list_policies():
        return {"policies": store.list_policies()}

    @api.post("/policies", status_code=201)
    async def register_policy(body: RegisterPolicyBody):
        try:
            data = base64.b64decode(body.data_base64, validate=True)
        except (binascii.Error, ValueError):
            raise RangeError("data_base64 is not valid base64") from None
        policy_id = store.register_policy(body.name, data)
        return {"policy_id": policy_id}

    @api.get("/policies/{policy_id}")
    async def get_policy(policy_id: str):
        data = store.get_policy_bytes(policy_id)
        meta = next(m for m in store.list_policies()
                    if m["policy_id"] == policy_id)
        return {"policy_id": policy_id, "name": meta["name"],
                "kind": meta["kind"],
                "data_base64": base64.b64encode(data).decode()}

    @api.post("/policies/{policy_id}/predict")
    async def predict(policy_id: str, body: PredictBody):
        policy = store.get_policy(store.find_policy(policy_id))
        dist = policy.predict(_policy_input_from_body(body))
        return {"action_distribution": dist.tolist()}

    # -- scenarios ----------------------------------------------------------------------

    @api.get("/scenarios")
    async def list_scenarios():
        return {"scenarios": store.list_scenarios()}

    @api.post("/scenarios", status_code=201)
    async def register_scenario(body: RegisterScenarioBody):
        config = ScenarioConfig.from_dict(body.config)
        scenario_id = store.register_scenario(body.name, config)
        return {"scenario_id": scenario_id}

    @api.get("/scenarios/{scenario_id}")
    async def get_scenario(scenario_id: str):
        config = store.get_scenario(scenario_id)
        meta = next(m for m in store.list_scenarios()
                    if m["scenario_id"] == scenario_id)
        return {"scenario_id": scenario_id, "name": meta["name"],
                "config": config.to_dict()}

    @api.post("/scenarios/{scenario_id}/estimate-observation-model")
    async def estimate(scenario_id: str, body: EstimateBody):
        config = store.get_scenario(store.find_scenario(scenario_id))
        model = build_intrusion_scenario(config)
        est = estimate_observation_model(
            store, body.trace_ids, model,
            EstimationConfig(alpha=body.alpha, min_samples=body.min_samples,
                             condition_on_attacker_action=body.condition_on_attacker_action))
        return {"estimate": est.to_dict(model)}

    app.include_router(api)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="ui")

    return app


def _trace_to_dict(trace: EpisodeTrace) -> dict:
    return {
        "trace_id": trace.trace_id,
        "scenario": trace.scenario,
        "config_hash": trace.config_hash,
        "seed": trace.seed,
        "terminated_reason": trace.terminated_reason,
        "steps": [{
            "t": s.t, "state": s.state, "attacker_action": s.attacker_action,
            "defender_action": s.defender_action,
            "observation": list(s.observation.bins), "reward": s.reward,
            "belief_after": s.belief_after,
        } for s in trace.steps],
    }


def ensure_default_scenario(store: TraceStore) -> None:
    """Register the built-in scenario under its well-known name if the
    catalog does not have it yet."""
    try:
        store.find_scenario(DEFAULT_SCENARIO_NAME)
    except NotFoundError:
        store.register_scenario(DEFAULT_SCENARIO_NAME, ScenarioConfig())


def serve(store_root: str, bind: str = "127.0.0.1:8000",
          static_dir: str | None = None, log_level: str = "info",
          session_cap: int = 64, idle_ttl_seconds: float = 1800.0) -> None:
    """Run the HTTP server until interrupted; flushes the store index on
    shutdown."""
    import uvicorn

    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise RangeError(f"bind address must be host:port, got {bind!r}")
    store = TraceStore(store_root)
    ensure_default_scenario(store)
    app = create_app(store, session_cap=session_cap,
                     idle_ttl_seconds=idle_ttl_seconds, static_dir=static_dir)
    logging.basicConfig(level=log_level.upper())
    uvicorn.run(app, host=host, port=int(port_text), log_level=log_level)
