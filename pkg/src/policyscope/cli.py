"""Command-line entry point: simulate, train, evaluate, ingest, estimate,
serve, and scenarios.

Every successful run prints exactly one machine-parsable JSON summary line on
stdout; progress and diagnostics go to stderr.  Exit codes: 0 success, 1
runtime error (the stderr line carries the machine error code), 2 usage
error.  Output files are written atomically (temp file + rename).  No color
is ever emitted, so NO_COLOR needs no special handling.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import NotFoundError, PolicyScopeError
from .estimate import EstimationConfig, estimate_observation_model
from .evaluate import evaluate_policy
from .model import PomdpModel
from .policies import load_policy, network_policy_for, parse_builtin_policy, \
    save_policy
from .ppo import TrainingConfig, ppo_train
from .scenario import DEFAULT_SCENARIO_NAME, ScenarioConfig, \
    build_intrusion_scenario, load_scenario_config
from .simulate import simulate_episode
from .store import TraceStore
from .trace import trace_to_text

BUILTIN_POLICIES = "random, never_defend, threshold:<alpha>"


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if not (0 <= value < 2 ** 64):
        raise argparse.ArgumentTypeError("seed must fit in unsigned 64 bits")
    return value


def _atomic_write_text(path: str, text: str) -> None:
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, target)


def _atomic_write_bytes(path: str, data: bytes) -> None:
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, target)


def _resolve_scenario(ref: str, store: TraceStore | None = None) -> ScenarioConfig:
    """A scenario flag accepts 'default', a config file path, or (when a
    store is at hand) a cataloged scenario id or name."""
    if ref == "default" or ref == DEFAULT_SCENARIO_NAME:
        return ScenarioConfig()
    if os.path.exists(ref):
        return load_scenario_config(ref)
    if store is not None:
        return store.get_scenario(store.find_scenario(ref))
    raise NotFoundError(
        f"scenario {ref!r} is neither 'default' nor an existing config file")


def _resolve_policy(ref: str, model: PomdpModel):
    if os.path.exists(ref):
        return load_policy(Path(ref).read_bytes())
    return parse_builtin_policy(ref, model)


def _summary(obj: dict) -> None:
    print(json.dumps(obj, separators=(",", ":"), sort_keys=True))


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


# -- subcommands -----------------------------------------------------------------

def _cmd_simulate(args) -> int:
    config = _resolve_scenario(args.scenario)
    model = build_intrusion_scenario(config)
    policy = _resolve_policy(args.policy, model)
    trace = simulate_episode(model, policy, args.seed,
                             horizon_override=args.horizon)
    _atomic_write_text(args.out, trace_to_text(trace))
    _summary({
        "command": "simulate", "trace_id": trace.trace_id,
        "steps": len(trace.steps), "total_reward": trace.total_reward,
        "terminated_reason": trace.terminated_reason, "out": args.out,
    })
    return 0


def _cmd_train(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    model = build_intrusion_scenario(scenario)
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            config = TrainingConfig.from_dict(json.load(f))
    else:
        config = TrainingConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if overrides:
        config = TrainingConfig.from_dict({**config.__dict__, **overrides,
                                           "hidden_sizes": config.hidden_sizes})
    _progress(f"training on {model.scenario_name} for {config.iterations} "
              f"iterations (seed {config.seed})")
    params, stats = ppo_train(model, config)
    policy = network_policy_for(model, params)
    _atomic_write_bytes(args.out, save_policy(policy))
    stats_path = args.stats or args.out + ".stats.json"
    _atomic_write_text(stats_path,
                       json.dumps(stats.to_dict(), indent=2) + "\n")
    first = stats.iterations[0].mean_return if stats.iterations else None
    last = stats.iterations[-1].mean_return if stats.iterations else None
    _summary({
        "command": "train", "out": args.out, "stats": stats_path,
        "iterations": config.iterations, "seed": config.seed,
        "first_iteration_return": first, "final_iteration_return": last,
    })
    return 0


def _cmd_evaluate(args) -> int:
    config = _resolve_scenario(args.scenario)
    model = build_intrusion_scenario(config)
    policy = _resolve_policy(args.policy, model)
    stats = evaluate_policy(model, policy, args.episodes, args.seed)
    _summary({"command": "evaluate", "scenario": model.scenario_name,
              "policy": args.policy, **stats.to_dict()})
    return 0


def _cmd_ingest(args) -> int:
    store = TraceStore(args.store)
    ingested = []
    for path in args.files:
        if path == "-":
            store_id = store.ingest_trace(sys.stdin.read().splitlines())
        else:
            with open(path, "r", encoding="utf-8") as f:
                store_id = store.ingest_trace(f)
        ingested.append(store_id)
        _progress(f"ingested {path} as {store_id}")
    store.flush()
    _summary({"command": "ingest", "store": args.store, "ingested": ingested})
    return 0


def _cmd_estimate(args) -> int:
    store = TraceStore(args.store)
    config = _resolve_scenario(args.scenario, store)
    model = build_intrusion_scenario(config)
    est = estimate_observation_model(
        store, args.traces, model,
        EstimationConfig(alpha=args.alpha, min_samples=args.min_samples,
                         condition_on_attacker_action=not args.by_state_only))
    payload = est.to_dict(model)
    if args.out:
        _atomic_write_text(args.out, json.dumps(payload, indent=2) + "\n")
        _summary({"command": "estimate", "traces": len(args.traces),
                  "steps": est.total_steps, "warnings": len(est.warnings),
                  "out": args.out})
    else:
        _summary({"command": "estimate", "steps": est.total_steps,
                  "warnings": len(est.warnings), "estimate": payload})
    return 0


def _cmd_serve(args) -> int:
    from .server import serve

    serve(store_root=args.store, bind=args.bind, static_dir=args.assets,
          log_level=args.log_level)
    return 0


def _cmd_scenarios(args) -> int:
    if args.show:
        store = TraceStore(args.store) if args.store else None
        config = _resolve_scenario(args.show, store)
        _summary(config.to_dict())
        return 0
    catalog = []
    if args.store:
        catalog = TraceStore(args.store).list_scenarios()
    _summary({"command": "scenarios", "builtin": [DEFAULT_SCENARIO_NAME],
              "store": catalog})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="policyscope",
        description="Simulate, train, store, and interactively debug "
                    "intrusion-prevention policies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode and write its trace")
    p.add_argument("--scenario", default="default",
                   help="'default' or a scenario config file")
    p.add_argument("--policy", default="random",
                   help=f"policy file or one of: {BUILTIN_POLICIES}")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--horizon", type=_positive_int, default=None)
    p.add_argument("--out", required=True, help="trace output path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train a policy network")
    p.add_argument("--scenario", default="default")
    p.add_argument("--config", default=None, help="training config JSON file")
    p.add_argument("--seed", type=_seed, default=None, help="override seed")
    p.add_argument("--iterations", type=int, default=None,
                   help="override iteration count")
    p.add_argument("--out", required=True, help="policy output path")
    p.add_argument("--stats", default=None,
                   help="stats output path (default: <out>.stats.json)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="roll out a policy and print stats")
    p.add_argument("--scenario", default="default")
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=_positive_int, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ingest", help="ingest trace files into a store")
    p.add_argument("--store", required=True)
    p.add_argument("files", nargs="+", help="trace files ('-' for stdin)")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("estimate",
                       help="estimate an observation kernel from stored traces")
    p.add_argument("--store", required=True)
    p.add_argument("--scenario", default="default")
    p.add_argument("--traces", nargs="+", required=True, help="store trace ids")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--min-samples", type=int, default=100)
    p.add_argument("--by-state-only", action="store_true",
                   help="pool counts per state instead of (state, activity)")
    p.add_argument("--out", default=None, help="write the kernel JSON here")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--store", default=os.environ.get("POLICYSCOPE_STORE", "store"))
    p.add_argument("--bind",
                   default=os.environ.get("POLICYSCOPE_BIND", "127.0.0.1:8000"))
    p.add_argument("--assets", default=None, help="static UI directory")
    p.add_argument("--log-level",
                   default=os.environ.get("POLICYSCOPE_LOG_LEVEL", "info"))
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("scenarios", help="list or show scenario configs")
    p.add_argument("--store", default=None)
    p.add_argument("--show", default=None,
                   help="print one scenario config as JSON")
    p.set_defaults(func=_cmd_scenarios)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PolicyScopeError as e:
        print(json.dumps({"code": e.code, "message": e.message,
                          "detail": e.detail}, default=str), file=sys.stderr)
        return 1
    except OSError as e:
        print(json.dumps({"code": "io", "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
