"""File-backed store for traces, policies, and scenario configs.

On-disk layout under the store root::

    traces/<id>.jsonl              canonical interchange payloads
    catalog/policies/<id>.policy   policy container bytes
    catalog/policies/<id>.json     {"name": ..., "kind": ...}
    catalog/scenarios/<id>.json    {"name": ..., "config": {...}}
    index.json                     cache of the metadata below

Payloads are the source of truth: the index is a cache that can always be
rebuilt by scanning them (``rebuild_index``), and every write lands via
temp-file-plus-rename so a payload is visible fully or not at all.  Creation
times are the payload files' mtimes; ids are zero-padded counters, so listing
order is creation order.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from .errors import ConflictError, IngestError, NotFoundError
from .policies import Policy, load_policy
from .scenario import ScenarioConfig
from .trace import EpisodeTrace, lines_to_trace, trace_to_text


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


class TraceStore:
    """Many concurrent readers, one writer: mutations take the store lock."""

    def __init__(self, root):
        self.root = Path(root)
        self._lock = threading.Lock()
        (self.root / "traces").mkdir(parents=True, exist_ok=True)
        (self.root / "catalog" / "policies").mkdir(parents=True, exist_ok=True)
        (self.root / "catalog" / "scenarios").mkdir(parents=True, exist_ok=True)
        index_path = self.root / "index.json"
        if index_path.exists():
            with open(index_path, "r", encoding="utf-8") as f:
                self._index = json.load(f)
        else:
            self._index = self._scan()

    # -- index ---------------------------------------------------------------

    def _scan(self) -> dict:
        index = {"traces": {}, "policies": {}, "scenarios": {}}
        for path in sorted((self.root / "traces").glob("*.jsonl")):
            with open(path, "r", encoding="utf-8") as f:
                lines = f.read().splitlines()
            if not lines:
                continue
            header = json.loads(lines[0])
            index["traces"][path.stem] = {
                "trace_id": header["trace_id"],
                "scenario": header["scenario"],
                "config_hash": header["config_hash"],
                "seed": header["seed"],
                "steps": len(lines) - 1,
                "created_at": path.stat().st_mtime_ns,
            }
        for path in sorted((self.root / "catalog" / "policies").glob("*.json")):
            with open(path, "r", encoding="utf-8") as f:
                meta = json.load(f)
            index["policies"][path.stem] = {
                "name": meta["name"], "kind": meta["kind"],
                "created_at": path.stat().st_mtime_ns,
            }
        for path in sorted((self.root / "catalog" / "scenarios").glob("*.json")):
            with open(path, "r", encoding="utf-8") as f:
                entry = json.load(f)
            index["scenarios"][path.stem] = {
                "name": entry["name"],
                "config_hash": ScenarioConfig.from_dict(entry["config"]).hash(),
                "created_at": path.stat().st_mtime_ns,
            }
        return index

    def rebuild_index(self) -> dict:
        with self._lock:
            self._index = self._scan()
            return self._index

    def flush(self) -> None:
        with self._lock:
            _atomic_write(self.root / "index.json",
                          (json.dumps(self._index, indent=2, sort_keys=True) + "\n").encode())

    def _next_id(self, section: str, prefix: str) -> str:
        existing = [int(k[1:]) for k in self._index[section] if k[1:].isdigit()]
        return f"{prefix}{(max(existing) + 1 if existing else 1):06d}"

    # -- traces ----------------------------------------------------------------

    def ingest_trace(self, lines) -> str:
        """Validate an interchange stream and persist it canonically.

        Raises :class:`IngestError` naming the offending line; nothing is
        stored on failure.  Returns the fresh store id (the embedded trace_id
        is preserved verbatim inside the payload).
        """
        trace = lines_to_trace(lines)
        return self.save_trace(trace)

    def save_trace(self, trace: EpisodeTrace) -> str:
        if not trace.steps:
            raise IngestError("trace has no steps", None)
        text = trace_to_text(trace)
        with self._lock:
            store_id = self._next_id("traces", "t")
            path = self.root / "traces" / f"{store_id}.jsonl"
            _atomic_write(path, text.encode())
            self._index["traces"][store_id] = {
                "trace_id": trace.trace_id,
                "scenario": trace.scenario,
                "config_hash": trace.config_hash,
                "seed": trace.seed,
                "steps": len(trace.steps),
                "created_at": path.stat().st_mtime_ns,
            }
        return store_id

    def _trace_path(self, store_id: str) -> Path:
        path = self.root / "traces" / f"{store_id}.jsonl"
        if store_id not in self._index["traces"] or not path.exists():
            raise NotFoundError(f"no trace with id {store_id!r}")
        return path

    def export_trace(self, store_id: str) -> str:
        with open(self._trace_path(store_id), "r", encoding="utf-8") as f:
            return f.read()

    def get_trace(self, store_id: str) -> EpisodeTrace:
        return lines_to_trace(self.export_trace(store_id).splitlines())

    def list_traces(self, scenario: str | None = None) -> list[dict]:
        out = []
        for store_id in sorted(self._index["traces"]):
            meta = self._index["traces"][store_id]
            if scenario is not None and meta["scenario"] != scenario:
                continue
            out.append({"store_id": store_id, **meta})
        return out

    # -- policies ---------------------------------------------------------------

    def register_policy(self, name: str, data: bytes) -> str:
        """Catalog a policy payload; the payload must load cleanly first, so
        a corrupt upload leaves the catalog untouched."""
        policy = load_policy(data)
        with self._lock:
            if any(m["name"] == name for m in self._index["policies"].values()):
                raise ConflictError(f"a policy named {name!r} already exists")
            policy_id = self._next_id("policies", "p")
            base = self.root / "catalog" / "policies"
            _atomic_write(base / f"{policy_id}.policy", data)
            meta_path = base / f"{policy_id}.json"
            _atomic_write(meta_path, (json.dumps(
                {"name": name, "kind": policy.kind}, sort_keys=True) + "\n").encode())
            self._index["policies"][policy_id] = {
                "name": name, "kind": policy.kind,
                "created_at": meta_path.stat().st_mtime_ns,
            }
        return policy_id

    def get_policy_bytes(self, policy_id: str) -> bytes:
        path = self.root / "catalog" / "policies" / f"{policy_id}.policy"
        if policy_id not in self._index["policies"] or not path.exists():
            raise NotFoundError(f"no policy with id {policy_id!r}")
        return path.read_bytes()

    def get_policy(self, policy_id: str) -> Policy:
        return load_policy(self.get_policy_bytes(policy_id))

    def find_policy(self, id_or_name: str) -> str:
        if id_or_name in self._index["policies"]:
            return id_or_name
        for policy_id, meta in self._index["policies"].items():
            if meta["name"] == id_or_name:
                return policy_id
        raise NotFoundError(f"no policy with id or name {id_or_name!r}")

    def list_policies(self) -> list[dict]:
        return [{"policy_id": pid, **self._index["policies"][pid]}
                for pid in sorted(self._index["policies"])]

    # -- scenarios ---------------------------------------------------------------

    def register_scenario(self, name: str, config: ScenarioConfig) -> str:
        config.validate()
        with self._lock:
            if any(m["name"] == name for m in self._index["scenarios"].values()):
                raise ConflictError(f"a scenario named {name!r} already exists")
            scenario_id = self._next_id("scenarios", "s")
            path = self.root / "catalog" / "scenarios" / f"{scenario_id}.json"
            _atomic_write(path, (json.dumps(
                {"name": name, "config": config.to_dict()},
                indent=2, sort_keys=True) + "\n").encode())
            self._index["scenarios"][scenario_id] = {
                "name": name, "config_hash": config.hash(),
                "created_at": path.stat().st_mtime_ns,
            }
        return scenario_id

    def get_scenario(self, scenario_id: str) -> ScenarioConfig:
        path = self.root / "catalog" / "scenarios" / f"{scenario_id}.json"
        if scenario_id not in self._index["scenarios"] or not path.exists():
            raise NotFoundError(f"no scenario with id {scenario_id!r}")
        with open(path, "r", encoding="utf-8") as f:
            entry = json.load(f)
        return ScenarioConfig.from_dict(entry["config"])

    def find_scenario(self, id_or_name: str) -> str:
        if id_or_name in self._index["scenarios"]:
            return id_or_name
        for scenario_id, meta in self._index["scenarios"].items():
            if meta["name"] == id_or_name:
                return scenario_id
        raise NotFoundError(f"no scenario with id or name {id_or_name!r}")

    def list_scenarios(self) -> list[dict]:
        return [{"scenario_id": sid, **self._index["scenarios"][sid]}
                for sid in sorted(self._index["scenarios"])]
