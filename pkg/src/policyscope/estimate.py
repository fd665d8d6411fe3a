"""Empirical estimation of the observation kernel from stored traces.

Traces carry the ground-truth hidden state and attacker action per step, so
bin counts can be conditioned on (state, attacker action) cells.  Rows are
Laplace-smoothed:

    Z_hat[s, a, m, b] = (count[b] + alpha) / (N_cell + alpha * B_m)

which keeps every estimated row a valid distribution for alpha > 0 even for
cells that were never visited (those come out uniform, with a warning).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IncompatibilityError, RangeError
from .model import PomdpModel
from .store import TraceStore


@dataclass(frozen=True)
class EstimationConfig:
    alpha: float = 1.0
    min_samples: int = 100
    condition_on_attacker_action: bool = True

    def validate(self) -> None:
        if self.alpha < 0.0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.min_samples < 0:
            raise ConfigError(f"min_samples must be >= 0, got {self.min_samples}")


@dataclass
class ObservationKernelEstimate:
    """Estimated per-metric kernels plus the evidence behind them."""

    kernel: tuple[np.ndarray, ...]   # per metric: (S, A_att, B_m)
    cell_counts: np.ndarray          # (S, A_att) samples per cell
    warnings: list[dict] = field(default_factory=list)
    total_steps: int = 0

    def apply(self, model: PomdpModel) -> PomdpModel:
        """A copy of the model driven by the estimated observation kernel."""
        return dataclasses.replace(
            model, observation=self.kernel, config_hash="",
            scenario_name=model.scenario_name + "+estimated")

    def to_dict(self, model: PomdpModel) -> dict:
        return {
            "metrics": [m.name for m in model.metrics],
            "kernel": [z.tolist() for z in self.kernel],
            "cell_counts": self.cell_counts.tolist(),
            "warnings": self.warnings,
            "total_steps": self.total_steps,
        }


def estimate_observation_model(store: TraceStore, trace_ids, model: PomdpModel,
                               config: EstimationConfig | None = None) \
        -> ObservationKernelEstimate:
    """Count observation bins per (state, attacker action) cell across the
    given traces and smooth into kernel rows shaped for ``model``.

    All traces must come from one scenario (same name and config hash) and
    their identifiers and bins must fit the model's spaces.  With
    ``condition_on_attacker_action=False``, counts are pooled per state and
    every attacker action shares its state's row.
    """
    config = config or EstimationConfig()
    config.validate()
    trace_ids = list(trace_ids)
    if not trace_ids:
        raise RangeError("no traces given to estimate from")

    S, K, M = model.n_states, model.n_attacker_actions, model.n_metrics
    counts = [np.zeros((S, K, m.bins)) for m in model.metrics]
    scenario_key: tuple[str, str] | None = None
    total_steps = 0
    for tid in trace_ids:
        trace = store.get_trace(tid)
        key = (trace.scenario, trace.config_hash)
        if scenario_key is None:
            scenario_key = key
        elif key != scenario_key:
            raise IncompatibilityError(
                f"trace {tid} is from scenario {key}, expected {scenario_key}")
        for step in trace.steps:
            try:
                s = model.state_index(step.state)
                a = model.attacker_action_index(step.attacker_action)
            except RangeError as e:
                raise IncompatibilityError(
                    f"trace {tid} step {step.t}: {e.message}") from None
            if len(step.observation.bins) != M:
                raise IncompatibilityError(
                    f"trace {tid} step {step.t}: observation has "
                    f"{len(step.observation.bins)} metrics, model has {M}")
            for m, b in enumerate(step.observation.bins):
                if b >= model.metrics[m].bins:
                    raise IncompatibilityError(
                        f"trace {tid} step {step.t}: bin {b} out of range for "
                        f"metric {model.metrics[m].name!r}")
                counts[m][s, a, b] += 1.0
            total_steps += 1

    if not config.condition_on_attacker_action:
        for m in range(M):
            pooled = counts[m].sum(axis=1, keepdims=True)
            counts[m] = np.repeat(pooled, K, axis=1)

    kernel = []
    for m in range(M):
        bins = model.metrics[m].bins
        cell_totals = counts[m].sum(axis=2, keepdims=True)
        denom = cell_totals + config.alpha * bins
        # alpha == 0 leaves unvisited cells with no evidence at all; emit the
        # uniform row (the alpha -> 0 limit of the smoothed formula).
        empty = denom <= 0.0
        smoothed = (counts[m] + config.alpha) / np.where(empty, 1.0, denom)
        smoothed = np.where(empty, 1.0 / bins, smoothed)
        kernel.append(smoothed)

    cell_counts = counts[0].sum(axis=2)
    warnings = []
    for s in range(S):
        for a in range(K):
            n = int(cell_counts[s, a])
            if n < config.min_samples:
                warnings.append({
                    "state": model.state_names[s],
                    "attacker_action": model.attacker_actions[a],
                    "samples": n,
                })
    return ObservationKernelEstimate(
        kernel=tuple(kernel), cell_counts=cell_counts, warnings=warnings,
        total_steps=total_steps)
