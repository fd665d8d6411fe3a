"""Estimate the observation kernel back from logged traces.

Generates a corpus with the built-in scenario, ingests it into a file-backed
store, estimates Laplace-smoothed per-(state, activity) bin distributions,
and compares a few estimated rows against the generating truth.  The
estimated kernel plugs straight back into a model copy.
"""

import tempfile

import numpy as np

import policyscope as ps
from policyscope.estimate import EstimationConfig, estimate_observation_model
from policyscope.store import TraceStore

EPISODES = 300

model = ps.build_intrusion_scenario()
store = TraceStore(tempfile.mkdtemp(prefix="policyscope-store-"))
print(f"store root: {store.root}")

seeder = ps.Rng(2025)
trace_ids = []
steps = 0
for _ in range(EPISODES):
    trace = ps.simulate_episode(model, ps.never_defend_policy(model),
                                seeder.spawn_seed())
    steps += len(trace.steps)
    trace_ids.append(store.ingest_trace(ps.trace_to_lines(trace)))
print(f"ingested {len(trace_ids)} traces, {steps} steps")

estimate = estimate_observation_model(
    store, trace_ids, model, EstimationConfig(alpha=1.0, min_samples=500))

print("\nsamples per (state, activity) cell:")
for s, state in enumerate(model.state_names):
    row = "  ".join(f"{act}={int(estimate.cell_counts[s, a]):>6}"
                    for a, act in enumerate(model.attacker_actions))
    print(f"  {state:<12} {row}")
print(f"low-sample warnings: {len(estimate.warnings)}")

metric = 0  # ids_alerts
print(f"\nestimated vs true '{model.metrics[metric].name}' rows "
      f"(first 6 bins), by activity in state 'recon':")
s = model.state_index("recon")
for a, activity in enumerate(model.attacker_actions):
    true_row = model.observation[metric][s, a, :6]
    est_row = estimate.kernel[metric][s, a, :6]
    l1 = float(np.abs(estimate.kernel[metric][s, a]
                      - model.observation[metric][s, a]).sum())
    print(f"  {activity:<10} true {np.round(true_row, 3)}")
    print(f"  {'':<10} est  {np.round(est_row, 3)}   (full-row L1 {l1:.3f})")

refit = estimate.apply(model)
print(f"\nrefit model '{refit.scenario_name}' is valid: "
      f"{ps.validate_model(refit).ok}")
