"""Render the examination view for one episode as a PNG: belief and defend
probability over time, the expected metric distributions at a chosen step,
and the attacker's timeline.

Writes episode_panels.png next to this script.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import policyscope as ps
from policyscope.debugger import DebugSession, SimulationSource

SEED = 7

model = ps.build_intrusion_scenario()
policy = ps.ThresholdPolicy(0.8, ps.intrusion_state_indices(model),
                            model.n_states)
session = DebugSession(SimulationSource(model, policy, SEED))
session.continue_run()
frames = session.frames

ts = [f.t for f in frames]
beliefs = np.array([f.belief.tolist() for f in frames])
defend_prob = [f.action_distribution[1] if f.action_distribution else 0.0
               for f in frames]
inspect_at = min(len(frames) - 1, 12)

fig, axes = plt.subplots(2, 2, figsize=(11, 7))
fig.suptitle(f"episode walkthrough (scenario {model.scenario_name}, seed {SEED})")

ax = axes[0][0]
for i, name in enumerate(model.state_names):
    ax.plot(ts, beliefs[:, i], label=f"P({name})")
ax.plot(ts, defend_prob, "k--", label="P(defend)")
ax.set_xlabel("t")
ax.set_ylabel("probability")
ax.set_title("defender's belief and action probability")
ax.legend(loc="upper right", fontsize=8)

ax = axes[0][1]
frame = frames[inspect_at]
width = 0.25
for m, rows in enumerate(frame.observation_rows):
    bins = np.arange(len(rows))
    ax.bar(bins + m * width, rows, width=width, label=model.metrics[m].name)
    if frame.observation is not None:
        ax.axvline(frame.observation.bins[m] + m * width, color=f"C{m}",
                   linestyle=":", alpha=0.7)
ax.set_title(f"expected metric distributions at t={frame.t} "
             "(dotted: observed bins)")
ax.set_xlabel("bin")
ax.legend(fontsize=8)

ax = axes[1][0]
state_index = {name: i for i, name in enumerate(model.state_names)}
hidden = [state_index[f.hidden_state] for f in frames[1:]]
ax.step(ts[1:], hidden, where="mid", color="C3")
ax.set_yticks(range(model.n_states), model.state_names)
ax.set_xlabel("t")
ax.set_title("attacker's view: hidden infrastructure state")

ax = axes[1][1]
activity_index = {name: i for i, name in enumerate(model.attacker_actions)}
activity = [activity_index[f.attacker_action] for f in frames[1:]]
defended = [f.t for f in frames[1:] if f.defender_action == "defend"]
ax.scatter(ts[1:], activity, s=12, color="C4")
for t in defended:
    ax.axvline(t, color="k", alpha=0.25)
ax.set_yticks(range(model.n_attacker_actions), model.attacker_actions)
ax.set_xlabel("t")
ax.set_title("attacker activity (vertical lines: defend actions)")

fig.tight_layout()
out = Path(__file__).with_name("episode_panels.png")
fig.savefig(out, dpi=120)
print(f"wrote {out}")
