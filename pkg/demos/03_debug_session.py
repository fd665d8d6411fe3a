"""Walk an episode like a debugger: breakpoints, stepping, reverse, and
side-effect-free what-if probes.

The session stores every visited frame and the sampler state next to it, so
reversing is pure history traversal and stepping forward again replays the
exact same episode.  Forking is the only way to diverge.
"""

import policyscope as ps
from policyscope.debugger import BeliefThreshold, DebugSession, \
    MetricThreshold, SimulationSource

model = ps.build_intrusion_scenario()
policy = ps.ThresholdPolicy(0.8, ps.intrusion_state_indices(model),
                            model.n_states)
session = DebugSession(SimulationSource(model, policy, seed=7))


def show(frame, label):
    belief = ", ".join(f"{name}={frame.belief[i]:.3f}"
                       for i, name in enumerate(model.state_names))
    print(f"[{label}] t={frame.t} status={session.status} "
          f"action={frame.defender_action} obs={None if frame.observation is None else frame.observation.bins} "
          f"halt={None if frame.halt_reason is None else frame.halt_reason.kind}")
    print(f"         belief: {belief}")


show(session.current_frame, "start")

# break when the IDS alert metric spikes (bin >= 6) or belief turns suspicious
session.add_breakpoint(MetricThreshold("ids_alerts", ">=", 6))
session.add_breakpoint(BeliefThreshold("compromised", ">=", 0.5))
print("\nbreakpoints:", [bp.to_dict() for bp in session.list_breakpoints()])

frame = session.continue_run()
show(frame, "continue hit a breakpoint")

print("\nwhat would each action cost right now?")
for action in ("continue", "defend"):
    probe = session.what_if(action)
    predicted = ", ".join(f"{v:.3f}" for v in probe.predicted_belief.tolist())
    print(f"  what_if({action}): expected reward {probe.expected_reward:+.2f}, "
          f"predicted belief [{predicted}]")

frame = session.step(3)
show(frame, "stepped 3")
frame = session.reverse(3)
show(frame, "reversed 3 (same frame as the breakpoint halt)")

fork = session.fork(seed=99)
fork_frame = fork.continue_run()
print(f"\nforked session {fork.session_id} replayed the shared prefix and "
      f"then diverged; it finished at t={fork_frame.t} "
      f"with cumulative reward {fork_frame.cumulative_reward:+.1f}")

frame = session.continue_run()
show(frame, "original continued")
print(f"\noriginal episode cumulative reward: {frame.cumulative_reward:+.1f}")
