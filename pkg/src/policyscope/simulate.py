"""Episode simulation: the synthetic stand-in for an instrumented testbed.

Sampling is bit-deterministic given a seed.  Each step consumes the generator
in this fixed order:

1. defender action      (one categorical draw, by the episode driver)
2. successor state      (one categorical draw from the transition row)
3. attacker action      (one categorical draw from the successor's activity row)
4. metric bins          (one categorical draw per metric, declaration order)

so a (model, policy, seed) triple always reproduces the same trace.
"""

from __future__ import annotations

from .errors import RangeError, TerminalStateError
from .model import Belief, Observation, PomdpModel, belief_update, initial_belief
from .policies import Policy, PolicyInput
from .rng import Rng
from .trace import EpisodeTrace, StepRecord


def environment_step(model: PomdpModel, state: int, defender_action: int,
                     rng: Rng) -> tuple[int, int, Observation, float]:
    """Advance the hidden process one step.

    Returns (next_state, attacker_action, observation, reward); the reward is
    charged on the source state, the observation is emitted by the successor.
    """
    if not (0 <= state < model.n_states):
        raise RangeError(f"state id {state} out of range")
    if not (0 <= defender_action < model.n_defender_actions):
        raise RangeError(f"defender action id {defender_action} out of range")
    if model.is_terminal(state):
        raise TerminalStateError(
            f"cannot step from terminal state {model.state_names[state]!r}")
    next_state = rng.categorical(model.transition[state, defender_action])
    attacker_action = rng.categorical(model.attacker_behavior[next_state])
    bins = tuple(rng.categorical(z[next_state, attacker_action])
                 for z in model.observation)
    reward = float(model.reward[state, defender_action])
    return next_state, attacker_action, Observation(bins), reward


def episode_trace_id(model: PomdpModel, seed: int) -> str:
    return f"{model.scenario_name}-{model.config_hash}-seed{seed}"


def simulate_episode(model: PomdpModel, policy: Policy, seed: int,
                     horizon_override: int | None = None) -> EpisodeTrace:
    """Run one filtered episode under the policy.

    The hidden start state is drawn from the initial distribution; the belief
    starts at that distribution and is filtered after every observation, so
    each step record carries ``belief_after``.
    """
    policy.check_compatible(model)
    belief = initial_belief(model)
    if horizon_override is not None and horizon_override < 1:
        raise RangeError(f"horizon override must be >= 1, got {horizon_override}")
    horizon = horizon_override if horizon_override is not None else model.horizon

    rng = Rng(seed)
    state = rng.categorical(model.initial_distribution)
    trace = EpisodeTrace(
        trace_id=episode_trace_id(model, seed),
        scenario=model.scenario_name,
        config_hash=model.config_hash,
        seed=seed,
    )
    last_obs: Observation | None = None
    reason = "horizon"
    for t in range(1, horizon + 1):
        dist = policy.predict(PolicyInput(belief, last_obs, t / horizon))
        action = rng.categorical(dist.probs)
        state, attacker_action, obs, reward = environment_step(model, state, action, rng)
        belief = belief_update(model, belief, action, obs)
        trace.steps.append(StepRecord(
            t=t,
            state=model.state_names[state],
            attacker_action=model.attacker_actions[attacker_action],
            defender_action=model.defender_actions[action].name,
            observation=obs,
            reward=reward,
            belief_after=belief.tolist(),
        ))
        last_obs = obs
        if model.is_terminal(state):
            reason = "terminal_state"
            break
    trace.terminated_reason = reason
    return trace


def replay_beliefs(model: PomdpModel, trace: EpisodeTrace) -> list[Belief]:
    """Filter a recorded action/observation sequence; beliefs[k] is the
    posterior after step k (beliefs[0] is the prior)."""
    belief = initial_belief(model)
    out = [belief]
    for step in trace.steps:
        action = model.defender_action_index(step.defender_action)
        belief = belief_update(model, belief, action, step.observation)
        out.append(belief)
    return out
