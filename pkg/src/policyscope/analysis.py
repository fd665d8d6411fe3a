"""Edge-case examination helpers: how a policy reacts to specific attacker
activity, and a scripted hunt for false alarms on intrusion-free traffic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ImpossibleObservationError
from .model import Belief, PomdpModel, belief_update, initial_belief
from .policies import Policy, PolicyInput
from .rng import Rng
from .simulate import environment_step, simulate_episode


def defend_probability_by_attacker_action(
        model: PomdpModel, policy: Policy, episodes: int, seed: int,
        defend_index: int = 1) -> dict[str, float]:
    """Mean probability the policy assigns to defending on the step right
    after each attacker activity was observed.

    For a step t with realized attacker action a_t, the relevant response is
    the action distribution computed from (belief_t, o_t) when choosing the
    step-(t+1) action; the last step of an episode therefore contributes no
    sample.  Returns one mean per attacker action name (attacker actions
    never realized map to nan).
    """
    policy.check_compatible(model)
    seeder = Rng(seed)
    sums = {name: 0.0 for name in model.attacker_actions}
    counts = {name: 0 for name in model.attacker_actions}
    for _ in range(episodes):
        trace = simulate_episode(model, policy, seeder.spawn_seed())
        horizon = model.horizon
        for k in range(len(trace.steps) - 1):
            step = trace.steps[k]
            dist = policy.predict(PolicyInput(
                Belief(np.array(step.belief_after)), step.observation,
                (step.t + 1) / horizon))
            sums[step.attacker_action] += dist[defend_index]
            counts[step.attacker_action] += 1
    return {name: (sums[name] / counts[name] if counts[name] else float("nan"))
            for name in model.attacker_actions}


@dataclass
class FalseAlarmHit:
    seed: int
    step: int
    defend_probability: float
    defended: bool


@dataclass
class FalseAlarmReport:
    """Outcome of scanning intrusion-free episodes for defensive overreaction."""

    threshold: float
    seeds_examined: int
    hits: list[FalseAlarmHit] = field(default_factory=list)
    filter_divergences: int = 0

    @property
    def found(self) -> bool:
        return bool(self.hits)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "seeds_examined": self.seeds_examined,
            "hits": [{"seed": h.seed, "step": h.step,
                      "defend_probability": h.defend_probability,
                      "defended": h.defended} for h in self.hits],
            "filter_divergences": self.filter_divergences,
        }


def find_false_alarms(world_model: PomdpModel, filter_model: PomdpModel,
                      policy: Policy, seeds, threshold: float = 0.5,
                      defend_index: int = 1) -> FalseAlarmReport:
    """Search intrusion-free episodes for steps where the policy wants to
    defend anyway.

    ``world_model`` generates the episodes (typically a variant whose
    intrusion probability is zero and whose client traffic is noisy);
    ``filter_model`` is the model the defender believes in and filters with
    (typically the one the policy was trained on).  The mismatch is the point:
    a run of noisy client observations drives the believed intrusion
    probability up and can push the policy over the defend threshold even
    though no attacker exists.

    Records, per seed with at least one crossing, the first step where the
    defend probability exceeded ``threshold``.
    """
    policy.check_compatible(filter_model)
    seeds = list(seeds)
    report = FalseAlarmReport(threshold=threshold, seeds_examined=len(seeds))
    horizon = world_model.horizon
    for seed in seeds:
        rng = Rng(seed)
        state = rng.categorical(world_model.initial_distribution)
        belief = initial_belief(filter_model)
        last_obs = None
        diverged = False
        for t in range(1, horizon + 1):
            dist = policy.predict(PolicyInput(belief, last_obs, t / horizon))
            p_defend = dist[defend_index]
            action = rng.categorical(dist.probs)
            if p_defend > threshold:
                report.hits.append(FalseAlarmHit(
                    seed=seed, step=t, defend_probability=float(p_defend),
                    defended=action == defend_index))
                break
            state, _, obs, _ = environment_step(world_model, state, action, rng)
            try:
                belief = belief_update(filter_model, belief, action, obs)
            except ImpossibleObservationError:
                diverged = True
                break
            last_obs = obs
            if world_model.is_terminal(state):
                break
        if diverged:
            report.filter_divergences += 1
    return report
