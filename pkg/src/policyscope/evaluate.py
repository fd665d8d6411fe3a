"""Policy evaluation over seeded rollouts.

Conventions for the aggregate counters: defender action 0 is the
"keep operating" action, so the defend frequency counts steps whose action
index is nonzero, and a false alarm is a nonzero action taken while the
hidden state is state 0 (the built-in scenario puts `continue` and `healthy`
at index 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RangeError
from .model import PomdpModel
from .policies import Policy
from .rng import Rng
from .simulate import simulate_episode


@dataclass
class EvalStats:
    episodes: int
    mean_return: float
    stddev_return: float
    mean_length: float
    stddev_length: float
    defend_frequency: float
    false_alarm_count: int
    episode_seeds: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "mean_return": self.mean_return,
            "stddev_return": self.stddev_return,
            "mean_length": self.mean_length,
            "stddev_length": self.stddev_length,
            "defend_frequency": self.defend_frequency,
            "false_alarm_count": self.false_alarm_count,
        }


def evaluate_policy(model: PomdpModel, policy: Policy, episodes: int,
                    seed: int) -> EvalStats:
    """Mean/stddev statistics over independently seeded episodes.

    Episode seeds are spawned from one generator seeded with ``seed``, so the
    whole evaluation is reproducible and any single episode can be replayed
    from its reported seed.  Standard deviations are population deviations,
    so a single episode reports exactly 0.
    """
    if episodes < 1:
        raise RangeError(f"episodes must be >= 1, got {episodes}")
    policy.check_compatible(model)
    seeder = Rng(seed)
    episode_seeds = [seeder.spawn_seed() for _ in range(episodes)]

    returns = np.empty(episodes)
    lengths = np.empty(episodes)
    defend_steps = 0
    total_steps = 0
    false_alarms = 0
    baseline_action = model.defender_actions[0].name
    baseline_state = model.state_names[0]
    for i, ep_seed in enumerate(episode_seeds):
        trace = simulate_episode(model, policy, ep_seed)
        returns[i] = trace.total_reward
        lengths[i] = len(trace.steps)
        total_steps += len(trace.steps)
        prev_state = baseline_state if model.initial_distribution[0] == 1.0 else None
        for step in trace.steps:
            if step.defender_action != baseline_action:
                defend_steps += 1
                if prev_state == baseline_state:
                    false_alarms += 1
            prev_state = step.state

    return EvalStats(
        episodes=episodes,
        mean_return=float(returns.mean()),
        stddev_return=float(returns.std()),
        mean_length=float(lengths.mean()),
        stddev_length=float(lengths.std()),
        defend_frequency=defend_steps / total_steps if total_steps else 0.0,
        false_alarm_count=false_alarms,
        episode_seeds=tuple(episode_seeds),
    )
