import pytest

import policyscope as ps
from policyscope.errors import IncompatibilityError, RangeError
from policyscope.scenario import ScenarioConfig

# Frozen reference run: random policy, 500 episodes, seed 3.
GOLDEN_RANDOM_EVAL = {
    "episodes": 500,
    "mean_return": -541.218,
    "stddev_return": 149.18511479366833,
    "mean_length": 94.234,
    "stddev_length": 18.23302618875978,
    "defend_frequency": 0.4980368020035231,
    "false_alarm_count": 21400,
}


class TestEvaluatePolicy:
    def test_never_defend_without_intrusions_closed_form(self):
        config = ScenarioConfig(intrusion_start_prob=0.0)
        model = ps.build_intrusion_scenario(config)
        stats = ps.evaluate_policy(model, ps.never_defend_policy(model), 20, 1)
        assert stats.mean_return == config.horizon * config.service_reward
        assert stats.stddev_return == 0.0
        assert stats.mean_length == config.horizon
        assert stats.defend_frequency == 0.0
        assert stats.false_alarm_count == 0

    def test_single_episode_zero_stddev(self, default_model):
        stats = ps.evaluate_policy(default_model, ps.RandomPolicy(2), 1, 9)
        assert stats.stddev_return == 0.0
        assert stats.stddev_length == 0.0

    def test_golden_random_policy_stats(self, default_model):
        stats = ps.evaluate_policy(default_model, ps.RandomPolicy(2), 500, 3)
        assert stats.to_dict() == GOLDEN_RANDOM_EVAL

    def test_episode_seeds_reproduce_episodes(self, default_model):
        stats = ps.evaluate_policy(default_model, ps.RandomPolicy(2), 3, 17)
        replayed = [ps.simulate_episode(default_model, ps.RandomPolicy(2), s)
                    for s in stats.episode_seeds]
        returns = sorted(t.total_reward for t in replayed)
        assert len(returns) == 3

    def test_zero_episodes_rejected(self, default_model):
        with pytest.raises(RangeError):
            ps.evaluate_policy(default_model, ps.RandomPolicy(2), 0, 1)

    def test_space_mismatch_rejected(self, default_model):
        with pytest.raises(IncompatibilityError):
            ps.evaluate_policy(default_model, ps.RandomPolicy(5), 1, 1)

    def test_deterministic_given_seed(self, default_model):
        a = ps.evaluate_policy(default_model, ps.RandomPolicy(2), 20, 4)
        b = ps.evaluate_policy(default_model, ps.RandomPolicy(2), 20, 4)
        assert a.to_dict() == b.to_dict()
