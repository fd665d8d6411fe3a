import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import policyscope as ps
from policyscope.errors import ImpossibleObservationError, ModelInvalidError, \
    RangeError
from policyscope.model import predict_belief, state_observation_likelihoods
from policyscope.rng import Rng

from conftest import brute_force_posterior, random_model


def two_state_model(likelihood_s0=0.2, likelihood_s1=0.7,
                    transition=None) -> ps.PomdpModel:
    """2 states, 1 defender action, 1 attacker action, 1 binary metric whose
    bin-0 likelihoods are given per state."""
    if transition is None:
        transition = [[[0.9, 0.1]], [[0.0, 1.0]]]
    return ps.PomdpModel(
        state_names=("s0", "s1"),
        defender_actions=(ps.DefenderAction("a0", 0.0),),
        attacker_actions=("k0",),
        metrics=(ps.MetricSpec("m0", 2),),
        transition=np.array(transition, dtype=float),
        attacker_behavior=np.array([[1.0], [1.0]]),
        observation=(np.array([[[likelihood_s0, 1 - likelihood_s0]],
                               [[likelihood_s1, 1 - likelihood_s1]]]),),
        reward=np.zeros((2, 1)),
        initial_distribution=np.array([0.5, 0.5]),
        horizon=5,
    )


class TestValidation:
    def test_default_scenario_is_valid(self, default_model):
        assert ps.validate_model(default_model).ok

    def test_bad_row_sum_named(self, default_model):
        transition = np.array(default_model.transition)
        transition[1, 0, :] *= 0.9
        bad = dataclasses.replace(default_model, transition=transition,
                                  config_hash="x")
        report = ps.validate_model(bad)
        rows = [i for i in report.issues if "row sums" in i]
        assert len(rows) == 1
        assert "recon" in rows[0] and "continue" in rows[0]

    def test_point_mass_initial_distribution_is_valid(self):
        m = two_state_model()
        m = dataclasses.replace(m, initial_distribution=np.array([1.0, 0.0]),
                                config_hash="")
        assert ps.validate_model(m).ok

    def test_validation_is_total_over_many_defects(self, default_model):
        bad = dataclasses.replace(
            default_model,
            transition=np.array(default_model.transition)[:, :1, :],
            horizon=0,
            terminal_states=frozenset({99}),
            config_hash="x")
        report = ps.validate_model(bad)
        assert len(report.issues) >= 3  # shape, horizon, terminal id

    def test_negative_entries_flagged(self):
        m = two_state_model()
        att = np.array([[1.5], [1.0]])
        att[0, 0] = 1.0  # keep row sum fine but entry bounds separate
        obs = np.array(m.observation[0])
        obs[0, 0] = [-0.1, 1.1]
        bad = dataclasses.replace(m, observation=(obs,), config_hash="x")
        report = ps.validate_model(bad)
        assert any("outside [0, 1]" in i for i in report.issues)


class TestInitialBelief:
    @pytest.mark.parametrize("rho", [(1.0, 0.0, 0.0), (0.5, 0.5, 0.0)])
    def test_returns_rho_verbatim(self, rho):
        rng = Rng(1)
        m = random_model(rng, 3, 1, 1, 1, 2, 3)
        m = dataclasses.replace(m, initial_distribution=np.array(rho),
                                config_hash="")
        assert ps.initial_belief(m).tolist() == list(rho)

    def test_default_scenario_point_mass_on_healthy(self, default_model):
        b = ps.initial_belief(default_model)
        assert b.tolist() == [1.0, 0.0, 0.0, 0.0]
        assert default_model.state_names[0] == "healthy"

    def test_invalid_model_rejected(self, default_model):
        bad = dataclasses.replace(default_model, horizon=0, config_hash="x")
        with pytest.raises(ModelInvalidError):
            ps.initial_belief(bad)


class TestObservationLikelihood:
    def test_single_factor(self):
        m = two_state_model(likelihood_s0=0.2)
        assert ps.observation_likelihood(m, 0, 0, ps.Observation((1,))) == 0.8

    def test_product_of_factors(self):
        rng = Rng(2)
        m = random_model(rng, 2, 1, 1, 2, 2, 3)
        obs0 = np.array(m.observation[0])
        obs1 = np.array(m.observation[1])
        obs0[0, 0] = [0.5, 0.5]
        obs1[0, 0] = [0.5, 0.5]
        m = dataclasses.replace(m, observation=(obs0, obs1), config_hash="")
        assert ps.observation_likelihood(m, 0, 0, ps.Observation((0, 1))) == 0.25

    def test_zero_probability_bin_absorbs(self):
        m = two_state_model(likelihood_s0=0.0)
        assert ps.observation_likelihood(m, 0, 0, ps.Observation((0,))) == 0.0

    def test_out_of_range_indices(self, default_model):
        with pytest.raises(RangeError):
            ps.observation_likelihood(default_model, 99, 0, ps.Observation((0, 0, 0)))
        with pytest.raises(RangeError):
            ps.observation_likelihood(default_model, 0, 99, ps.Observation((0, 0, 0)))
        with pytest.raises(RangeError):
            ps.observation_likelihood(default_model, 0, 0, ps.Observation((99, 0, 0)))

    def test_sums_to_one_over_alphabet(self, default_model):
        import itertools
        bins = [m.bins for m in default_model.metrics[:2]]
        small = dataclasses.replace(
            default_model,
            metrics=default_model.metrics[:2],
            observation=default_model.observation[:2],
            config_hash="")
        for s in range(small.n_states):
            for a in range(small.n_attacker_actions):
                total = sum(
                    ps.observation_likelihood(small, s, a, ps.Observation(bs))
                    for bs in itertools.product(*(range(b) for b in bins)))
                assert total == pytest.approx(1.0, abs=1e-9)


class TestBeliefUpdate:
    def test_uninformative_observation_static_dynamics(self):
        m = two_state_model(likelihood_s0=0.4, likelihood_s1=0.4,
                            transition=[[[1.0, 0.0]], [[0.0, 1.0]]])
        b = ps.belief_update(m, ps.Belief([0.3, 0.7]), 0, ps.Observation((0,)))
        assert b.tolist() == pytest.approx([0.3, 0.7], abs=1e-12)

    def test_fully_informative_observation(self):
        m = two_state_model(likelihood_s0=1.0, likelihood_s1=0.0)
        b = ps.belief_update(m, ps.Belief([0.5, 0.5]), 0, ps.Observation((0,)))
        assert b.tolist() == [1.0, 0.0]

    def test_hand_computed_posterior_matches_oracle(self):
        # prediction (0.45, 0.55), likelihoods (0.2, 0.7):
        # posterior = (0.09, 0.385) / 0.475
        m = two_state_model(likelihood_s0=0.2, likelihood_s1=0.7)
        obs = ps.Observation((0,))
        b = ps.belief_update(m, ps.Belief([0.5, 0.5]), 0, obs)
        expected = np.array([0.09, 0.385]) / 0.475
        assert b.tolist() == pytest.approx(list(expected), abs=1e-12)
        oracle = brute_force_posterior(m, [0], [obs])
        assert b.probs == pytest.approx(oracle, abs=1e-12)

    def test_impossible_observation_carries_unnormalized(self):
        m = two_state_model(likelihood_s0=0.0, likelihood_s1=0.3,
                            transition=[[[1.0, 0.0]], [[0.0, 1.0]]])
        with pytest.raises(ImpossibleObservationError) as err:
            ps.belief_update(m, ps.Belief([1.0, 0.0]), 0, ps.Observation((0,)))
        assert list(err.value.unnormalized) == [0.0, 0.0]

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2 ** 32))
    def test_normalized_output_property(self, seed):
        rng = Rng(seed)
        m = random_model(rng, 2 + rng.randint(3), 1 + rng.randint(2),
                         1 + rng.randint(2), 1 + rng.randint(2),
                         2 + rng.randint(2), 4)
        belief_raw = np.array([rng.random() for _ in range(m.n_states)]) + 1e-9
        belief = ps.Belief(belief_raw / belief_raw.sum())
        action = rng.randint(m.n_defender_actions)
        obs = ps.Observation(tuple(rng.randint(spec.bins) for spec in m.metrics))
        out = ps.belief_update(m, belief, action, obs)
        assert float(out.probs.sum()) == pytest.approx(1.0, abs=1e-9)
        assert np.all(out.probs >= 0.0)


class TestFilterOracleEquivalence:
    def test_recursive_filter_equals_enumeration(self):
        rng = Rng(20240501)
        for _ in range(20):
            S = 2 + rng.randint(3)
            m = random_model(rng, S, 1 + rng.randint(2), 1 + rng.randint(2),
                             1 + rng.randint(2), 2 + rng.randint(2),
                             6)
            T = 1 + rng.randint(6)
            actions = [rng.randint(m.n_defender_actions) for _ in range(T)]
            obs = [ps.Observation(tuple(rng.randint(spec.bins)
                                        for spec in m.metrics))
                   for _ in range(T)]
            b = ps.initial_belief(m)
            for a, o in zip(actions, obs):
                b = ps.belief_update(m, b, a, o)
            assert b.probs == pytest.approx(
                brute_force_posterior(m, actions, obs), abs=1e-9)


class TestPingInvisibility:
    def test_update_equals_prediction_on_ping_steps(self, default_model):
        variant = ps.ping_invisibility_variant(default_model)
        assert ps.validate_model(variant).ok
        policy = ps.ThresholdPolicy(0.6, ps.intrusion_state_indices(variant),
                                    variant.n_states)
        seeder = Rng(99)
        checked = 0
        for _ in range(10):
            trace = ps.simulate_episode(variant, policy, seeder.spawn_seed())
            belief = ps.initial_belief(variant)
            for step in trace.steps:
                action = variant.defender_action_index(step.defender_action)
                updated = ps.belief_update(variant, belief, action,
                                           step.observation)
                if step.attacker_action == "ping_scan":
                    predicted = predict_belief(variant, belief, action)
                    predicted = predicted / predicted.sum()
                    assert np.max(np.abs(updated.probs - predicted)) <= 1e-12
                    checked += 1
                belief = updated
        assert checked > 20

    def test_ping_rows_equal_passive_rows_in_default(self, default_model):
        ping = default_model.attacker_action_index("ping_scan")
        passive = default_model.attacker_action_index("passive")
        for z in default_model.observation:
            assert np.array_equal(z[:, ping, :], z[:, passive, :])


def test_expected_observation_rows_are_distributions(default_model):
    rows = ps.expected_observation_rows(
        default_model, default_model.initial_distribution)
    assert len(rows) == default_model.n_metrics
    for row in rows:
        assert float(np.sum(row)) == pytest.approx(1.0, abs=1e-9)


def test_likelihood_marginal_matches_factored_form(default_model):
    obs = ps.Observation((3, 1, 5))
    marginal = state_observation_likelihoods(default_model, obs)
    for s in range(default_model.n_states):
        direct = sum(
            default_model.attacker_behavior[s, a]
            * ps.observation_likelihood(default_model, s, a, obs)
            for a in range(default_model.n_attacker_actions))
        assert marginal[s] == pytest.approx(direct, abs=1e-12)
