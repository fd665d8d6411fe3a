import copy
import dataclasses

import numpy as np
import pytest

import policyscope as ps
from policyscope.debugger import BeliefThreshold, Conjunction, DebugSession, \
    DefenderActionIs, MetricThreshold, ReplaySource, SimulationSource, TimeEquals
from policyscope.errors import FinishedError, IncompatibilityError, \
    NotFoundError, PreconditionError, RangeError
from policyscope.scenario import ScenarioConfig


@pytest.fixture
def threshold_policy(default_model):
    return ps.ThresholdPolicy(0.8, ps.intrusion_state_indices(default_model),
                              default_model.n_states)


@pytest.fixture
def sim_session(default_model, threshold_policy):
    return DebugSession(SimulationSource(default_model, threshold_policy, 7))


@pytest.fixture
def replay_setup(default_model):
    trace = ps.simulate_episode(default_model, ps.RandomPolicy(2), 13)
    return trace, default_model


def frames_equal(a, b) -> bool:
    va, vb = dict(vars(a)), dict(vars(b))
    return va == vb


class TestCreate:
    def test_frame0_belief_is_rho1(self, sim_session, default_model):
        f = sim_session.current_frame
        assert f.t == 0
        assert f.belief.tolist() == [1.0, 0.0, 0.0, 0.0]
        assert f.defender_action is None and f.observation is None
        assert sim_session.status == "halted"
        assert sim_session.cursor == 0

    def test_replay_frame0_belief_is_rho1(self, replay_setup):
        trace, model = replay_setup
        s = DebugSession(ReplaySource(trace, model))
        assert s.current_frame.belief.tolist() \
            == model.initial_distribution.tolist()

    def test_replay_scenario_mismatch_rejected(self, replay_setup):
        trace, _ = replay_setup
        other = ps.build_intrusion_scenario(ScenarioConfig(name="other", bins=8))
        with pytest.raises(IncompatibilityError):
            DebugSession(ReplaySource(trace, other))

    def test_incompatible_policy_rejected(self, default_model):
        with pytest.raises(IncompatibilityError):
            DebugSession(SimulationSource(default_model, ps.RandomPolicy(3), 1))

    def test_frame0_previews_first_action(self, sim_session):
        assert sim_session.current_frame.action_distribution is not None


class TestStepAndHistory:
    def test_frames_match_batch_simulation(self, default_model, threshold_policy):
        trace = ps.simulate_episode(default_model, threshold_policy, 7)
        session = DebugSession(SimulationSource(default_model, threshold_policy, 7))
        session.continue_run()
        assert session.status == "finished"
        assert len(session.frames) == len(trace.steps) + 1
        for record, frame in zip(trace.steps, session.frames[1:]):
            assert frame.defender_action == record.defender_action
            assert frame.observation == record.observation
            assert frame.attacker_action == record.attacker_action
            assert frame.hidden_state == record.state
            assert frame.reward == record.reward
            assert frame.belief.tolist() == record.belief_after

    def test_interleaved_walk_equals_straight_run(self, default_model,
                                                  threshold_policy):
        straight = DebugSession(SimulationSource(default_model, threshold_policy, 3))
        straight.continue_run()
        wandering = DebugSession(SimulationSource(default_model, threshold_policy, 3))
        wandering.step(4)
        wandering.reverse(2)
        wandering.step(1)
        wandering.reverse(3)
        wandering.continue_run()
        assert len(wandering.frames) == len(straight.frames)
        for a, b in zip(straight.frames, wandering.frames):
            assert frames_equal(a, b)

    def test_step_returns_to_visited_frames_without_resampling(self, sim_session):
        sim_session.step(5)
        fifth = sim_session.current_frame
        sim_session.reverse(1)
        assert sim_session.step(1) is fifth

    def test_step_when_finished_raises(self, default_model, threshold_policy):
        s = DebugSession(SimulationSource(default_model, threshold_policy, 7))
        s.continue_run()
        with pytest.raises(FinishedError):
            s.step()

    def test_step_count_validated(self, sim_session):
        with pytest.raises(RangeError):
            sim_session.step(0)

    def test_cumulative_reward_telescopes(self, sim_session):
        sim_session.continue_run()
        frames = sim_session.frames
        for prev, cur in zip(frames, frames[1:]):
            assert cur.cumulative_reward - prev.cumulative_reward \
                == pytest.approx(cur.reward, abs=1e-12)

    def test_horizon_halt_reason(self, default_model):
        never = ps.never_defend_policy(default_model)
        config = ScenarioConfig(intrusion_start_prob=0.0)
        model = ps.build_intrusion_scenario(config)
        s = DebugSession(SimulationSource(model, never, 1, horizon=5))
        f = s.continue_run()
        assert s.status == "finished"
        assert f.t == 5
        assert f.halt_reason.kind == "horizon"


class TestReverse:
    def test_step_k_reverse_k_restores_frame0(self, sim_session):
        frame0 = copy.deepcopy(sim_session.current_frame)
        sim_session.step(6)
        restored = sim_session.reverse(6)
        assert frames_equal(restored, frame0)
        assert sim_session.cursor == 0

    def test_reverse_too_far_is_range_error(self, sim_session):
        with pytest.raises(RangeError):
            sim_session.reverse(1)
        sim_session.step(2)
        with pytest.raises(RangeError):
            sim_session.reverse(3)

    def test_reverse_resets_finished_status(self, default_model,
                                            threshold_policy):
        s = DebugSession(SimulationSource(default_model, threshold_policy, 7))
        s.continue_run()
        s.reverse(1)
        assert s.status == "halted"
        s.step(1)
        assert s.status == "finished"


class TestBreakpoints:
    def test_time_breakpoint_stops_mid_step(self, sim_session):
        sim_session.add_breakpoint(TimeEquals(3))
        f = sim_session.step(10)
        assert f.t == 3
        assert f.halt_reason.kind == "breakpoint"
        assert f.halt_reason.breakpoint_id == 1

    def test_soundness_and_minimality(self, default_model, threshold_policy):
        # scan a run for the first frame matching the predicate, then check
        # continue halts exactly there and nowhere earlier
        probe = DebugSession(SimulationSource(default_model, threshold_policy, 7))
        probe.continue_run()
        matching = [f.t for f in probe.frames
                    if f.observation is not None and f.observation.bins[0] >= 6]
        assert matching, "fixture seed produced no loud observation"

        s = DebugSession(SimulationSource(default_model, threshold_policy, 7))
        s.add_breakpoint(MetricThreshold("ids_alerts", ">=", 6))
        f = s.continue_run()
        assert f.t == matching[0]
        f = s.continue_run()
        assert f.t == matching[1] if len(matching) > 1 else s.status == "finished"

    def test_lowest_id_wins_on_tie(self, sim_session):
        sim_session.add_breakpoint(TimeEquals(2))
        sim_session.add_breakpoint(Conjunction((TimeEquals(2),)))
        f = sim_session.step(5)
        assert f.halt_reason.breakpoint_id == 1

    def test_removed_breakpoint_no_longer_halts(self, sim_session):
        bp = sim_session.add_breakpoint(TimeEquals(2))
        sim_session.remove_breakpoint(bp)
        f = sim_session.step(4)
        assert f.t == 4 and f.halt_reason is None

    def test_list_contains_predicate_verbatim(self, sim_session):
        pred = BeliefThreshold("compromised", ">=", 0.8)
        bp_id = sim_session.add_breakpoint(pred)
        listed = sim_session.list_breakpoints()
        assert [bp.id for bp in listed] == [bp_id]
        assert listed[0].predicate == pred

    def test_remove_unknown_id(self, sim_session):
        with pytest.raises(NotFoundError):
            sim_session.remove_breakpoint(99)

    def test_predicate_validation(self, sim_session):
        with pytest.raises(RangeError):
            sim_session.add_breakpoint(DefenderActionIs("retreat"))
        with pytest.raises(RangeError):
            sim_session.add_breakpoint(BeliefThreshold("nope", ">=", 0.5))
        with pytest.raises(RangeError):
            sim_session.add_breakpoint(MetricThreshold("ids_alerts", ">", 3))

    def test_belief_threshold_halts_on_informative_scenario(self, default_model):
        policy = ps.never_defend_policy(default_model)
        s = DebugSession(SimulationSource(default_model, policy, 7))
        s.add_breakpoint(BeliefThreshold("compromised", ">=", 0.8))
        f = s.continue_run()
        if s.status != "finished":
            assert f.halt_reason.kind == "breakpoint"
            assert f.belief[default_model.state_index("compromised")] >= 0.8
            earlier = [fr for fr in s.frames[:f.t]
                       if fr.belief[default_model.state_index("compromised")] >= 0.8]
            assert earlier == []

    def test_defender_action_breakpoint(self, default_model, threshold_policy):
        s = DebugSession(SimulationSource(default_model, threshold_policy, 7))
        s.add_breakpoint(DefenderActionIs("defend"))
        f = s.continue_run()
        if s.status != "finished":
            assert f.defender_action == "defend"


class TestWhatIf:
    def test_prediction_at_frame0(self, sim_session, default_model):
        report = sim_session.what_if("continue")
        cont = default_model.defender_action_index("continue")
        expected = default_model.transition[:, cont, :].T \
            @ default_model.initial_distribution
        assert report.predicted_belief.tolist() \
            == pytest.approx(expected.tolist(), abs=1e-12)
        assert report.expected_reward == 1.0

    def test_session_untouched(self, sim_session):
        sim_session.step(3)
        before = copy.deepcopy(vars(sim_session.current_frame))
        cursor = sim_session.cursor
        n_frames = len(sim_session.frames)
        sim_session.what_if("defend")
        assert vars(sim_session.current_frame) == before
        assert sim_session.cursor == cursor
        assert len(sim_session.frames) == n_frames

    def test_what_if_then_step_unchanged(self, default_model, threshold_policy):
        plain = DebugSession(SimulationSource(default_model, threshold_policy, 5))
        plain.step(4)
        probed = DebugSession(SimulationSource(default_model, threshold_policy, 5))
        probed.step(2)
        probed.what_if("defend")
        probed.what_if("continue")
        probed.step(2)
        assert frames_equal(plain.current_frame, probed.current_frame)

    def test_finished_session_rejected(self, default_model, threshold_policy):
        s = DebugSession(SimulationSource(default_model, threshold_policy, 7))
        s.continue_run()
        with pytest.raises(PreconditionError):
            s.what_if("defend")

    def test_unknown_action_rejected(self, sim_session):
        with pytest.raises(RangeError):
            sim_session.what_if("nuke")
        with pytest.raises(RangeError):
            sim_session.what_if(9)


class TestReplay:
    def test_fidelity_field_for_field(self, replay_setup):
        trace, model = replay_setup
        s = DebugSession(ReplaySource(trace, model))
        s.continue_run()
        assert len(s.frames) == len(trace.steps) + 1
        beliefs = ps.replay_beliefs(model, trace)
        for record, frame, belief in zip(trace.steps, s.frames[1:], beliefs[1:]):
            assert frame.defender_action == record.defender_action
            assert frame.observation == record.observation
            assert frame.reward == record.reward
            assert frame.attacker_action == record.attacker_action
            assert frame.hidden_state == record.state
            assert frame.belief.tolist() == belief.tolist()

    def test_exhausting_trace_finishes(self, replay_setup):
        trace, model = replay_setup
        s = DebugSession(ReplaySource(trace, model))
        f = s.step(len(trace.steps))
        assert s.status == "finished"
        assert f.halt_reason.kind in ("terminal", "horizon")

    def test_overlay_policy_distribution_recorded(self, replay_setup):
        trace, model = replay_setup
        overlay = ps.ThresholdPolicy(0.5, ps.intrusion_state_indices(model),
                                     model.n_states)
        s = DebugSession(ReplaySource(trace, model, overlay))
        s.step(3)
        for frame in s.frames[1:]:
            assert frame.action_distribution is not None

    def test_without_overlay_no_distribution(self, replay_setup):
        trace, model = replay_setup
        s = DebugSession(ReplaySource(trace, model))
        s.step(2)
        assert all(f.action_distribution is None for f in s.frames)

    def test_impossible_observation_halts_with_reason(self, default_model):
        trace = ps.simulate_episode(default_model, ps.RandomPolicy(2), 13)
        # a model variant that forbids the recorded third observation
        broken = trace.steps[2].observation.bins[0]
        observation = [np.array(z) for z in default_model.observation]
        z = observation[0]
        z[:, :, broken] = 0.0
        z /= z.sum(axis=2, keepdims=True)
        impossible_model = dataclasses.replace(
            default_model, observation=tuple(observation), config_hash="")
        trace = dataclasses.replace(trace,
                                    config_hash=impossible_model.config_hash)
        s = DebugSession(ReplaySource(trace, impossible_model))
        f = s.continue_run()
        assert s.status == "halted"
        assert s.cursor == 2
        assert f.halt_reason.kind == "impossible_observation"
        again = s.continue_run()  # still stuck, still reported, no crash
        assert again.halt_reason.kind == "impossible_observation"


class TestAutoplayAndHalt:
    def test_halt_on_manual_session_rejected(self, sim_session):
        with pytest.raises(PreconditionError):
            sim_session.halt()

    def test_autoplay_tick_and_halt(self, default_model, threshold_policy):
        s = DebugSession(SimulationSource(default_model, threshold_policy, 2),
                         mode="autoplay", autoplay_interval=0.01)
        s.begin_autoplay()
        assert s.status == "running"
        s.autoplay_tick()
        assert s.current_frame.t == 1
        f = s.halt()
        assert s.status == "halted"
        assert f.halt_reason.kind == "user"

    def test_commands_rejected_while_running(self, default_model,
                                             threshold_policy):
        s = DebugSession(SimulationSource(default_model, threshold_policy, 2),
                         mode="autoplay")
        s.begin_autoplay()
        with pytest.raises(PreconditionError):
            s.step()
        with pytest.raises(PreconditionError):
            s.what_if("defend")

    def test_autoplay_stops_on_breakpoint(self, default_model,
                                          threshold_policy):
        s = DebugSession(SimulationSource(default_model, threshold_policy, 2),
                         mode="autoplay")
        s.add_breakpoint(TimeEquals(2))
        s.begin_autoplay()
        s.autoplay_tick()
        assert s.status == "running"
        f = s.autoplay_tick()
        assert s.status == "halted"
        assert f.halt_reason.kind == "breakpoint"


class TestFork:
    def test_fork_copies_prefix_and_diverges(self, default_model,
                                             threshold_policy):
        s = DebugSession(SimulationSource(default_model, threshold_policy, 7))
        s.step(5)
        fork = s.fork(1234)
        assert fork.session_id != s.session_id
        assert fork.cursor == 5
        for a, b in zip(s.frames[:6], fork.frames):
            assert a.t == b.t and a.observation == b.observation
        fork.continue_run()
        s.continue_run()
        own = [f.observation for f in s.frames[6:]]
        forked = [f.observation for f in fork.frames[6:]]
        assert own != forked  # fresh seed, fresh randomness

    def test_fork_leaves_parent_untouched(self, sim_session):
        sim_session.step(4)
        frames_before = len(sim_session.frames)
        sim_session.fork(9)
        assert len(sim_session.frames) == frames_before
        assert sim_session.cursor == 4

    def test_replay_fork_needs_overlay(self, replay_setup):
        trace, model = replay_setup
        s = DebugSession(ReplaySource(trace, model))
        s.step(2)
        with pytest.raises(IncompatibilityError):
            s.fork(1)

    def test_replay_fork_continues_in_simulation(self, replay_setup):
        trace, model = replay_setup
        overlay = ps.ThresholdPolicy(0.5, ps.intrusion_state_indices(model),
                                     model.n_states)
        s = DebugSession(ReplaySource(trace, model, overlay))
        s.step(3)
        fork = s.fork(55)
        fork.step(2)
        assert fork.current_frame.t == 5
        assert fork.frames[3].observation == s.frames[3].observation
