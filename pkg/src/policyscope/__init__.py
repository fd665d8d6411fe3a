"""policyscope: step through, break on, and rewind episodes of an
intrusion-prevention POMDP to examine what a learned security policy does and
why.

The package is organized around six pieces: the tabular POMDP core with its
exact belief filter (:mod:`model`, :mod:`scenario`, :mod:`simulate`), policy
representations and from-scratch policy-gradient training (:mod:`policies`,
:mod:`net`, :mod:`ppo`), trace persistence and observation-model estimation
(:mod:`trace`, :mod:`store`, :mod:`estimate`), the stepping debugger
(:mod:`debugger`), an HTTP API (:mod:`server`), and a CLI (:mod:`cli`).
"""

__version__ = "0.1.0"

from .analysis import defend_probability_by_attacker_action, find_false_alarms
from .debugger import Breakpoint, BeliefThreshold, Conjunction, DebugSession, \
    DefenderActionIs, Frame, HaltReason, MetricThreshold, ReplaySource, \
    SimulationSource, TimeEquals, WhatIfReport
from .estimate import EstimationConfig, ObservationKernelEstimate, \
    estimate_observation_model
from .evaluate import EvalStats, evaluate_policy
from .model import Belief, DefenderAction, MetricSpec, Observation, PomdpModel, \
    ValidationReport, belief_update, expected_observation_rows, initial_belief, \
    observation_likelihood, predict_belief, validate_model
from .net import PolicyParameters, init_parameters, network_forward
from .policies import ActionDistribution, ConstantPolicy, NetworkPolicy, \
    Policy, PolicyInput, RandomPolicy, ThresholdPolicy, feature_vector, \
    load_policy, never_defend_policy, network_policy_for, save_policy
from .ppo import RolloutBatch, TrainingConfig, TrainingStats, gae_advantages, \
    ppo_surrogate, ppo_train
from .rng import Rng
from .scenario import ScenarioConfig, build_intrusion_scenario, \
    intrusion_state_indices, load_scenario_config, no_intrusion_variant, \
    ping_invisibility_variant, save_scenario_config
from .simulate import environment_step, replay_beliefs, simulate_episode
from .store import TraceStore
from .trace import EpisodeTrace, StepRecord, lines_to_trace, read_trace, \
    text_to_trace, trace_to_lines, trace_to_text, write_trace

__all__ = [name for name in dir() if not name.startswith("_")]
