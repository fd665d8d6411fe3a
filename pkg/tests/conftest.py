import time
from typing import NamedTuple

import numpy as np
import pytest

import policyscope as ps
from policyscope.ppo import PolicyParameters, TrainingConfig, TrainingStats, \
    ppo_train
from policyscope.rng import Rng


class TrainedPolicy(NamedTuple):
    params: PolicyParameters
    stats: TrainingStats
    policy: ps.NetworkPolicy
    seconds: float


@pytest.fixture(scope="session")
def default_model():
    return ps.build_intrusion_scenario()


@pytest.fixture(scope="session")
def trained(default_model) -> TrainedPolicy:
    """One full default-config training run shared by every test that needs a
    learned policy (training is deterministic, so this is a fixture, not a
    golden file)."""
    started = time.monotonic()
    params, stats = ppo_train(default_model, TrainingConfig())
    seconds = time.monotonic() - started
    policy = ps.network_policy_for(default_model, params)
    return TrainedPolicy(params, stats, policy, seconds)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reports = list(terminalreporter.stats.get("passed", [])) \
        + list(terminalreporter.stats.get("failed", []))
    acceptance = [r for r in reports if "test_acceptance" in r.nodeid
                  and r.when == "call"]
    if not acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for report in sorted(acceptance, key=lambda r: r.nodeid):
        name = report.nodeid.split("::")[-1]
        verdict = "PASS" if report.passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")


def random_model(rng: Rng, n_states: int, n_def: int, n_att: int,
                 n_metrics: int, bins: int, horizon: int) -> ps.PomdpModel:
    """Random valid tabular model (rows drawn from a flat Dirichlet)."""

    def rows(shape):
        flat = np.array([[-np.log(1.0 - rng.random()) for _ in range(shape[-1])]
                         for _ in range(int(np.prod(shape[:-1])))])
        flat /= flat.sum(axis=1, keepdims=True)
        return flat.reshape(shape)

    return ps.PomdpModel(
        state_names=tuple(f"s{i}" for i in range(n_states)),
        defender_actions=tuple(ps.DefenderAction(f"a{i}", float(i))
                               for i in range(n_def)),
        attacker_actions=tuple(f"k{i}" for i in range(n_att)),
        metrics=tuple(ps.MetricSpec(f"m{i}", bins) for i in range(n_metrics)),
        transition=rows((n_states, n_def, n_states)),
        attacker_behavior=rows((n_states, n_att)),
        observation=tuple(rows((n_states, n_att, bins)) for _ in range(n_metrics)),
        reward=np.zeros((n_states, n_def)),
        initial_distribution=rows((1, n_states))[0],
        horizon=horizon,
    )


def gae_double_sum(rewards, values, terminal_value, discount, lam):
    """Explicit definition: A_t = sum_k (discount*lam)^k * delta_{t+k}."""
    n = len(rewards)
    next_values = list(values[1:]) + [terminal_value]
    deltas = [rewards[t] + discount * next_values[t] - values[t]
              for t in range(n)]
    return np.array([
        sum((discount * lam) ** k * deltas[t + k] for k in range(n - t))
        for t in range(n)])


def random_surrogate_batch(rng: Rng, params, n=16, ratio_spread=0.05):
    """PPO batch whose old_log_probs come from slightly perturbed params."""
    from policyscope.net import flatten_parameters, forward_batch, unflatten_like
    from policyscope.ppo import RolloutBatch

    d = params.layer_sizes[0]
    n_actions = params.layer_sizes[-1]
    feats = np.array([[rng.normal() for _ in range(d)] for _ in range(n)])
    acts = np.array([rng.randint(n_actions) for _ in range(n)])
    vec = flatten_parameters(params)
    old = unflatten_like(params, vec + ratio_spread * np.array(
        [rng.normal() for _ in range(vec.size)]))
    logits, _, _ = forward_batch(old, feats)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return RolloutBatch(
        features=feats, actions=acts,
        old_log_probs=log_probs[np.arange(n), acts],
        advantages=np.array([rng.normal() for _ in range(n)]),
        returns=np.array([rng.normal() for _ in range(n)]),
    )


def randomized_network_params(rng: Rng, dims=(6, (8, 8), 3), scale=0.3):
    from policyscope.net import flatten_parameters, init_parameters, \
        unflatten_like

    params = init_parameters(dims[0], dims[1], dims[2], rng)
    vec = flatten_parameters(params)
    return unflatten_like(
        params, vec + scale * np.array([rng.normal() for _ in range(vec.size)]))


def surrogate_gradcheck(seed, h=1e-5, clip_margin=1e-3) -> float:
    """Worst per-coordinate relative error between the analytic surrogate
    gradient and central finite differences for one seeded draw."""
    from policyscope.net import flatten_parameters, forward_batch, \
        unflatten_like
    from policyscope.ppo import TrainingConfig, ppo_surrogate

    rng = Rng(seed)
    params = randomized_network_params(rng)
    batch = random_surrogate_batch(rng, params)
    config = TrainingConfig()
    # keep ratios away from the clip kinks so the analytic derivative and the
    # central difference estimate the same one-sided limit
    logits, _, _ = forward_batch(params, batch.features)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    ratios = np.exp(log_probs[np.arange(len(batch.actions)), batch.actions]
                    - batch.old_log_probs)
    for kink in (1.0 - config.clip, 1.0 + config.clip):
        assert np.min(np.abs(ratios - kink)) > clip_margin, \
            "fixture landed on a clip kink; pick another seed"
    _, grad = ppo_surrogate(params, batch, config)
    grad_vec = flatten_parameters(grad)
    base = flatten_parameters(params)
    worst = 0.0
    for i in range(base.size):
        up, down = base.copy(), base.copy()
        up[i] += h
        down[i] -= h
        loss_up, _ = ppo_surrogate(unflatten_like(params, up), batch, config)
        loss_dn, _ = ppo_surrogate(unflatten_like(params, down), batch, config)
        fd = (loss_up - loss_dn) / (2 * h)
        rel = abs(fd - grad_vec[i]) / max(abs(fd), abs(grad_vec[i]), 1e-8)
        worst = max(worst, rel)
    return worst


def brute_force_posterior(model: ps.PomdpModel, actions, observations) -> np.ndarray:
    """Posterior over the final hidden state by enumerating every trajectory
    (the filter's independent oracle; no recursion anywhere)."""
    from policyscope.model import state_observation_likelihoods

    S = model.n_states
    T = len(actions)
    likelihoods = [state_observation_likelihoods(model, o) for o in observations]
    trajs = np.indices((S,) * (T + 1)).reshape(T + 1, -1)
    weight = model.initial_distribution[trajs[0]]
    for t in range(T):
        weight = weight * model.transition[trajs[t], actions[t], trajs[t + 1]]
        weight = weight * likelihoods[t][trajs[t + 1]]
    posterior = np.zeros(S)
    np.add.at(posterior, trajs[T], weight)
    return posterior / posterior.sum()
