"""Clipped-surrogate policy-gradient training with generalized advantage
estimation, written directly against the network in :mod:`policyscope.net`.

The loss for a batch is

    L = -mean(min(r * A, clip(r, 1-eps, 1+eps) * A))
        + value_coeff * mean((v - returns)^2)
        - entropy_coeff * mean(H)

with r = exp(log pi(a|x) - old_log_prob).  :func:`ppo_surrogate` returns this
loss together with its exact analytic gradient; the backward pass is written
out by hand and is held to a finite-difference check in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericError, RangeError, TrainingDivergedError
from .model import PomdpModel, belief_update, initial_belief
from .net import Adam, PolicyParameters, flatten_parameters, forward_batch, \
    init_parameters, unflatten_like
from .policies import feature_vector, PolicyInput
from .rng import Rng
from .simulate import environment_step


@dataclass(frozen=True)
class TrainingConfig:
    discount: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    learning_rate: float = 3e-4
    epochs_per_iteration: int = 4
    minibatch_size: int = 64
    rollout_episodes: int = 32
    iterations: int = 150
    entropy_coeff: float = 0.01
    value_coeff: float = 0.5
    hidden_sizes: tuple[int, ...] = (64, 64)
    seed: int = 1

    def validate(self) -> None:
        if not (0.0 < self.discount <= 1.0):
            raise ConfigError(f"discount must be in (0, 1], got {self.discount}")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.clip <= 0.0:
            raise ConfigError(f"clip must be > 0, got {self.clip}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("epochs_per_iteration", "minibatch_size", "rollout_episodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.entropy_coeff < 0.0 or self.value_coeff < 0.0:
            raise ConfigError("entropy_coeff and value_coeff must be >= 0")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"bad hidden sizes {self.hidden_sizes}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown training config fields: {sorted(unknown)}")
        if "hidden_sizes" in data:
            data = dict(data, hidden_sizes=tuple(data["hidden_sizes"]))
        cfg = cls(**data)
        cfg.validate()
        return cfg


@dataclass
class RolloutBatch:
    features: np.ndarray       # (N, d)
    actions: np.ndarray        # (N,) int
    old_log_probs: np.ndarray  # (N,)
    advantages: np.ndarray     # (N,)
    returns: np.ndarray        # (N,)

    def take(self, idx) -> "RolloutBatch":
        return RolloutBatch(self.features[idx], self.actions[idx],
                            self.old_log_probs[idx], self.advantages[idx],
                            self.returns[idx])


@dataclass
class IterationStats:
    iteration: int
    mean_return: float
    policy_loss: float
    value_loss: float
    entropy: float
    total_loss: float

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "mean_return": self.mean_return,
                "policy_loss": self.policy_loss, "value_loss": self.value_loss,
                "entropy": self.entropy, "total_loss": self.total_loss}


@dataclass
class TrainingStats:
    iterations: list[IterationStats] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"iterations": [it.to_dict() for it in self.iterations]}


def gae_advantages(rewards, values, terminal_value: float, discount: float,
                   gae_lambda: float) -> tuple[np.ndarray, np.ndarray]:
    """Exponentially weighted advantage estimates and their value targets.

    delta_t = r_t + discount * v_{t+1} - v_t  (with v_n = terminal_value);
    A_t = sum_k (discount * lambda)^k delta_{t+k}; returns_t = A_t + v_t.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.ndim != 1 or rewards.shape != values.shape or rewards.size < 1:
        raise RangeError(
            f"rewards and values must be equal-length vectors, got "
            f"{rewards.shape} and {values.shape}")
    n = rewards.size
    next_values = np.append(values[1:], terminal_value)
    deltas = rewards + discount * next_values - values
    advantages = np.empty(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        acc = deltas[t] + discount * gae_lambda * acc
        advantages[t] = acc
    return advantages, advantages + values


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def ppo_surrogate(params: PolicyParameters, batch: RolloutBatch,
                  config: TrainingConfig) -> tuple[float, PolicyParameters]:
    """Loss and its exact gradient (a parameters-shaped container).

    Raises :class:`NumericError` naming the term that first went non-finite.
    """
    n = batch.features.shape[0]
    if n < 1:
        raise RangeError("batch must be non-empty")
    logits, values, hiddens = forward_batch(params, batch.features)
    log_probs = _log_softmax(logits)
    probs = np.exp(log_probs)
    idx = np.arange(n)
    log_pi_a = log_probs[idx, batch.actions]

    ratios = np.exp(log_pi_a - batch.old_log_probs)
    if not np.all(np.isfinite(ratios)):
        raise NumericError("non-finite value in the probability ratios")
    clipped = np.clip(ratios, 1.0 - config.clip, 1.0 + config.clip)
    unclipped_term = ratios * batch.advantages
    clipped_term = clipped * batch.advantages
    policy_loss = -float(np.minimum(unclipped_term, clipped_term).mean())

    value_errors = values - batch.returns
    value_loss = float((value_errors ** 2).mean())

    entropies = -(probs * log_probs).sum(axis=1)
    entropy = float(entropies.mean())

    loss = policy_loss + config.value_coeff * value_loss - config.entropy_coeff * entropy
    for name, term in (("policy loss", policy_loss), ("value loss", value_loss),
                       ("entropy", entropy)):
        if not math.isfinite(term):
            raise NumericError(f"non-finite value in the {name} term")

    # Backward pass.  The min selects the unclipped branch on ties, which
    # matches the derivative of the clipped branch in the pass-through region.
    active = unclipped_term <= clipped_term
    dlog_pi_a = np.where(active, -batch.advantages * ratios, 0.0) / n

    dlogits = dlog_pi_a[:, None] * (np.eye(params.layer_sizes[-1])[batch.actions] - probs)
    # entropy term: d(-c_e * mean(H))/dz = c_e/n * p * (log p + H)
    dlogits += (config.entropy_coeff / n) * probs * (log_probs + entropies[:, None])
    dvalues = (2.0 * config.value_coeff / n) * value_errors

    h_last = hiddens[-1]
    g_policy_w = h_last.T @ dlogits
    g_policy_b = dlogits.sum(axis=0)
    g_value_w = h_last.T @ dvalues
    g_value_b = np.array([dvalues.sum()])

    dh = dlogits @ params.policy_weight.T + dvalues[:, None] * params.value_weight[None, :]
    g_hidden_w: list[np.ndarray] = []
    g_hidden_b: list[np.ndarray] = []
    for layer in range(len(params.hidden_weights) - 1, -1, -1):
        h_out = hiddens[layer]
        h_in = batch.features if layer == 0 else hiddens[layer - 1]
        dz = dh * (1.0 - h_out ** 2)
        g_hidden_w.append(h_in.T @ dz)
        g_hidden_b.append(dz.sum(axis=0))
        if layer > 0:
            dh = dz @ params.hidden_weights[layer].T
    g_hidden_w.reverse()
    g_hidden_b.reverse()

    grad = replace(params, hidden_weights=tuple(g_hidden_w),
                   hidden_biases=tuple(g_hidden_b), policy_weight=g_policy_w,
                   policy_bias=g_policy_b, value_weight=g_value_w,
                   value_bias=g_value_b)
    if not grad.all_finite():
        raise NumericError("non-finite value in the gradient")
    return loss, grad


def _collect_rollout(model: PomdpModel, params: PolicyParameters,
                     metric_bins: tuple[int, ...], config: TrainingConfig,
                     rng: Rng) -> tuple[RolloutBatch, float]:
    """Run one batch of episodes under the current parameters and assemble
    the PPO batch (advantages already computed per episode)."""
    feats, acts, logps, advs, rets = [], [], [], [], []
    episode_returns = []
    horizon = model.horizon
    for _ in range(config.rollout_episodes):
        belief = initial_belief(model)
        state = rng.categorical(model.initial_distribution)
        last_obs = None
        rewards, values = [], []
        total = 0.0
        for t in range(1, horizon + 1):
            x = feature_vector(PolicyInput(belief, last_obs, t / horizon), metric_bins)
            logits, value, _ = forward_batch(params, x[None, :])
            logp_row = _log_softmax(logits)[0]
            action = rng.categorical(np.exp(logp_row))
            state, _, obs, reward = environment_step(model, state, action, rng)
            belief = belief_update(model, belief, action, obs)
            feats.append(x)
            acts.append(action)
            logps.append(logp_row[action])
            rewards.append(reward)
            values.append(value[0])
            total += reward
            last_obs = obs
            if model.is_terminal(state):
                break
        adv, ret = gae_advantages(rewards, values, 0.0, config.discount,
                                  config.gae_lambda)
        advs.append(adv)
        rets.append(ret)
        episode_returns.append(total)
    batch = RolloutBatch(
        features=np.array(feats),
        actions=np.array(acts, dtype=np.int64),
        old_log_probs=np.array(logps),
        advantages=np.concatenate(advs),
        returns=np.concatenate(rets),
    )
    return batch, float(np.mean(episode_returns))


def ppo_train(model: PomdpModel, config: TrainingConfig | None = None) \
        -> tuple[PolicyParameters, TrainingStats]:
    """Iterate rollout -> advantage estimation -> clipped-surrogate ascent.

    Deterministic given ``config.seed``.  Advantages are standardized per
    iteration before the update, which stabilizes the scale-sensitive clip.
    Raises :class:`TrainingDivergedError` carrying the last finite parameter
    snapshot if an update produces non-finite weights.
    """
    config = config or TrainingConfig()
    config.validate()
    metric_bins = tuple(m.bins for m in model.metrics)
    input_dim = model.n_states + model.n_metrics + 1

    rng = Rng(config.seed)
    params = init_parameters(input_dim, config.hidden_sizes,
                             model.n_defender_actions, rng)
    stats = TrainingStats()
    optimizer = Adam(flatten_parameters(params).size, config.learning_rate)

    for iteration in range(config.iterations):
        checkpoint = params
        batch, mean_return = _collect_rollout(model, params, metric_bins, config, rng)
        adv = batch.advantages
        batch.advantages = (adv - adv.mean()) / (adv.std() + 1e-8)

        n = batch.features.shape[0]
        losses = {"policy": [], "value": [], "entropy": [], "total": []}
        for _ in range(config.epochs_per_iteration):
            order = rng.permutation(n)
            for start in range(0, n, config.minibatch_size):
                idx = order[start:start + config.minibatch_size]
                mini = batch.take(np.array(idx))
                loss, grad = ppo_surrogate(params, mini, config)
                vec = optimizer.step(flatten_parameters(params),
                                     flatten_parameters(grad))
                params = unflatten_like(params, vec)
                if not params.all_finite():
                    raise TrainingDivergedError(
                        f"parameters became non-finite at iteration {iteration}",
                        checkpoint=checkpoint)
                # bookkeeping on the minibatch the update was computed from
                losses["total"].append(loss)
        # summary terms recomputed once on the full batch for reporting
        full_loss, _ = ppo_surrogate(params, batch, config)
        logits, values, _ = forward_batch(params, batch.features)
        log_probs = _log_softmax(logits)
        probs = np.exp(log_probs)
        entropy = float(-(probs * log_probs).sum(axis=1).mean())
        value_loss = float(((values - batch.returns) ** 2).mean())
        policy_loss = full_loss - config.value_coeff * value_loss \
            + config.entropy_coeff * entropy
        params = replace(params, version=params.version + 1)
        stats.iterations.append(IterationStats(
            iteration=iteration,
            mean_return=mean_return,
            policy_loss=policy_loss,
            value_loss=value_loss,
            entropy=entropy,
            total_loss=float(np.mean(losses["total"])),
        ))
    return params, stats
