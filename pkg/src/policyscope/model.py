"""Finite POMDP representation, validation, and Bayesian belief filtering.

A :class:`PomdpModel` is a dense tabular model:

* ``transition[s, a_def, s']``        next-state kernel per defender action
* ``attacker_behavior[s, a_att]``     activity process emitting attacker
  actions inside hidden state ``s`` (an environment-internal process, not a
  strategic player)
* ``observation[m][s, a_att, b]``     per-metric bin distributions given the
  successor state and the attacker action realized in it
* ``reward[s, a_def]``                defender reward on the source state

Metrics are conditionally independent given (successor state, attacker
action), so an observation's likelihood is the product of its per-metric bin
probabilities.  The belief filter is the exact recursive Bayes update over
this factorization.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ImpossibleObservationError, ModelInvalidError, RangeError

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class MetricSpec:
    """A named observable metric discretized into ``bins`` bins (last bin is
    the overflow bucket for unbounded counts)."""

    name: str
    bins: int


@dataclass(frozen=True)
class DefenderAction:
    name: str
    cost: float


@dataclass(frozen=True)
class Observation:
    """One bin index per metric, in metric declaration order."""

    bins: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bins", tuple(int(b) for b in self.bins))


@dataclass(frozen=True, eq=False)
class Belief:
    """Probability vector over hidden states."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def __eq__(self, other) -> bool:
        return isinstance(other, Belief) and np.array_equal(self.probs, other.probs)

    def __getitem__(self, i: int) -> float:
        return float(self.probs[i])

    def tolist(self) -> list[float]:
        return [float(x) for x in self.probs]


def _as_readonly(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PomdpModel:
    """Immutable finite POMDP plus the identifiers of the scenario it was
    built from.  Safe to share across threads once constructed."""

    state_names: tuple[str, ...]
    defender_actions: tuple[DefenderAction, ...]
    attacker_actions: tuple[str, ...]
    metrics: tuple[MetricSpec, ...]
    transition: np.ndarray          # (S, A_def, S)
    attacker_behavior: np.ndarray   # (S, A_att)
    observation: tuple[np.ndarray, ...]  # per metric: (S, A_att, B_m)
    reward: np.ndarray              # (S, A_def)
    initial_distribution: np.ndarray  # (S,)
    horizon: int
    terminal_states: frozenset[int] = frozenset()
    scenario_name: str = "custom"
    config_hash: str = ""

    def __post_init__(self):
        object.__setattr__(self, "state_names", tuple(self.state_names))
        object.__setattr__(self, "defender_actions", tuple(self.defender_actions))
        object.__setattr__(self, "attacker_actions", tuple(self.attacker_actions))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "transition", _as_readonly(self.transition))
        object.__setattr__(self, "attacker_behavior", _as_readonly(self.attacker_behavior))
        object.__setattr__(self, "observation", tuple(_as_readonly(z) for z in self.observation))
        object.__setattr__(self, "reward", _as_readonly(self.reward))
        object.__setattr__(self, "initial_distribution", _as_readonly(self.initial_distribution))
        object.__setattr__(self, "terminal_states", frozenset(int(s) for s in self.terminal_states))
        if not self.config_hash:
            object.__setattr__(self, "config_hash", self._fingerprint())

    def _fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.state_names, tuple(a.name for a in self.defender_actions),
                       self.attacker_actions,
                       tuple((m.name, m.bins) for m in self.metrics),
                       self.horizon, tuple(sorted(self.terminal_states)))).encode())
        for arr in (self.transition, self.attacker_behavior, self.reward,
                    self.initial_distribution, *self.observation):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:12]

    # -- space helpers -----------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def n_defender_actions(self) -> int:
        return len(self.defender_actions)

    @property
    def n_attacker_actions(self) -> int:
        return len(self.attacker_actions)

    @property
    def n_metrics(self) -> int:
        return len(self.metrics)

    def state_index(self, name: str) -> int:
        try:
            return self.state_names.index(name)
        except ValueError:
            raise RangeError(f"unknown state {name!r}") from None

    def defender_action_index(self, name: str) -> int:
        for i, a in enumerate(self.defender_actions):
            if a.name == name:
                return i
        raise RangeError(f"unknown defender action {name!r}")

    def attacker_action_index(self, name: str) -> int:
        try:
            return self.attacker_actions.index(name)
        except ValueError:
            raise RangeError(f"unknown attacker action {name!r}") from None

    def metric_index(self, name: str) -> int:
        for i, m in enumerate(self.metrics):
            if m.name == name:
                return i
        raise RangeError(f"unknown metric {name!r}")

    def is_terminal(self, state: int) -> bool:
        return int(state) in self.terminal_states


@dataclass
class ValidationReport:
    """Every violated invariant of a model, one message per violation."""

    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues


def _check_rows(issues: list[str], arr: np.ndarray, what: str, labels) -> None:
    """Append one issue per row of ``arr`` (last axis) that is not a
    probability distribution."""
    flat = arr.reshape(-1, arr.shape[-1])
    sums = flat.sum(axis=1)
    for idx in range(flat.shape[0]):
        row = flat[idx]
        where = labels(np.unravel_index(idx, arr.shape[:-1]))
        if np.any(row < 0.0) or np.any(row > 1.0):
            issues.append(f"{what} {where}: entries outside [0, 1]")
        if abs(sums[idx] - 1.0) > ROW_SUM_TOL:
            issues.append(f"{what} {where}: row sums to {sums[idx]:.12g}, expected 1")


def validate_model(model: PomdpModel) -> ValidationReport:
    """Check every structural invariant; never raises, never stops early.

    An empty report means the model is valid.
    """
    issues: list[str] = []
    S = model.n_states
    A = model.n_defender_actions
    K = model.n_attacker_actions
    M = model.n_metrics

    if S < 2:
        issues.append(f"state space must have at least 2 states, got {S}")
    if A < 1:
        issues.append("at least one defender action is required")
    if K < 1:
        issues.append("at least one attacker action is required")
    if model.horizon < 1:
        issues.append(f"horizon must be >= 1, got {model.horizon}")
    for a in model.defender_actions:
        if a.cost < 0:
            issues.append(f"defender action {a.name!r}: cost must be >= 0, got {a.cost}")
    for m in model.metrics:
        if m.bins < 2:
            issues.append(f"metric {m.name!r}: bin count must be >= 2, got {m.bins}")
    for s in model.terminal_states:
        if not (0 <= s < S):
            issues.append(f"terminal state id {s} outside state space of size {S}")

    shape_ok = True
    expected = {
        "transition": (model.transition, (S, A, S)),
        "attacker_behavior": (model.attacker_behavior, (S, K)),
        "reward": (model.reward, (S, A)),
        "initial_distribution": (model.initial_distribution, (S,)),
    }
    for name, (arr, shape) in expected.items():
        if arr.shape != shape:
            issues.append(f"{name}: shape {arr.shape} does not match spaces {shape}")
            shape_ok = False
    if len(model.observation) != M:
        issues.append(
            f"observation: {len(model.observation)} metric kernels for {M} declared metrics")
        shape_ok = False
    else:
        for m, z in enumerate(model.observation):
            want = (S, K, model.metrics[m].bins)
            if z.shape != want:
                issues.append(
                    f"observation[{model.metrics[m].name}]: shape {z.shape} does not match {want}")
                shape_ok = False

    if not shape_ok:
        return ValidationReport(issues)

    for arr, name in ((model.transition, "transition"),
                      (model.attacker_behavior, "attacker_behavior")):
        if not np.all(np.isfinite(arr)):
            issues.append(f"{name}: contains non-finite entries")
    if not np.all(np.isfinite(model.reward)):
        issues.append("reward: contains non-finite entries")

    _check_rows(issues, model.transition, "transition",
                lambda ix: f"(state={model.state_names[ix[0]]}, "
                           f"action={model.defender_actions[ix[1]].name})")
    _check_rows(issues, model.attacker_behavior, "attacker_behavior",
                lambda ix: f"(state={model.state_names[ix[0]]})")
    _check_rows(issues, model.initial_distribution.reshape(1, -1),
                "initial_distribution", lambda ix: "(rho1)")
    for m, z in enumerate(model.observation):
        _check_rows(issues, z, f"observation[{model.metrics[m].name}]",
                    lambda ix: f"(state={model.state_names[ix[0]]}, "
                               f"attacker_action={model.attacker_actions[ix[1]]})")

    return ValidationReport(issues)


def require_valid(model: PomdpModel) -> None:
    report = validate_model(model)
    if not report.ok:
        raise ModelInvalidError(
            f"model failed validation with {len(report.issues)} issue(s)",
            {"issues": report.issues})


def initial_belief(model: PomdpModel) -> Belief:
    """The defender's prior: the initial state distribution, verbatim."""
    require_valid(model)
    return Belief(model.initial_distribution.copy())


def _check_obs(model: PomdpModel, obs: Observation) -> None:
    if len(obs.bins) != model.n_metrics:
        raise RangeError(
            f"observation has {len(obs.bins)} bins for {model.n_metrics} metrics")
    for m, b in enumerate(obs.bins):
        if not (0 <= b < model.metrics[m].bins):
            raise RangeError(
                f"bin {b} out of range for metric {model.metrics[m].name!r} "
                f"({model.metrics[m].bins} bins)")


def observation_likelihood(model: PomdpModel, state: int, attacker_action: int,
                           obs: Observation) -> float:
    """P(obs | successor state, attacker action): the product of the
    per-metric bin probabilities."""
    if not (0 <= state < model.n_states):
        raise RangeError(f"state id {state} out of range")
    if not (0 <= attacker_action < model.n_attacker_actions):
        raise RangeError(f"attacker action id {attacker_action} out of range")
    _check_obs(model, obs)
    p = 1.0
    for m, z in enumerate(model.observation):
        p *= float(z[state, attacker_action, obs.bins[m]])
    return p


def state_observation_likelihoods(model: PomdpModel, obs: Observation) -> np.ndarray:
    """L(obs | s') for every successor state, marginalized over the attacker
    activity process of s'."""
    _check_obs(model, obs)
    prod = np.ones((model.n_states, model.n_attacker_actions))
    for m, z in enumerate(model.observation):
        prod *= z[:, :, obs.bins[m]]
    return (model.attacker_behavior * prod).sum(axis=1)


def predict_belief(model: PomdpModel, belief: Belief, defender_action: int) -> np.ndarray:
    """Prediction step only: push the belief through the transition kernel."""
    if not (0 <= defender_action < model.n_defender_actions):
        raise RangeError(f"defender action id {defender_action} out of range")
    return model.transition[:, defender_action, :].T @ belief.probs


def belief_update(model: PomdpModel, belief: Belief, defender_action: int,
                  obs: Observation) -> Belief:
    """Recursive Bayes filter step: predict through the transition kernel,
    weight by the marginal observation likelihood, renormalize.

    Raises :class:`ImpossibleObservationError` when the observation has zero
    probability under the predicted belief (the unnormalized vector rides on
    the exception so callers can inspect the disagreement).
    """
    predicted = predict_belief(model, belief, defender_action)
    likelihood = state_observation_likelihoods(model, obs)
    unnormalized = likelihood * predicted
    total = unnormalized.sum()
    if total <= 0.0:
        raise ImpossibleObservationError(
            "observation has zero probability under the predicted belief",
            unnormalized)
    return Belief(unnormalized / total)


def expected_observation_rows(model: PomdpModel, state_dist: np.ndarray) -> list[np.ndarray]:
    """Per-metric bin distributions implied by a distribution over states:
    P(o_m = b) = sum_s d(s) * sum_a P_att[s, a] * Z_m[s, a, b].

    Drives the metric-distribution display panel and what-if previews.
    """
    weights = state_dist[:, None] * model.attacker_behavior  # (S, A_att)
    return [np.einsum("sa,sab->b", weights, z) for z in model.observation]
