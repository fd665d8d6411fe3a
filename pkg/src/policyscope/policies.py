"""Policy representations: random, constant, belief-threshold, and the
softmax network, plus the self-describing policy file format.

A policy maps a :class:`PolicyInput` (current belief, last observation, and
normalized time) to a distribution over defender actions.  When choosing the
action for step ``t`` of an episode with effective horizon ``T``, callers
build the input from the belief and observation *before* that step and set
``t_normalized = t / T``; at the first step the observation is all-zero bins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import IncompatibilityError, LoadError, RangeError
from .model import Belief, MetricSpec, Observation, PomdpModel
from .net import PolicyParameters, network_forward, parameters_from_payload, \
    parameters_to_payload

POLICY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PolicyInput:
    belief: Belief
    last_observation: Observation | None
    t_normalized: float


@dataclass(frozen=True, eq=False)
class ActionDistribution:
    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def __eq__(self, other) -> bool:
        return isinstance(other, ActionDistribution) \
            and np.array_equal(self.probs, other.probs)

    def __getitem__(self, i: int) -> float:
        return float(self.probs[i])

    def tolist(self) -> list[float]:
        return [float(x) for x in self.probs]


def feature_vector(input: PolicyInput, metric_bins: tuple[int, ...]) -> np.ndarray:
    """Belief, bin indices scaled to [0, 1] by B_m - 1, and normalized time,
    concatenated; all-zero observation features before the first step."""
    obs = np.zeros(len(metric_bins))
    if input.last_observation is not None:
        bins = input.last_observation.bins
        if len(bins) != len(metric_bins):
            raise IncompatibilityError(
                f"observation has {len(bins)} metrics, policy expects {len(metric_bins)}")
        for b, B in zip(bins, metric_bins):
            if not (0 <= b < B):
                raise RangeError(f"bin {b} out of range for a {B}-bin metric")
        obs = np.array([b / (B - 1) for b, B in zip(bins, metric_bins)])
    return np.concatenate([input.belief.probs, obs, [input.t_normalized]])


def _point_mass(n: int, index: int) -> ActionDistribution:
    probs = np.zeros(n)
    probs[index] = 1.0
    return ActionDistribution(probs)


class RandomPolicy:
    """Uniform over defender actions, ignoring the input."""

    kind = "random"

    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise RangeError("a policy needs at least one action")
        self.n_actions = n_actions

    def predict(self, input: PolicyInput) -> ActionDistribution:
        return ActionDistribution(np.full(self.n_actions, 1.0 / self.n_actions))

    def check_compatible(self, model: PomdpModel) -> None:
        if model.n_defender_actions != self.n_actions:
            raise IncompatibilityError(
                f"policy has {self.n_actions} actions, model has "
                f"{model.n_defender_actions}")

    def _payload(self) -> dict:
        return {"action_count": self.n_actions}


class ConstantPolicy:
    """Always plays one action; ``ConstantPolicy(n, 0)`` is never-defend."""

    kind = "constant"

    def __init__(self, n_actions: int, action_index: int):
        if not (0 <= action_index < n_actions):
            raise RangeError(f"action index {action_index} out of range")
        self.n_actions = n_actions
        self.action_index = action_index

    def predict(self, input: PolicyInput) -> ActionDistribution:
        return _point_mass(self.n_actions, self.action_index)

    def check_compatible(self, model: PomdpModel) -> None:
        if model.n_defender_actions != self.n_actions:
            raise IncompatibilityError(
                f"policy has {self.n_actions} actions, model has "
                f"{model.n_defender_actions}")

    def _payload(self) -> dict:
        return {"action_count": self.n_actions, "action_index": self.action_index}


def never_defend_policy(model: PomdpModel) -> ConstantPolicy:
    return ConstantPolicy(model.n_defender_actions, 0)


class ThresholdPolicy:
    """Defend exactly when the belief mass on the intrusion states reaches
    the threshold."""

    kind = "threshold"

    def __init__(self, alpha: float, state_indices, n_states: int,
                 n_actions: int = 2, defend_index: int = 1):
        if not (0.0 <= alpha <= 1.0):
            raise RangeError(f"threshold must be in [0, 1], got {alpha}")
        if not (0 <= defend_index < n_actions):
            raise RangeError(f"defend index {defend_index} out of range")
        indices = tuple(int(i) for i in state_indices)
        for i in indices:
            if not (0 <= i < n_states):
                raise RangeError(f"state index {i} out of range for {n_states} states")
        self.alpha = float(alpha)
        self.state_indices = indices
        self.n_states = n_states
        self.n_actions = n_actions
        self.defend_index = defend_index

    def predict(self, input: PolicyInput) -> ActionDistribution:
        if len(input.belief.probs) != self.n_states:
            raise IncompatibilityError(
                f"belief has {len(input.belief.probs)} states, policy expects "
                f"{self.n_states}")
        mass = float(input.belief.probs[list(self.state_indices)].sum())
        if mass >= self.alpha:
            return _point_mass(self.n_actions, self.defend_index)
        return _point_mass(self.n_actions, 0)

    def check_compatible(self, model: PomdpModel) -> None:
        if model.n_states != self.n_states:
            raise IncompatibilityError(
                f"policy expects {self.n_states} states, model has {model.n_states}")
        if model.n_defender_actions != self.n_actions:
            raise IncompatibilityError(
                f"policy has {self.n_actions} actions, model has "
                f"{model.n_defender_actions}")

    def _payload(self) -> dict:
        return {"alpha": self.alpha, "state_indices": list(self.state_indices),
                "state_count": self.n_states, "action_count": self.n_actions,
                "defend_index": self.defend_index}


class NetworkPolicy:
    """Softmax policy over the logits head of the shared-trunk network."""

    kind = "network"

    def __init__(self, params: PolicyParameters, n_states: int,
                 metric_bins: tuple[int, ...]):
        expected = n_states + len(metric_bins) + 1
        if params.layer_sizes[0] != expected:
            raise IncompatibilityError(
                f"network input size {params.layer_sizes[0]} does not match "
                f"feature length {expected}")
        self.params = params
        self.n_states = n_states
        self.metric_bins = tuple(int(b) for b in metric_bins)
        self.n_actions = params.layer_sizes[-1]

    def predict(self, input: PolicyInput) -> ActionDistribution:
        if len(input.belief.probs) != self.n_states:
            raise IncompatibilityError(
                f"belief has {len(input.belief.probs)} states, policy expects "
                f"{self.n_states}")
        features = feature_vector(input, self.metric_bins)
        logits, _ = network_forward(self.params, features)
        shifted = logits - logits.max()
        exp = np.exp(shifted)
        return ActionDistribution(exp / exp.sum())

    def check_compatible(self, model: PomdpModel) -> None:
        if model.n_states != self.n_states:
            raise IncompatibilityError(
                f"policy expects {self.n_states} states, model has {model.n_states}")
        if model.n_defender_actions != self.n_actions:
            raise IncompatibilityError(
                f"policy has {self.n_actions} actions, model has "
                f"{model.n_defender_actions}")
        bins = tuple(m.bins for m in model.metrics)
        if bins != self.metric_bins:
            raise IncompatibilityError(
                f"policy metric bins {self.metric_bins} do not match model {bins}")

    def _payload(self) -> dict:
        return {"state_count": self.n_states,
                "metric_bins": list(self.metric_bins),
                "params": parameters_to_payload(self.params)}


Policy = RandomPolicy | ConstantPolicy | ThresholdPolicy | NetworkPolicy


def network_policy_for(model: PomdpModel, params: PolicyParameters) -> NetworkPolicy:
    return NetworkPolicy(params, model.n_states,
                         tuple(m.bins for m in model.metrics))


def save_policy(policy: Policy) -> bytes:
    """Self-describing container: JSON with a fixed header plus a per-kind
    payload; floats use shortest round-trip decimals so save -> load is
    exact."""
    header = {
        "format_version": POLICY_FORMAT_VERSION,
        "policy_kind": policy.kind,
        "state_count": getattr(policy, "n_states", None),
        "action_count": policy.n_actions,
        "metric_count": len(policy.metric_bins) if isinstance(policy, NetworkPolicy) else None,
        "layer_sizes": list(policy.params.layer_sizes) if isinstance(policy, NetworkPolicy) else None,
        "payload": policy._payload(),
    }
    return (json.dumps(header, separators=(",", ":")) + "\n").encode()


def load_policy(data: bytes) -> Policy:
    """Inverse of :func:`save_policy`; any structural problem raises
    :class:`LoadError` and never yields a partial policy."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise LoadError(f"policy payload is not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise LoadError("policy payload must be a JSON object")
    if obj.get("format_version") != POLICY_FORMAT_VERSION:
        raise LoadError(
            f"unsupported policy format_version {obj.get('format_version')!r}")
    kind = obj.get("policy_kind")
    payload = obj.get("payload")
    if not isinstance(payload, dict):
        raise LoadError("policy payload section missing")
    try:
        if kind == "random":
            return RandomPolicy(int(payload["action_count"]))
        if kind == "constant":
            return ConstantPolicy(int(payload["action_count"]),
                                  int(payload["action_index"]))
        if kind == "threshold":
            alpha = payload["alpha"]
            if not isinstance(alpha, (int, float)) or not math.isfinite(alpha):
                raise LoadError("threshold alpha must be a finite number")
            return ThresholdPolicy(
                float(alpha), payload["state_indices"], int(payload["state_count"]),
                int(payload["action_count"]), int(payload["defend_index"]))
        if kind == "network":
            params = parameters_from_payload(payload["params"])
            declared = obj.get("layer_sizes")
            if declared is not None and tuple(declared) != params.layer_sizes:
                raise LoadError(
                    f"declared layer sizes {declared} do not match parameter "
                    f"shapes {list(params.layer_sizes)}")
            return NetworkPolicy(params, int(payload["state_count"]),
                                 tuple(payload["metric_bins"]))
    except LoadError:
        raise
    except (KeyError, TypeError, ValueError, RangeError, IncompatibilityError) as e:
        raise LoadError(f"malformed {kind!r} policy payload: {e}") from None
    raise LoadError(f"unknown policy kind {kind!r}")


def parse_builtin_policy(spec: str, model: PomdpModel) -> Policy:
    """Resolve the built-in policy names used by the CLI and the server:
    ``random``, ``never_defend``, or ``threshold:<alpha>``."""
    from .scenario import intrusion_state_indices

    if spec == "random":
        return RandomPolicy(model.n_defender_actions)
    if spec == "never_defend":
        return never_defend_policy(model)
    if spec.startswith("threshold:"):
        try:
            alpha = float(spec.split(":", 1)[1])
        except ValueError:
            raise RangeError(f"bad threshold policy spec {spec!r}") from None
        defend_index = 1 if model.n_defender_actions > 1 else 0
        return ThresholdPolicy(alpha, intrusion_state_indices(model),
                               model.n_states, model.n_defender_actions,
                               defend_index)
    raise RangeError(f"unknown built-in policy {spec!r}")
