"""The policy network: a shared tanh trunk with a logits head and a scalar
value head, stored as plain float64 arrays.

All training arithmetic lives in this package (forward, backward, and the
adaptive-moment optimizer); there is no ML framework underneath, which is why
the gradient is checked against finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import IncompatibilityError, LoadError, NumericError
from .rng import Rng


@dataclass(frozen=True)
class PolicyParameters:
    """Weights of the shared-trunk network.

    ``layer_sizes`` is (input, hidden..., actions); weight matrices are
    (fan_in, fan_out) and applied as ``x @ W + b``.  The value head hangs off
    the last hidden layer next to the logits head.
    """

    layer_sizes: tuple[int, ...]
    hidden_weights: tuple[np.ndarray, ...]
    hidden_biases: tuple[np.ndarray, ...]
    policy_weight: np.ndarray   # (hidden, actions)
    policy_bias: np.ndarray     # (actions,)
    value_weight: np.ndarray    # (hidden,)
    value_bias: np.ndarray      # (1,)
    activation: str = "tanh"
    version: int = 0

    def arrays(self) -> list[np.ndarray]:
        return [*self.hidden_weights, *self.hidden_biases, self.policy_weight,
                self.policy_bias, self.value_weight, self.value_bias]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def _orthogonal(rows: int, cols: int, gain: float, rng: Rng) -> np.ndarray:
    """Orthogonal-like init: QR of a seeded gaussian matrix, scaled."""
    g = np.array([[rng.normal() for _ in range(cols)] for _ in range(rows)])
    q, r = np.linalg.qr(g if rows >= cols else g.T)
    q = q * np.sign(np.diag(r))  # fix the sign ambiguity of QR
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_parameters(input_dim: int, hidden_sizes: tuple[int, ...],
                    n_actions: int, rng: Rng) -> PolicyParameters:
    """Scaled orthogonal hidden layers, zero final policy layer (so a fresh
    policy is uniform over actions), unit-scale value head."""
    sizes = (input_dim, *hidden_sizes, n_actions)
    weights, biases = [], []
    fan_in = input_dim
    for h in hidden_sizes:
        weights.append(_orthogonal(fan_in, h, np.sqrt(2.0), rng))
        biases.append(np.zeros(h))
        fan_in = h
    value_weight = _orthogonal(fan_in, 1, 1.0, rng)[:, 0]
    return PolicyParameters(
        layer_sizes=sizes,
        hidden_weights=tuple(weights),
        hidden_biases=tuple(biases),
        policy_weight=np.zeros((fan_in, n_actions)),
        policy_bias=np.zeros(n_actions),
        value_weight=value_weight,
        value_bias=np.zeros(1),
    )


def forward_batch(params: PolicyParameters, features: np.ndarray):
    """Feedforward on a (N, input) batch.

    Returns (logits (N, A), values (N,), hidden activations per layer) -- the
    activations feed the backward pass.
    """
    h = features
    hiddens = []
    for w, b in zip(params.hidden_weights, params.hidden_biases):
        h = np.tanh(h @ w + b)
        hiddens.append(h)
    logits = h @ params.policy_weight + params.policy_bias
    values = h @ params.value_weight + params.value_bias[0]
    return logits, values, hiddens


def network_forward(params: PolicyParameters, features) -> tuple[np.ndarray, float]:
    """Single-input forward pass: (logits, value).

    Raises :class:`NumericError` if the parameters contain non-finite values
    and :class:`IncompatibilityError` on a feature length mismatch.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.layer_sizes[0]:
        raise IncompatibilityError(
            f"feature vector of length {x.shape} does not match network input "
            f"size {params.layer_sizes[0]}")
    if not params.all_finite():
        raise NumericError("network parameters contain non-finite values")
    logits, values, _ = forward_batch(params, x[None, :])
    return logits[0], float(values[0])


# -- flat-vector view (optimizer and finite-difference checks) ---------------

def flatten_parameters(params: PolicyParameters) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays()])


def unflatten_like(params: PolicyParameters, vec: np.ndarray) -> PolicyParameters:
    total = sum(a.size for a in params.arrays())
    if vec.size != total:
        raise IncompatibilityError(
            f"vector of size {vec.size} does not match parameter count {total}")
    out = []
    offset = 0
    for a in params.arrays():
        out.append(vec[offset:offset + a.size].reshape(a.shape).copy())
        offset += a.size
    n_hidden = len(params.hidden_weights)
    return replace(
        params,
        hidden_weights=tuple(out[:n_hidden]),
        hidden_biases=tuple(out[n_hidden:2 * n_hidden]),
        policy_weight=out[2 * n_hidden],
        policy_bias=out[2 * n_hidden + 1],
        value_weight=out[2 * n_hidden + 2],
        value_bias=out[2 * n_hidden + 3],
    )


class Adam:
    """Adaptive-moment gradient descent with bias correction, on the flat
    parameter vector."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params_vec: np.ndarray, grad_vec: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad_vec
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad_vec ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params_vec - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- serialization ------------------------------------------------------------

def parameters_to_payload(params: PolicyParameters) -> dict:
    return {
        "layer_sizes": list(params.layer_sizes),
        "activation": params.activation,
        "version": params.version,
        "hidden_weights": [w.tolist() for w in params.hidden_weights],
        "hidden_biases": [b.tolist() for b in params.hidden_biases],
        "policy_weight": params.policy_weight.tolist(),
        "policy_bias": params.policy_bias.tolist(),
        "value_weight": params.value_weight.tolist(),
        "value_bias": params.value_bias.tolist(),
    }


def parameters_from_payload(payload: dict) -> PolicyParameters:
    try:
        sizes = tuple(int(s) for s in payload["layer_sizes"])
        params = PolicyParameters(
            layer_sizes=sizes,
            hidden_weights=tuple(np.array(w, dtype=np.float64)
                                 for w in payload["hidden_weights"]),
            hidden_biases=tuple(np.array(b, dtype=np.float64)
                                for b in payload["hidden_biases"]),
            policy_weight=np.array(payload["policy_weight"], dtype=np.float64),
            policy_bias=np.array(payload["policy_bias"], dtype=np.float64),
            value_weight=np.array(payload["value_weight"], dtype=np.float64),
            value_bias=np.array(payload["value_bias"], dtype=np.float64),
            activation=str(payload.get("activation", "tanh")),
            version=int(payload.get("version", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise LoadError(f"malformed network parameters: {e}") from None
    if len(sizes) < 2:
        raise LoadError("layer_sizes must have at least input and output")
    if params.activation != "tanh":
        raise LoadError(f"unsupported activation {params.activation!r}")
    hidden = sizes[1:-1]
    if len(params.hidden_weights) != len(hidden) or len(params.hidden_biases) != len(hidden):
        raise LoadError("hidden layer count does not match layer_sizes")
    fan_in = sizes[0]
    for i, h in enumerate(hidden):
        if params.hidden_weights[i].shape != (fan_in, h) \
                or params.hidden_biases[i].shape != (h,):
            raise LoadError(f"hidden layer {i} shapes do not match layer_sizes")
        fan_in = h
    if params.policy_weight.shape != (fan_in, sizes[-1]) \
            or params.policy_bias.shape != (sizes[-1],):
        raise LoadError("policy head shapes do not match layer_sizes")
    if params.value_weight.shape != (fan_in,) or params.value_bias.shape != (1,):
        raise LoadError("value head shapes do not match layer_sizes")
    if not params.all_finite():
        raise LoadError("network parameters contain non-finite values")
    return params
