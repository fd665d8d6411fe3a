"""The built-in intrusion-prevention scenario and its config file schema.

The scenario models a gateway-fronted service.  Hidden states follow the
attack progression ``healthy -> recon -> compromised -> breached`` (breached
is terminal).  The defender either continues normal operation or defends
(evicting the intruder, which resets any non-terminal state to healthy at a
cost).  Three IDS-style count metrics are observed each step, discretized
into bins with the last bin collecting overflow.

Observed metrics are driven by the *activity* realized inside the hidden
state (passive traffic, ping scan, port scan, exploit), not by the state
identity itself: the per-activity bin distributions are identical across
states, and states differ only in how often each activity occurs.  Ping scans
produce exactly the passive metric distribution, so they are invisible in the
metrics by construction.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import DefenderAction, MetricSpec, PomdpModel

SCHEMA_VERSION = 1
DEFAULT_SCENARIO_NAME = "intrusion-default"

STATES = ("healthy", "recon", "compromised", "breached")
DEFENDER_ACTIONS = ("continue", "defend")
ATTACKER_ACTIONS = ("passive", "ping_scan", "port_scan", "exploit")
METRIC_NAMES = ("ids_alerts", "failed_logins", "new_connections")

# Mean event counts per step for each activity, in METRIC_NAMES order.
# ping_scan deliberately reuses the passive rates: no metric change.
_ACTIVITY_RATES = {
    "passive": (0.4, 0.6, 1.2),
    "ping_scan": (0.4, 0.6, 1.2),
    "port_scan": (6.0, 0.8, 8.0),
    "exploit": (9.0, 6.0, 3.0),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that parameterizes the built-in scenario.

    All values here are artifact defaults chosen to make the scenario
    learnable and demonstrable; none are measurements.
    """

    name: str = DEFAULT_SCENARIO_NAME
    schema_version: int = SCHEMA_VERSION
    horizon: int = 100
    bins: int = 16
    # attack progression
    intrusion_start_prob: float = 0.1
    stage_progression_prob: float = 0.2
    # activity process (attacker action frequencies per state)
    ping_scan_prob: float = 0.1       # state-constant background ping rate
    client_noise_prob: float = 0.05   # healthy steps that look like a scan
    recon_scan_prob: float = 0.6      # port scans while in recon
    compromised_scan_prob: float = 0.1
    exploit_prob: float = 0.5         # exploits while compromised
    exfil_prob: float = 0.3           # loud exfiltration while breached
    # rewards
    service_reward: float = 1.0
    intrusion_penalty: float = -2.0   # added per undetected intrusion step
    defend_cost: float = 5.0          # cost of the defend action (>= 0)
    false_alarm_penalty: float = 10.0  # extra charge for defending healthy
    stop_intrusion_reward: float = 20.0

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {self.schema_version}, "
                f"expected {SCHEMA_VERSION}")
        if not self.name:
            raise ConfigError("scenario name must be non-empty")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.bins < 2:
            raise ConfigError(f"bins must be >= 2, got {self.bins}")
        probs = {
            "intrusion_start_prob": self.intrusion_start_prob,
            "stage_progression_prob": self.stage_progression_prob,
            "ping_scan_prob": self.ping_scan_prob,
            "client_noise_prob": self.client_noise_prob,
            "recon_scan_prob": self.recon_scan_prob,
            "compromised_scan_prob": self.compromised_scan_prob,
            "exploit_prob": self.exploit_prob,
            "exfil_prob": self.exfil_prob,
        }
        for field_name, p in probs.items():
            if not (0.0 <= p <= 1.0):
                raise ConfigError(f"{field_name} must be in [0, 1], got {p}")
        budgets = {
            "healthy activity": self.ping_scan_prob + self.client_noise_prob,
            "recon activity": self.ping_scan_prob + self.recon_scan_prob,
            "compromised activity": (self.ping_scan_prob + self.compromised_scan_prob
                                     + self.exploit_prob),
            "breached activity": self.ping_scan_prob + self.exfil_prob,
        }
        for label, total in budgets.items():
            if total > 1.0 + 1e-12:
                raise ConfigError(f"{label} probabilities sum to {total:.6g} > 1")
        if self.defend_cost < 0:
            raise ConfigError(f"defend_cost must be >= 0, got {self.defend_cost}")
        if self.false_alarm_penalty < 0:
            raise ConfigError(
                f"false_alarm_penalty must be >= 0, got {self.false_alarm_penalty}")
        for field_name in ("service_reward", "intrusion_penalty", "stop_intrusion_reward"):
            v = getattr(self, field_name)
            if not math.isfinite(v):
                raise ConfigError(f"{field_name} must be finite, got {v}")

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario config fields: {sorted(unknown)}")
        try:
            cfg = cls(**data)
        except TypeError as e:
            raise ConfigError(f"bad scenario config: {e}") from None
        cfg.validate()
        return cfg

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]


def load_scenario_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"scenario config is not valid JSON: {e}") from None
    return ScenarioConfig.from_dict(data)


def save_scenario_config(config: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def binned_counts(rate: float, bins: int) -> np.ndarray:
    """Poisson(rate) over bin indices, with the last bin taking the tail."""
    pmf = np.zeros(bins)
    p = math.exp(-rate)
    for k in range(bins - 1):
        pmf[k] = p
        p *= rate / (k + 1)
    pmf[bins - 1] = max(0.0, 1.0 - pmf[: bins - 1].sum())
    return pmf


def build_intrusion_scenario(config: ScenarioConfig | None = None) -> PomdpModel:
    """Construct the built-in scenario as a validated-by-construction model."""
    config = config or ScenarioConfig()
    config.validate()

    S, A, K = len(STATES), len(DEFENDER_ACTIONS), len(ATTACKER_ACTIONS)
    healthy, recon, compromised, breached = range(S)
    cont, defend = range(A)

    transition = np.zeros((S, A, S))
    transition[healthy, cont, healthy] = 1.0 - config.intrusion_start_prob
    transition[healthy, cont, recon] = config.intrusion_start_prob
    transition[recon, cont, recon] = 1.0 - config.stage_progression_prob
    transition[recon, cont, compromised] = config.stage_progression_prob
    transition[compromised, cont, compromised] = 1.0 - config.stage_progression_prob
    transition[compromised, cont, breached] = config.stage_progression_prob
    transition[breached, cont, breached] = 1.0
    # defend evicts the intruder from any non-terminal state
    transition[healthy, defend, healthy] = 1.0
    transition[recon, defend, healthy] = 1.0
    transition[compromised, defend, healthy] = 1.0
    transition[breached, defend, breached] = 1.0

    ping = config.ping_scan_prob
    attacker = np.zeros((S, K))
    attacker[healthy] = (1.0 - ping - config.client_noise_prob, ping,
                         config.client_noise_prob, 0.0)
    attacker[recon] = (1.0 - ping - config.recon_scan_prob, ping,
                       config.recon_scan_prob, 0.0)
    attacker[compromised] = (
        1.0 - ping - config.compromised_scan_prob - config.exploit_prob,
        ping, config.compromised_scan_prob, config.exploit_prob)
    attacker[breached] = (1.0 - ping - config.exfil_prob, ping, 0.0,
                          config.exfil_prob)

    # Bin distributions are shared by every state: metrics reflect activity.
    observation = []
    for m in range(len(METRIC_NAMES)):
        z = np.zeros((S, K, config.bins))
        for a, action in enumerate(ATTACKER_ACTIONS):
            row = binned_counts(_ACTIVITY_RATES[action][m], config.bins)
            z[:, a, :] = row
        observation.append(z)

    reward = np.zeros((S, A))
    reward[healthy, cont] = config.service_reward
    reward[recon, cont] = config.service_reward + config.intrusion_penalty
    reward[compromised, cont] = config.service_reward + config.intrusion_penalty
    reward[healthy, defend] = -config.defend_cost - config.false_alarm_penalty
    reward[recon, defend] = -config.defend_cost + config.stop_intrusion_reward
    reward[compromised, defend] = -config.defend_cost + config.stop_intrusion_reward

    rho1 = np.zeros(S)
    rho1[healthy] = 1.0

    return PomdpModel(
        state_names=STATES,
        defender_actions=(DefenderAction("continue", 0.0),
                          DefenderAction("defend", config.defend_cost)),
        attacker_actions=ATTACKER_ACTIONS,
        metrics=tuple(MetricSpec(name, config.bins) for name in METRIC_NAMES),
        transition=transition,
        attacker_behavior=attacker,
        observation=tuple(observation),
        reward=reward,
        initial_distribution=rho1,
        horizon=config.horizon,
        terminal_states=frozenset({breached}),
        scenario_name=config.name,
        config_hash=config.hash(),
    )


def intrusion_state_indices(model: PomdpModel) -> list[int]:
    """States a threshold policy should treat as 'under intrusion': the
    recon/compromised stages when present, else every non-terminal state that
    carries no initial mass."""
    named = [i for i, n in enumerate(model.state_names) if n in ("recon", "compromised")]
    if named:
        return named
    return [i for i in range(model.n_states)
            if not model.is_terminal(i) and model.initial_distribution[i] == 0.0]


def ping_invisibility_variant(model: PomdpModel, ping_prob: float | None = None,
                              reserved_metric: int = 0) -> PomdpModel:
    """Variant in which ping scans are provably uninformative.

    Two edits make the invisibility exact rather than approximate:

    * ping observations are isolated in a reserved overflow bin of one metric
      that no other activity can produce, and the ping rows are identical in
      every state, so the likelihood of a ping-generated observation does not
      depend on the hidden state;
    * pings occur at the same rate in every state, so seeing one carries no
      information either.

    On any step whose realized attacker action is ping_scan, the posterior
    belief then equals the prediction-only belief.
    """
    ping_idx = model.attacker_action_index("ping_scan")
    if ping_prob is None:
        ping_prob = float(model.attacker_behavior[:, ping_idx].min())
        if ping_prob <= 0.0:
            ping_prob = 0.1

    attacker = np.array(model.attacker_behavior)
    for s in range(model.n_states):
        old_ping = attacker[s, ping_idx]
        rest = 1.0 - old_ping
        scale = (1.0 - ping_prob) / rest if rest > 0 else 0.0
        attacker[s] *= scale
        attacker[s, ping_idx] = ping_prob
        if rest <= 0:
            attacker[s] = 0.0
            attacker[s, ping_idx] = 1.0

    observation = [np.array(z) for z in model.observation]
    z = observation[reserved_metric]
    bins = z.shape[2]
    sentinel = bins - 1
    for a in range(model.n_attacker_actions):
        if a == ping_idx:
            z[:, a, :] = 0.0
            z[:, a, sentinel] = 1.0
        else:
            z[:, a, sentinel] = 0.0
            totals = z[:, a, :].sum(axis=1, keepdims=True)
            if np.any(totals <= 0):
                raise ConfigError(
                    "cannot reserve a ping bin: another activity has all its "
                    "mass in the overflow bin")
            z[:, a, :] /= totals
    for m, zm in enumerate(observation):
        if m != reserved_metric:
            zm[:, ping_idx, :] = zm[:, model.attacker_action_index("passive"), :]

    return dataclasses.replace(
        model,
        attacker_behavior=attacker,
        observation=tuple(observation),
        config_hash="",
        scenario_name=model.scenario_name + "+ping-invisible",
    )


def no_intrusion_variant(config: ScenarioConfig,
                         client_noise_prob: float = 0.15) -> ScenarioConfig:
    """Config variant with no intrusions and noisier client traffic, used to
    hunt for false-alarm edge cases."""
    return dataclasses.replace(
        config,
        name=config.name + "+no-intrusion",
        intrusion_start_prob=0.0,
        client_noise_prob=client_noise_prob,
    )
