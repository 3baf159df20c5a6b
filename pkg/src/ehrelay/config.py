"""Scenario configuration: physical constants, learning constants, derived grids.

All times are in abstract time units, energies in energy units, data in bits.
A node index ``l`` is 0 (transmitter) or 1 (relay) throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
import yaml

QUANTITIES = ("E", "B", "h", "D")

# Rayleigh scale of |h| for a zero-mean unit-variance complex Gaussian h.
RAYLEIGH_SCALE = 1.0 / math.sqrt(2.0)
DEFAULT_H_CAP = 4.0 * RAYLEIGH_SCALE


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class ArrivalModel:
    """Data arrival process at the transmitter.

    ``backlogged`` pins the transmitter buffer to infinity (always data
    available); ``poisson`` delivers ``packet_bits`` * Poisson(lam) bits per
    interval, folded into the buffer at the end of the interval.
    """

    mode: str = "backlogged"  # "backlogged" | "poisson"
    lam: float = 0.0
    packet_bits: float = 0.0

    def validate(self) -> None:
        if self.mode not in ("backlogged", "poisson"):
            raise ConfigError("arrivals.mode", f"unknown mode {self.mode!r}")
        if self.mode == "poisson":
            if self.lam < 0:
                raise ConfigError("arrivals.lam", "must be >= 0")
            if self.packet_bits <= 0:
                raise ConfigError("arrivals.packet_bits", "must be > 0")


@dataclass(frozen=True)
class ActionGrid:
    """Uniform transmit-power grid {0, delta, 2*delta, ..., <= p_max}."""

    delta: float
    n: int

    @classmethod
    def from_max(cls, delta: float, p_max: float) -> "ActionGrid":
        if delta <= 0:
            raise ConfigError("delta", "must be > 0")
        n = int(math.floor(p_max / delta + 1e-9)) + 1
        return cls(delta=delta, n=n)

    @property
    def powers(self) -> np.ndarray:
        return self.delta * np.arange(self.n, dtype=np.float64)

    @property
    def p_max(self) -> float:
        return self.delta * (self.n - 1)

    def contains(self, p: float, tol: float = 1e-9) -> bool:
        k = round(p / self.delta)
        return 0 <= k < self.n and abs(p - k * self.delta) <= tol * max(1.0, abs(p))

    def index_of(self, p: float) -> int:
        if not self.contains(p):
            raise ValueError(f"power {p!r} is not on the action grid")
        return int(round(p / self.delta))


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and learning constants for one scenario."""

    tau: float = 1.0
    tau_sig: float = 0.01
    bandwidth: float = 1e6
    sigma2: float = 1.0
    e_max: tuple[float, float] = (1.0, 1.0)
    b_max: tuple[float, float] = (2.0, 2.0)
    d_max: tuple[float, float] = (math.inf, 1e6)
    delta: tuple[float, float] | None = None  # default 0.02 * b_max per node
    gamma: float = 0.9
    n_intervals: int = 100
    n_episodes: int = 200
    seed: int = 0
    arrivals: ArrivalModel = field(default_factory=ArrivalModel)
    # Quantizer: tolerable error per signaled quantity, as a fraction of the
    # quantity's range; absolute overrides and direct bit-count overrides win.
    e_quant_fraction: dict[str, float] = field(
        default_factory=lambda: {q: 0.01 for q in QUANTITIES}
    )
    e_quant_abs: dict[str, float] = field(default_factory=dict)
    l_bits: dict[str, int] = field(default_factory=dict)
    h_cap: float = DEFAULT_H_CAP
    # "episode": alpha = eps = 1/i with i reset each episode (default);
    # "global": i counts intervals across the whole arm run.
    schedule_indexing: str = "episode"
    # "fresh": weights and channel estimates reinitialize per episode
    # (each realization is an independent learning run); "persistent":
    # they carry across episodes. Persistent learning with per-episode
    # schedule resets ratchets the weights without bound; prefer pairing
    # it with global indexing.
    learning_mode: str = "fresh"
    rbf_centers_per_dim: int = 3

    @property
    def tau_data(self) -> float:
        return self.tau - self.tau_sig

    @property
    def deltas(self) -> tuple[float, float]:
        if self.delta is not None:
            return self.delta
        return (0.02 * self.b_max[0], 0.02 * self.b_max[1])

    def grid(self, node: int) -> ActionGrid:
        return ActionGrid.from_max(self.deltas[node], self.b_max[node])

    @property
    def backlogged(self) -> bool:
        return self.arrivals.mode == "backlogged"

    def validate(self) -> None:
        if self.tau <= 0:
            raise ConfigError("tau", "must be > 0")
        if not (0 <= self.tau_sig < self.tau):
            raise ConfigError("tau_sig", f"needs 0 <= tau_sig < tau, got {self.tau_sig}")
        if self.tau_data <= 0:
            raise ConfigError("tau_sig", "tau_data = tau - tau_sig must be > 0")
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth", "must be > 0")
        if self.sigma2 <= 0:
            raise ConfigError("sigma2", "must be > 0")
        for l in (0, 1):
            if self.e_max[l] < 0:
                raise ConfigError(f"e_max[{l}]", "must be >= 0")
            if self.b_max[l] <= 0:
                raise ConfigError(f"b_max[{l}]", "must be > 0")
            if self.d_max[l] < 0:
                raise ConfigError(f"d_max[{l}]", "must be >= 0")
            if self.deltas[l] <= 0:
                raise ConfigError(f"delta[{l}]", "must be > 0")
        if math.isinf(self.d_max[1]):
            raise ConfigError("d_max[1]", "relay buffer must be finite")
        if math.isinf(self.d_max[0]) and not self.backlogged:
            raise ConfigError("d_max[0]", "infinite buffer requires backlogged arrivals")
        if self.backlogged and not math.isinf(self.d_max[0]):
            raise ConfigError("d_max[0]", "backlogged arrivals pin the transmitter buffer to infinity")
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError("gamma", "must be in [0, 1]")
        if self.n_intervals < 1:
            raise ConfigError("n_intervals", "must be >= 1")
        if self.n_episodes < 1:
            raise ConfigError("n_episodes", "must be >= 1")
        if self.h_cap <= 0:
            raise ConfigError("h_cap", "must be > 0")
        if self.schedule_indexing not in ("episode", "global"):
            raise ConfigError("schedule_indexing", "must be 'episode' or 'global'")
        if self.learning_mode not in ("fresh", "persistent"):
            raise ConfigError("learning_mode", "must be 'fresh' or 'persistent'")
        for q, frac in self.e_quant_fraction.items():
            if q not in QUANTITIES:
                raise ConfigError(f"e_quant_fraction.{q}", "unknown quantity")
            if frac <= 0:
                raise ConfigError(f"e_quant_fraction.{q}", "must be > 0")
        for q, err in self.e_quant_abs.items():
            if q not in QUANTITIES:
                raise ConfigError(f"e_quant_abs.{q}", "unknown quantity")
            if err <= 0:
                raise ConfigError(f"e_quant_abs.{q}", "must be > 0")
        for q, bits in self.l_bits.items():
            if q not in QUANTITIES:
                raise ConfigError(f"l_bits.{q}", "unknown quantity")
            if bits < 1:
                raise ConfigError(f"l_bits.{q}", "must be >= 1")
        self.arrivals.validate()

    def with_tau_sig(self, tau_sig: float) -> "ScenarioConfig":
        return replace(self, tau_sig=tau_sig)

    def quantity_range(self, node: int, quantity: str) -> tuple[float, float]:
        """[v_min, v_max] of one signaled quantity for one node.

        A backlogged transmitter has an infinite buffer; its buffer-level bit
        budget mirrors the relay's (the level itself is common knowledge).
        """
        if quantity == "E":
            return 0.0, self.e_max[node]
        if quantity == "B":
            return 0.0, self.b_max[node]
        if quantity == "h":
            return 0.0, self.h_cap
        if quantity == "D":
            d = self.d_max[node]
            if math.isinf(d):
                d = self.d_max[1]
            return 0.0, d
        raise ConfigError("quantity", f"unknown quantity {quantity!r}")

    def quant_error(self, node: int, quantity: str) -> float:
        if quantity in self.e_quant_abs:
            return self.e_quant_abs[quantity]
        lo, hi = self.quantity_range(node, quantity)
        return self.e_quant_fraction.get(quantity, 0.01) * (hi - lo)


def paper_defaults(**overrides) -> ScenarioConfig:
    """Desk-scale configuration with the reference simulation constants.

    1 MHz bandwidth, unit noise power, harvest cap at 5 dB above twice the
    noise power, battery twice the harvest cap, 2% power grid, gamma 0.9,
    1/i schedules, backlogged transmitter, relay buffer sized to one
    full-battery interval, and explicit per-quantity signaling bit counts
    {E: 9, B: 10, h: 7, D: 28}.
    """
    e_max = 2.0 * 10.0 ** (5.0 / 10.0)  # E_max / (2 sigma^2) = 5 dB
    b_max = 2.0 * e_max
    tau = 1.0
    w = 1e6
    d_max2 = w * tau * math.log2(1.0 + b_max / tau)
    cfg = ScenarioConfig(
        tau=tau,
        tau_sig=0.01 * tau,
        bandwidth=w,
        sigma2=1.0,
        e_max=(e_max, e_max),
        b_max=(b_max, b_max),
        d_max=(math.inf, d_max2),
        gamma=0.9,
        n_intervals=100,
        n_episodes=200,
        l_bits={"E": 9, "B": 10, "h": 7, "D": 28},
    )
    if overrides:
        cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def relay_buffer_bits(cfg: ScenarioConfig, beta: float = 1.0) -> float:
    """Relay buffer capacity for a buffer-size factor beta."""
    return cfg.bandwidth * cfg.tau * math.log2(1.0 + beta * cfg.b_max[0] / cfg.tau)


def _as_pair(value, field_name: str) -> tuple[float, float]:
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (float(value[0]), float(value[1]))
    raise ConfigError(field_name, "expected a number or a pair [node1, node2]")


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed config mapping (see profiles/)."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config root must be a mapping")
    known = {
        "tau", "tau_sig", "bandwidth", "sigma2", "e_max", "b_max", "d_max",
        "delta", "gamma", "n_intervals", "n_episodes", "seed", "arrivals",
        "e_quant_fraction", "e_quant_abs", "l_bits", "h_cap",
        "schedule_indexing", "learning_mode", "rbf_centers_per_dim",
    }
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown config field")
    kwargs = {}
    for key in ("tau", "tau_sig", "bandwidth", "sigma2", "gamma", "h_cap"):
        if key in data:
            kwargs[key] = float(data[key])
    for key in ("n_intervals", "n_episodes", "seed", "rbf_centers_per_dim"):
        if key in data:
            kwargs[key] = int(data[key])
    for key in ("schedule_indexing", "learning_mode"):
        if key in data:
            kwargs[key] = str(data[key])
    for key in ("e_max", "b_max", "delta"):
        if key in data and data[key] is not None:
            kwargs[key] = _as_pair(data[key], key)
    if "d_max" in data:
        raw = data["d_max"]
        if isinstance(raw, (list, tuple)) and len(raw) == 2:
            vals = []
            for v in raw:
                vals.append(math.inf if v in ("inf", None) else float(v))
            kwargs["d_max"] = (vals[0], vals[1])
        else:
            raise ConfigError("d_max", "expected a pair [node1, node2]")
    if "arrivals" in data:
        arr = data["arrivals"]
        if not isinstance(arr, dict):
            raise ConfigError("arrivals", "must be a mapping")
        kwargs["arrivals"] = ArrivalModel(
            mode=str(arr.get("mode", "backlogged")),
            lam=float(arr.get("lam", 0.0)),
            packet_bits=float(arr.get("packet_bits", 0.0)),
        )
    for key in ("e_quant_fraction", "e_quant_abs"):
        if key in data:
            if not isinstance(data[key], dict):
                raise ConfigError(key, "must be a mapping of quantity -> value")
            kwargs[key] = {str(q): float(v) for q, v in data[key].items()}
    if "l_bits" in data:
        if not isinstance(data["l_bits"], dict):
            raise ConfigError("l_bits", "must be a mapping of quantity -> bits")
        kwargs["l_bits"] = {str(q): int(v) for q, v in data["l_bits"].items()}
    cfg = ScenarioConfig(**kwargs)
    cfg.validate()
    return cfg


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Round-trippable plain mapping of a config (used by run manifests)."""
    out = {
        "tau": cfg.tau,
        "tau_sig": cfg.tau_sig,
        "bandwidth": cfg.bandwidth,
        "sigma2": cfg.sigma2,
        "e_max": list(cfg.e_max),
        "b_max": list(cfg.b_max),
        "d_max": ["inf" if math.isinf(v) else v for v in cfg.d_max],
        "gamma": cfg.gamma,
        "n_intervals": cfg.n_intervals,
        "n_episodes": cfg.n_episodes,
        "seed": cfg.seed,
        "h_cap": cfg.h_cap,
        "schedule_indexing": cfg.schedule_indexing,
        "learning_mode": cfg.learning_mode,
        "rbf_centers_per_dim": cfg.rbf_centers_per_dim,
        "arrivals": {
            "mode": cfg.arrivals.mode,
            "lam": cfg.arrivals.lam,
            "packet_bits": cfg.arrivals.packet_bits,
        },
        "e_quant_fraction": dict(cfg.e_quant_fraction),
    }
    if cfg.delta is not None:
        out["delta"] = list(cfg.delta)
    if cfg.e_quant_abs:
        out["e_quant_abs"] = dict(cfg.e_quant_abs)
    if cfg.l_bits:
        out["l_bits"] = dict(cfg.l_bits)
    return out


def load_config(path: str) -> ScenarioConfig:
    """Load a scenario config from a YAML file or the shipped profile name."""
    if path == "paper.defaults":
        text = (
            resources.files("ehrelay") / "profiles" / "paper_defaults.yaml"
        ).read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from exc
    return config_from_dict(data if data is not None else {})
