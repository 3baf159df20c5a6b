"""Domain types and exact discrete-time dynamics of the two-hop link.

An interval i runs: signaling phase (tau_sig), data phase (tau_data).
Harvest E_i and arrivals observed at the start of interval i become usable
at interval i+1: the battery folds E_i in after the interval's spending, and
the transmitter buffer folds the interval's arrival in after transmission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import ScenarioConfig


@dataclass(frozen=True)
class NodeState:
    """One node's view at the start of an interval."""

    e_in: float  # energy harvested at the start of this interval
    battery: float
    channel: complex
    buffer: float  # bits

    @property
    def channel_mag(self) -> float:
        return abs(self.channel)


@dataclass(frozen=True)
class GlobalState:
    interval: int  # 1-based
    nodes: tuple[NodeState, NodeState]


@dataclass(frozen=True)
class IntervalOutcome:
    """Realized quantities of one interval; the shared reward is ``r2``."""

    r1: float  # bits delivered transmitter -> relay
    r2: float  # bits delivered relay -> receiver (the reward)
    energy_spent: tuple[float, float]  # signaling + data, per node
    sig_energy: tuple[float, float]
    sig_sent: tuple[bool, bool]
    battery_overflow: tuple[float, float]  # energy lost to full batteries
    dropped_bits: tuple[float, float]  # bits lost to full buffers

    @property
    def reward(self) -> float:
        return self.r2


def initial_state(cfg: ScenarioConfig, e_in, channels) -> GlobalState:
    """State at interval 1: empty batteries and buffers."""
    d1 = math.inf if cfg.backlogged else 0.0
    nodes = (
        NodeState(e_in=float(e_in[0]), battery=0.0, channel=channels[0], buffer=d1),
        NodeState(e_in=float(e_in[1]), battery=0.0, channel=channels[1], buffer=0.0),
    )
    return GlobalState(interval=1, nodes=nodes)


def rate(p: float, channel, cfg: ScenarioConfig, tau_data: float | None = None) -> float:
    """Bits deliverable at transmit power ``p`` over the data phase."""
    if p < 0:
        raise ValueError("transmit power must be >= 0")
    if p == 0.0:
        return 0.0
    td = cfg.tau_data if tau_data is None else tau_data
    m = abs(channel)
    g = m * m
    return td * cfg.bandwidth * math.log2(1.0 + g * p / cfg.sigma2)


def energy_causality_ok(node: NodeState, p: float, p_sig: float, cfg: ScenarioConfig) -> bool:
    """Signaling plus data energy must already be in the battery."""
    return cfg.tau_sig * p_sig + cfg.tau_data * p <= node.battery


def battery_overflow_ok(node: NodeState, p: float, p_sig: float, cfg: ScenarioConfig, node_idx: int) -> bool:
    """Start battery plus harvest minus spending fits the battery."""
    spent = cfg.tau_data * p + cfg.tau_sig * p_sig
    return node.battery + node.e_in - spent <= cfg.b_max[node_idx]


def data_causality_ok(node: NodeState, bits_out: float) -> bool:
    """Only bits already buffered may be sent."""
    return bits_out <= node.buffer


def buffer_overflow_ok(node: NodeState, bits_out: float, bits_in: float, cfg: ScenarioConfig, node_idx: int) -> bool:
    """Buffer after the interval's in/out flow fits its capacity."""
    return node.buffer + bits_in - bits_out <= cfg.d_max[node_idx]


def step(
    state: GlobalState,
    powers: tuple[float, float],
    p_sig: tuple[float, float],
    exogenous: tuple,
    cfg: ScenarioConfig,
) -> tuple[GlobalState, IntervalOutcome]:
    """Apply one interval of dynamics.

    ``exogenous`` is (e_next[2], channels_next[2], arrival_bits): harvest and
    channel for the next interval, plus the arrival folded into the
    transmitter buffer at the end of this interval.

    Powers must lie on the per-node action grids and satisfy energy
    causality including the signaling spend; violations raise ValueError
    (agents are expected to mask the feasible subset up front).
    """
    e_next, h_next, arrival = exogenous
    realized = [0.0, 0.0]
    spent = [0.0, 0.0]
    sig_energy = [0.0, 0.0]
    for l in (0, 1):
        grid = cfg.grid(l)
        if not grid.contains(powers[l]):
            raise ValueError(f"node {l + 1}: power {powers[l]!r} not on the action grid")
        node = state.nodes[l]
        if not energy_causality_ok(node, powers[l], p_sig[l], cfg):
            raise ValueError(f"node {l + 1}: energy causality violated")
        sig_energy[l] = cfg.tau_sig * p_sig[l]
        spent[l] = sig_energy[l] + cfg.tau_data * powers[l]
        # Data causality enforced by clamping: full transmit energy is spent
        # even when the buffer cannot back the nominal rate.
        realized[l] = min(rate(powers[l], node.channel, cfg), node.buffer)

    new_nodes = []
    overflow = [0.0, 0.0]
    dropped = [0.0, 0.0]
    for l in (0, 1):
        node = state.nodes[l]
        avail = node.battery - spent[l] + node.e_in
        new_battery = min(cfg.b_max[l], avail)
        overflow[l] = avail - new_battery
        bits_in = arrival if l == 0 else realized[0]
        if l == 0 and math.isinf(cfg.d_max[0]):
            new_buffer = math.inf
        else:
            held = node.buffer - realized[l] + bits_in
            new_buffer = min(cfg.d_max[l], held)
            dropped[l] = held - new_buffer
        new_nodes.append(
            NodeState(
                e_in=float(e_next[l]),
                battery=new_battery,
                channel=h_next[l],
                buffer=new_buffer,
            )
        )
    outcome = IntervalOutcome(
        r1=realized[0],
        r2=realized[1],
        energy_spent=(spent[0], spent[1]),
        sig_energy=(sig_energy[0], sig_energy[1]),
        sig_sent=(p_sig[0] > 0.0, p_sig[1] > 0.0),
        battery_overflow=(overflow[0], overflow[1]),
        dropped_bits=(dropped[0], dropped[1]),
    )
    new_state = GlobalState(interval=state.interval + 1, nodes=(new_nodes[0], new_nodes[1]))
    return new_state, outcome


# ---------------------------------------------------------------------------
# Exogenous processes


def sample_energy(cfg: ScenarioConfig, node: int, rng: np.random.Generator, size=None):
    """Harvest draw(s): Uniform[0, e_max[node]]."""
    return cfg.e_max[node] * rng.random(size)


def sample_channel(cfg: ScenarioConfig, rng: np.random.Generator, size=None):
    """Zero-mean unit-variance complex Gaussian (|h| Rayleigh).

    Real/imaginary parts interleave per draw so a longer horizon extends a
    shorter one's sequence instead of reshuffling it.
    """
    if size is None:
        re, im = rng.standard_normal(2)
        return (re + 1j * im) / math.sqrt(2.0)
    pairs = rng.standard_normal((size, 2))
    return (pairs[:, 0] + 1j * pairs[:, 1]) / math.sqrt(2.0)


def sample_arrival(cfg: ScenarioConfig, rng: np.random.Generator, size=None):
    """Arrival bits per interval; the backlogged mode needs no draws."""
    if cfg.backlogged:
        return np.zeros(size) if size is not None else 0.0
    counts = rng.poisson(cfg.arrivals.lam, size)
    return cfg.arrivals.packet_bits * counts


@dataclass(frozen=True)
class Realization:
    """Pre-drawn exogenous sequences for one episode.

    ``channel_mag[l, i]`` is |h_{l,i}|; arrivals[i] folds into the
    transmitter buffer at the end of interval i (0-based arrays).
    """

    energy: np.ndarray  # (2, I)
    channel_mag: np.ndarray  # (2, I)
    arrivals: np.ndarray  # (I,)

    @property
    def n_intervals(self) -> int:
        return self.energy.shape[1]


def draw_realization(cfg: ScenarioConfig, seed_seq: np.random.SeedSequence) -> Realization:
    """Draw one episode's exogenous sequences from per-node substreams."""
    children = seed_seq.spawn(5)
    n = cfg.n_intervals
    energy = np.empty((2, n))
    mags = np.empty((2, n))
    for l in (0, 1):
        energy[l] = sample_energy(cfg, l, np.random.default_rng(children[l]), n)
        mags[l] = np.abs(sample_channel(cfg, np.random.default_rng(children[2 + l]), n))
    arrivals = np.asarray(sample_arrival(cfg, np.random.default_rng(children[4]), n), dtype=np.float64)
    return Realization(energy=energy, channel_mag=mags, arrivals=arrivals)


# ---------------------------------------------------------------------------
# Trace export

TRACE_COLUMNS = (
    "episode", "i", "E1", "E2", "B1", "B2", "h1", "h2", "D1", "D2",
    "p1", "p2", "psig1", "psig2", "R1", "R2", "drops", "overflows",
)


def format_trace_row(values) -> str:
    """One CSV row with 9 significant digits for floats."""
    parts = []
    for v in values:
        if isinstance(v, (int, np.integer)):
            parts.append(str(int(v)))
        else:
            parts.append(f"{float(v):.9g}")
    return ",".join(parts)
