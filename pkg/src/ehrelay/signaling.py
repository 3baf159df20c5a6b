"""Causal-knowledge exchange: uniform quantization, signaling power, fallbacks.

Each interval both nodes try to broadcast their current (E, B, |h|, D). A
node that cannot afford the signaling power sends nothing; the remote side
then substitutes E = 0, B = 0, the previously believed channel magnitude and
a drained copy of the previously believed buffer level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .config import QUANTITIES, ScenarioConfig
from .scenario import GlobalState


def bits_required(v_min: float, v_max: float, e_quant: float) -> int:
    """Bit budget of a uniform quantizer with tolerable error ``e_quant``.

    ceil(log2(range / e_quant) - 1), floored at 1 bit so the protocol stays
    well defined for coarse tolerances.
    """
    if v_max <= v_min:
        raise ValueError("v_max must exceed v_min")
    if e_quant <= 0:
        raise ValueError("e_quant must be > 0")
    bits = math.ceil(math.log2((v_max - v_min) / e_quant) - 1.0)
    return max(1, int(bits))


@dataclass(frozen=True)
class Quantizer:
    """Uniform mid-cell quantizer on [v_min, v_max] with 2**bits levels."""

    v_min: float
    v_max: float
    bits: int

    @property
    def n_levels(self) -> int:
        return 1 << self.bits

    @property
    def step(self) -> float:
        return (self.v_max - self.v_min) / self.n_levels

    def encode(self, value: float) -> int:
        v = min(max(value, self.v_min), self.v_max)
        idx = int((v - self.v_min) / self.step)
        return min(idx, self.n_levels - 1)

    def decode(self, idx: int) -> float:
        return self.v_min + (idx + 0.5) * self.step

    def quantize(self, value: float) -> float:
        return self.decode(self.encode(value))


@dataclass(frozen=True)
class QuantizerSpec:
    """Per-node quantizers for the four signaled quantities."""

    quantizers: tuple[dict[str, Quantizer], dict[str, Quantizer]]

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "QuantizerSpec":
        per_node = []
        for l in (0, 1):
            qs = {}
            for q in QUANTITIES:
                lo, hi = cfg.quantity_range(l, q)
                if q in cfg.l_bits:
                    bits = cfg.l_bits[q]
                else:
                    bits = bits_required(lo, hi, cfg.quant_error(l, q))
                qs[q] = Quantizer(v_min=lo, v_max=hi, bits=bits)
            per_node.append(qs)
        return cls(quantizers=(per_node[0], per_node[1]))

    def bits(self, node: int) -> dict[str, int]:
        return {q: self.quantizers[node][q].bits for q in QUANTITIES}


def total_bits(bits: dict[str, int]) -> int:
    """Signaling payload L_l: sum over the four mandatory quantities."""
    missing = [q for q in QUANTITIES if q not in bits]
    if missing:
        raise ValueError(f"missing signaled quantities: {missing}")
    return sum(int(bits[q]) for q in QUANTITIES)


def signaling_power(l_bits: int, channel, cfg: ScenarioConfig) -> float:
    """Constant power that fits ``l_bits`` into the signaling phase.

    Returns inf when the channel magnitude is zero (signaling infeasible,
    treated as cannot-afford).
    """
    if cfg.tau_sig <= 0:
        raise ValueError("tau_sig must be > 0 to signal")
    if l_bits < 0:
        raise ValueError("bit count must be >= 0")
    m = abs(channel)
    g = m * m
    if g == 0.0:
        return math.inf
    return (cfg.sigma2 / g) * (2.0 ** (l_bits / (cfg.bandwidth * cfg.tau_sig)) - 1.0)


@dataclass
class NodeBelief:
    """What the remote side currently believes about one node."""

    e_in: float = 0.0
    battery: float = 0.0
    channel_mag: float = 0.0
    channel_known: bool = False
    buffer: float = 0.0


@dataclass(frozen=True)
class ObservedState:
    """One node's post-signaling view: own exact values, remote beliefs."""

    own_e: float
    own_battery: float
    own_channel_mag: float
    own_buffer: float
    remote_e: float
    remote_battery: float
    remote_channel_mag: float
    remote_buffer: float
    remote_signal_received: bool


@dataclass
class ExchangeMemory:
    """Carried between intervals: beliefs and last realized bit counts."""

    beliefs: tuple[NodeBelief, NodeBelief] = field(
        default_factory=lambda: (NodeBelief(), NodeBelief())
    )
    last_bits: tuple[float, float] = (0.0, 0.0)


def exchange(
    state: GlobalState,
    spec: QuantizerSpec,
    cfg: ScenarioConfig,
    memory: ExchangeMemory | None = None,
) -> tuple[tuple[ObservedState, ObservedState], ExchangeMemory, tuple[float, float], tuple[float, float]]:
    """Run one signaling phase.

    Returns (observed per node, updated memory, signaling energy spent per
    node, signaling power per node with 0 marking "not sent").
    """
    if memory is None:
        memory = ExchangeMemory()
        if math.isinf(cfg.d_max[0]):
            # backlogged transmitter: its buffer level is common knowledge
            memory.beliefs[0].buffer = math.inf
    l_total = [total_bits(spec.bits(l)) for l in (0, 1)]
    beliefs = []
    sig_energy = [0.0, 0.0]
    p_sig = [0.0, 0.0]
    for l in (0, 1):
        node = state.nodes[l]
        power = signaling_power(l_total[l], node.channel, cfg)
        cost = cfg.tau_sig * power
        prev = memory.beliefs[l]
        if math.isfinite(cost) and cost <= node.battery:
            qs = spec.quantizers[l]
            if math.isinf(node.buffer):
                believed_buf = math.inf
            else:
                believed_buf = qs["D"].quantize(node.buffer)
            beliefs.append(
                NodeBelief(
                    e_in=qs["E"].quantize(node.e_in),
                    battery=qs["B"].quantize(node.battery),
                    channel_mag=qs["h"].quantize(node.channel_mag),
                    channel_known=True,
                    buffer=believed_buf,
                )
            )
            sig_energy[l] = cost
            p_sig[l] = power
        else:
            if math.isinf(prev.buffer):
                drained = math.inf
            else:
                drained = max(0.0, prev.buffer - memory.last_bits[l])
            beliefs.append(
                NodeBelief(
                    e_in=0.0,
                    battery=0.0,
                    channel_mag=prev.channel_mag,
                    channel_known=prev.channel_known,
                    buffer=drained,
                )
            )
    received = tuple(sig_energy[l] > 0.0 for l in (0, 1))
    observed = []
    for l in (0, 1):
        node = state.nodes[l]
        remote = beliefs[1 - l]
        observed.append(
            ObservedState(
                own_e=node.e_in,
                own_battery=node.battery,
                own_channel_mag=node.channel_mag,
                own_buffer=node.buffer,
                remote_e=remote.e_in,
                remote_battery=remote.battery,
                remote_channel_mag=remote.channel_mag,
                remote_buffer=remote.buffer,
                remote_signal_received=received[1 - l],
            )
        )
    new_memory = ExchangeMemory(beliefs=(beliefs[0], beliefs[1]), last_bits=memory.last_bits)
    return (observed[0], observed[1]), new_memory, (sig_energy[0], sig_energy[1]), (p_sig[0], p_sig[1])
