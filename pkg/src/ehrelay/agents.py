"""Policies: the cooperative SARSA learner, its tabular twin, baselines,
and the non-causal scheduling bound.

Episode execution is delegated to the kernels module; the scalar operations
here (action selection, the gated weight update, the tabular updates) are
the contract surface the tests exercise directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import ScenarioConfig
from .features import N_FEATURES, ChannelEstimate, dimension_ranges, fsr_tiles_per_dim, rbf_centers
from .scenario import Realization
from .signaling import QuantizerSpec, total_bits

ARMS = ("marl", "marl_fsr", "marl_rbf", "nocoop", "hasty", "oracle")
LEARNING_ARMS = ("marl", "marl_fsr", "marl_rbf", "nocoop")


# ---------------------------------------------------------------------------
# Contract-level operations


@dataclass
class AgentMemory:
    """One node's learning state."""

    weights: np.ndarray
    estimate: ChannelEstimate = field(default_factory=ChannelEstimate)
    interval: int = 0  # schedule counter (1/i learning and exploration rates)

    @classmethod
    def fresh(cls, n_features: int = N_FEATURES) -> "AgentMemory":
        return cls(weights=np.zeros(n_features))


def q_hat(f: np.ndarray, w: np.ndarray) -> float:
    """Approximate action value: inner product of features and weights."""
    return float(np.dot(f, w))


def select_action_index(q: np.ndarray, n_feasible: int, eps: float,
                        u_explore: float, u_select: float) -> int:
    """Deterministic epsilon-greedy core over the feasible grid prefix.

    ``u_explore``/``u_select`` are uniform draws in [0, 1); greedy ties
    (exact float equality of q values) are broken uniformly among the tied
    feasible powers.
    """
    if n_feasible < 1:
        raise ValueError("the zero power is always feasible")
    if u_explore < eps:
        return min(int(u_select * n_feasible), n_feasible - 1)
    qf = np.asarray(q[:n_feasible], dtype=np.float64)
    ties = np.flatnonzero(qf == np.max(qf))
    j = min(int(u_select * ties.size), ties.size - 1)
    return int(ties[j])


def select_action(q: np.ndarray, n_feasible: int, eps: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy selection drawing its two uniforms from ``rng``."""
    u = rng.random(2)
    return select_action_index(q, n_feasible, eps, u[0], u[1])


def update_weights(w: np.ndarray, f_cur: np.ndarray, reward: float,
                   f_next: np.ndarray, alpha: float, gamma: float) -> tuple[float, bool]:
    """Gated SARSA update: apply alpha * td * f only for a positive scalar
    temporal-difference term. Mutates ``w``; returns (td, applied)."""
    q_next = float(np.dot(f_next, w))
    q_cur = float(np.dot(f_cur, w))
    t = reward + gamma * q_next - q_cur
    if t > 0.0:
        w += (alpha * t) * f_cur
        return t, True
    return t, False


# ---------------------------------------------------------------------------
# Tabular pair (finite games): centralized SARSA and the distributed update


@dataclass
class TabularQ:
    """Dict-backed action-value tables for small finite Markov games."""

    values: dict = field(default_factory=dict)

    def get(self, key) -> float:
        return self.values.get(key, 0.0)

    def set(self, key, value: float) -> None:
        self.values[key] = value


def centralized_sarsa_update(table: TabularQ, state, joint_action, reward: float,
                             next_state, next_joint_action, alpha: float,
                             gamma: float) -> float:
    """Q(S,P) <- (1-a) Q(S,P) + a [R + g Q(S',P')]."""
    cur = table.get((state, joint_action))
    nxt = table.get((next_state, next_joint_action))
    new = (1.0 - alpha) * cur + alpha * (reward + gamma * nxt)
    table.set((state, joint_action), new)
    return new


def distributed_q_update(table: TabularQ, state, action, reward: float,
                         next_state, next_action, alpha: float,
                         gamma: float) -> float:
    """q(S,p) <- max{q(S,p), (1-a) q(S,p) + a [R + g q(S',p')]}."""
    cur = table.get((state, action))
    nxt = table.get((next_state, next_action))
    cand = (1.0 - alpha) * cur + alpha * (reward + gamma * nxt)
    new = max(cur, cand)
    table.set((state, action), new)
    return new


# ---------------------------------------------------------------------------
# Baselines


def hasty_action(node: int, battery: float, channel_mag: float, buffer_bits: float,
                 cfg: ScenarioConfig) -> float:
    """Myopic power choice: the transmitter drains its battery; the relay
    picks the largest power whose rate the buffer can back."""
    grid = cfg.grid(node)
    powers = grid.powers
    feasible = cfg.tau_data * powers <= battery
    if node == 1:
        g = channel_mag * channel_mag
        out = np.empty(grid.n)
        for k in range(grid.n):
            out[k] = cfg.tau_data * cfg.bandwidth * math.log2(1.0 + g * powers[k] / cfg.sigma2)
        feasible = feasible & (out <= buffer_bits)
    return float(powers[int(np.sum(feasible)) - 1])


# ---------------------------------------------------------------------------
# Kernel parameter derivation and episode wrappers


@dataclass(frozen=True)
class KernelParams:
    """Flat arrays handed to the episode kernels, derived from one config."""

    bmax: np.ndarray
    dmax: np.ndarray
    d1_inf: bool
    delta: np.ndarray
    ngrid: np.ndarray
    psig_coef: np.ndarray
    q_vmax: np.ndarray
    q_nlev: np.ndarray
    l_total: tuple[int, int]


def kernel_params(cfg: ScenarioConfig) -> KernelParams:
    spec = QuantizerSpec.from_config(cfg)
    q_vmax = np.zeros((2, 4))
    q_nlev = np.zeros((2, 4))
    l_total = []
    for l in (0, 1):
        bits = spec.bits(l)
        l_total.append(total_bits(bits))
        for j, qname in enumerate(("E", "B", "h", "D")):
            quant = spec.quantizers[l][qname]
            q_vmax[l, j] = quant.v_max
            q_nlev[l, j] = float(quant.n_levels)
    psig_coef = np.zeros(2)
    for l in (0, 1):
        if cfg.tau_sig > 0:
            psig_coef[l] = 2.0 ** (l_total[l] / (cfg.bandwidth * cfg.tau_sig)) - 1.0
        else:
            psig_coef[l] = math.inf
    return KernelParams(
        bmax=np.array(cfg.b_max, dtype=np.float64),
        dmax=np.array(cfg.d_max, dtype=np.float64),
        d1_inf=bool(math.isinf(cfg.d_max[0])),
        delta=np.array(cfg.deltas, dtype=np.float64),
        ngrid=np.array([cfg.grid(0).n, cfg.grid(1).n], dtype=np.int64),
        psig_coef=psig_coef,
        q_vmax=q_vmax,
        q_nlev=q_nlev,
        l_total=(l_total[0], l_total[1]),
    )


@dataclass
class LearnerState:
    """Learning state persisted across the episodes of one experiment arm."""

    weights: np.ndarray  # (2, 6) proposed basis / nocoop
    hbar_mean: np.ndarray
    hbar_cnt: np.ndarray
    sched_offset: int = 0
    # FSR / RBF weight matrices, allocated on demand: (n_actions_l, n_phi)
    w_approx: tuple[np.ndarray, np.ndarray] | None = None

    @classmethod
    def fresh(cls) -> "LearnerState":
        return cls(weights=np.zeros((2, N_FEATURES)), hbar_mean=np.zeros(2),
                   hbar_cnt=np.zeros(2))


@dataclass
class PolicyDraws:
    """Pre-drawn uniforms for the epsilon-greedy decisions of one episode."""

    u_explore: np.ndarray  # (2, I)
    u_select: np.ndarray  # (2, I)

    @classmethod
    def draw(cls, n_intervals: int, seed_seq: np.random.SeedSequence) -> "PolicyDraws":
        rng = np.random.default_rng(seed_seq)
        return cls(u_explore=rng.random((2, n_intervals)),
                   u_select=rng.random((2, n_intervals)))

    @classmethod
    def none(cls, n_intervals: int) -> "PolicyDraws":
        z = np.zeros((2, n_intervals))
        return cls(u_explore=z, u_select=z.copy())


@dataclass
class EpisodeResult:
    """Per-interval trace plus the aggregates the experiments consume."""

    trace: np.ndarray  # (I, kernels.N_TRACE)

    @property
    def total_throughput(self) -> float:
        return float(np.sum(self.trace[:, kernels.T_R2]))

    @property
    def total_sent(self) -> float:
        return float(np.sum(self.trace[:, kernels.T_R1]))

    @property
    def relay_drop_events(self) -> int:
        return int(np.sum(self.trace[:, kernels.T_DROP2] > 0.0))

    @property
    def tx_drop_events(self) -> int:
        return int(np.sum(self.trace[:, kernels.T_DROP1] > 0.0))

    @property
    def dropped_bits(self) -> float:
        return float(np.sum(self.trace[:, kernels.T_DROP1]) + np.sum(self.trace[:, kernels.T_DROP2]))

    @property
    def overflow_energy(self) -> float:
        return float(np.sum(self.trace[:, kernels.T_OVF1]) + np.sum(self.trace[:, kernels.T_OVF2]))

    @property
    def signaling_energy(self) -> float:
        return float(np.sum(self.trace[:, kernels.T_SIGE1]) + np.sum(self.trace[:, kernels.T_SIGE2]))


def _baseline_cfg(cfg: ScenarioConfig) -> ScenarioConfig:
    """Non-cooperative arms skip signaling: the whole interval carries data."""
    return cfg.with_tau_sig(0.0)


def arm_config(cfg: ScenarioConfig, arm: str) -> ScenarioConfig:
    if arm in ("nocoop", "hasty", "oracle"):
        return _baseline_cfg(cfg)
    return cfg


def run_episode(cfg: ScenarioConfig, arm: str, realization: Realization,
                draws: PolicyDraws, state: LearnerState) -> EpisodeResult:
    """Run one episode of ``arm`` on pre-drawn exogenous sequences.

    ``cfg`` must already be the arm's own config (see ``arm_config``).
    Learning arms read and mutate ``state``.
    """
    n_int = realization.n_intervals
    trace = np.zeros((n_int, kernels.N_TRACE))
    kp = kernel_params(cfg)
    offset = state.sched_offset if cfg.schedule_indexing == "global" else 0

    if arm == "marl":
        end = kernels.marl_episode(
            realization.energy, realization.channel_mag, realization.arrivals,
            draws.u_explore, draws.u_select,
            state.weights, state.hbar_mean, state.hbar_cnt, offset,
            cfg.tau_sig, cfg.tau_data, cfg.bandwidth, cfg.sigma2, cfg.gamma,
            kp.bmax, kp.dmax, kp.d1_inf, kp.delta, kp.ngrid, kp.psig_coef,
            kp.q_vmax, kp.q_nlev, trace)
    elif arm == "nocoop":
        end = kernels.nocoop_episode(
            realization.energy, realization.channel_mag, realization.arrivals,
            draws.u_explore, draws.u_select,
            state.weights, state.hbar_mean, state.hbar_cnt, offset,
            cfg.tau_data, cfg.bandwidth, cfg.sigma2, cfg.gamma,
            kp.bmax, kp.dmax, kp.d1_inf, kp.delta, kp.ngrid, trace)
    elif arm == "hasty":
        end = kernels.hasty_episode(
            realization.energy, realization.channel_mag, realization.arrivals,
            cfg.tau_data, cfg.bandwidth, cfg.sigma2,
            kp.bmax, kp.dmax, kp.d1_inf, kp.delta, kp.ngrid, trace)
        end = offset + n_int
    elif arm in ("marl_fsr", "marl_rbf"):
        ranges = dimension_ranges(cfg)
        if arm == "marl_fsr":
            basis_id = kernels.BASIS_FSR
            ntiles = fsr_tiles_per_dim(cfg)
            n_phi = 8 * ntiles
            centers = np.zeros((1, 8))
            inv_two_sig2 = 0.0
        else:
            basis_id = kernels.BASIS_RBF
            centers, sigma = rbf_centers(cfg)
            ntiles = 1
            n_phi = centers.shape[0]
            inv_two_sig2 = 1.0 / (2.0 * sigma * sigma)
        if state.w_approx is None:
            state.w_approx = (np.zeros((int(kp.ngrid[0]), n_phi)),
                              np.zeros((int(kp.ngrid[1]), n_phi)))
        end = kernels.approx_episode(
            realization.energy, realization.channel_mag, realization.arrivals,
            draws.u_explore, draws.u_select,
            state.w_approx[0], state.w_approx[1], offset,
            cfg.tau_sig, cfg.tau_data, cfg.bandwidth, cfg.sigma2, cfg.gamma,
            kp.bmax, kp.dmax, kp.d1_inf, kp.delta, kp.ngrid, kp.psig_coef,
            kp.q_vmax, kp.q_nlev,
            basis_id, ranges, ntiles, centers, inv_two_sig2, trace)
    else:
        raise ValueError(f"unknown episode arm {arm!r}")
    state.sched_offset = int(end)
    return EpisodeResult(trace=trace)


# ---------------------------------------------------------------------------
# Non-causal scheduling bound (grid dynamic program)


class OracleScaleError(ValueError):
    """The instance exceeds the desk-scale contract of the DP bound."""


@dataclass(frozen=True)
class OracleResult:
    value_bound: float  # certified upper bound on any causal policy's bits
    schedule: np.ndarray  # (2, I) grid powers extracted greedily
    # value of the extracted schedule under the bound's own dynamics
    # (full-interval rates, data-phase energy pricing)
    schedule_value: float


ORACLE_WORK_BUDGET = 5e8


def offline_oracle(realization: Realization, cfg: ScenarioConfig,
                   rate_tau: float | None = None) -> OracleResult:
    """Grid-optimal upper bound for one realization, by backward DP over
    upward-rounded (battery, battery, relay-buffer) cells.

    Rates use the full interval; energy is priced at the configured data
    phase, so the bound dominates cooperative and non-cooperative arms
    alike. Desk-scale only: oversized instances and arrival-driven
    transmitter buffers are refused.
    """
    if not cfg.backlogged:
        raise OracleScaleError("the DP bound requires the backlogged transmitter mode")
    n_int = realization.n_intervals
    kp = kernel_params(cfg)
    tau_rate = cfg.tau if rate_tau is None else rate_tau
    td_cost = cfg.tau_data
    wcell_b0 = td_cost * kp.delta[0]
    wcell_b1 = td_cost * kp.delta[1]
    ncell_b0 = int(math.ceil(kp.bmax[0] / wcell_b0)) + 1
    ncell_b1 = int(math.ceil(kp.bmax[1] / wcell_b1)) + 1
    # cell-index safety: bounds below are ceil() of the same float quotients
    # the kernels compute, so upward rounding can never leave the table
    wcell_d = kp.dmax[1] / max(1, ncell_b1 - 1)
    ncell_d = int(math.ceil(kp.dmax[1] / wcell_d)) + 1
    n_states = ncell_b0 * ncell_b1 * ncell_d
    work = float(n_int) * n_states * float(kp.ngrid[0] * kp.ngrid[1])
    if work > ORACLE_WORK_BUDGET:
        raise OracleScaleError(
            f"instance needs ~{work:.2e} transition evaluations "
            f"(budget {ORACLE_WORK_BUDGET:.0e}); use fewer intervals or a coarser grid")
    V = kernels.oracle_dp(
        realization.energy, realization.channel_mag, tau_rate, td_cost,
        cfg.bandwidth, cfg.sigma2, kp.bmax, kp.dmax[1], kp.delta, kp.ngrid,
        wcell_b0, wcell_b1, ncell_b0, ncell_b1, wcell_d, ncell_d)
    value_bound = float(V[0, 0])

    # Greedy forward extraction on the exact dynamics.
    schedule = np.zeros((2, n_int))
    b = [0.0, 0.0]
    d2 = 0.0
    total = 0.0
    powers0 = kp.delta[0] * np.arange(kp.ngrid[0])
    powers1 = kp.delta[1] * np.arange(kp.ngrid[1])
    trw = tau_rate * cfg.bandwidth
    for i in range(n_int):
        g0 = realization.channel_mag[0, i] ** 2
        g1 = realization.channel_mag[1, i] ** 2
        rate0 = trw * np.log2(1.0 + g0 * powers0 / cfg.sigma2)
        rate1 = trw * np.log2(1.0 + g1 * powers1 / cfg.sigma2)
        best = (-math.inf, 0, 0)
        for a0 in range(int(kp.ngrid[0])):
            if td_cost * powers0[a0] > b[0]:
                break
            for a1 in range(int(kp.ngrid[1])):
                if td_cost * powers1[a1] > b[1]:
                    break
                r2 = min(rate1[a1], d2)
                nb0 = min(kp.bmax[0], b[0] - td_cost * powers0[a0] + realization.energy[0, i])
                nb1 = min(kp.bmax[1], b[1] - td_cost * powers1[a1] + realization.energy[1, i])
                nd = min(kp.dmax[1], d2 - r2 + rate0[a0])
                lin = (math.ceil(nb0 / wcell_b0) * ncell_b1
                       + math.ceil(nb1 / wcell_b1)) * ncell_d + math.ceil(nd / wcell_d)
                score = r2 + V[i + 1, int(lin)]
                if score > best[0]:
                    best = (score, a0, a1)
        _, a0, a1 = best
        r2 = min(rate1[a1], d2)
        total += r2
        schedule[0, i] = powers0[a0]
        schedule[1, i] = powers1[a1]
        nd = min(kp.dmax[1], d2 - r2 + rate0[a0])
        b[0] = min(kp.bmax[0], b[0] - td_cost * powers0[a0] + realization.energy[0, i])
        b[1] = min(kp.bmax[1], b[1] - td_cost * powers1[a1] + realization.energy[1, i])
        d2 = nd
    return OracleResult(value_bound=value_bound, schedule=schedule, schedule_value=total)
