"""Episode orchestration: paired randomness across arms, bootstrap
aggregation, and the sweep recipes.

Randomness derivation (all from one master seed):
  exogenous draws   SeedSequence([seed, 0, episode])          -> shared by arms
  policy draws      SeedSequence([seed, 1, episode, arm_id])
  bootstrap         SeedSequence([seed, 2, arm_id, point_id])
The exogenous stream never depends on the sweep point, so arms that ignore
the swept variable reproduce bit-identical results across the sweep.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .agents import (
    LearnerState,
    OracleScaleError,
    PolicyDraws,
    arm_config,
    offline_oracle,
    run_episode,
)
from .config import ScenarioConfig, ArrivalModel, relay_buffer_bits
from .scenario import Realization, draw_realization

ARM_IDS = {"marl": 0, "nocoop": 1, "hasty": 2, "oracle": 3, "marl_fsr": 4, "marl_rbf": 5}

BOOTSTRAP_RESAMPLES = 10_000

SWEEPS = ("tau_sig", "buffer", "emax", "lambda", "convergence")


@dataclass(frozen=True)
class ExperimentPlan:
    """One sweep: variable values, competing arms, episode budget, seed."""

    name: str
    sweep: str
    values: tuple
    arms: tuple[str, ...]
    base: ScenarioConfig
    n_episodes: int
    seed: int
    emax_ratios: tuple[float, ...] = (10.0, 1.0, 0.1)
    packet_bits: float = 200e3
    oracle_grid_actions: int | None = 11
    oracle_episodes: int | None = None

    def validate(self) -> None:
        if self.sweep not in SWEEPS:
            raise ValueError(f"unknown sweep {self.sweep!r}")
        if not self.values:
            raise ValueError("sweep value list must not be empty")
        for arm in self.arms:
            if arm not in ARM_IDS:
                raise ValueError(f"unknown arm {arm!r}")
        if self.n_episodes < 1:
            raise ValueError("need at least one episode")


def exo_seed(seed: int, episode: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, 0, episode])


def policy_seed(seed: int, episode: int, arm: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, 1, episode, ARM_IDS[arm]])


def realization_hash(real: Realization) -> str:
    """Trace hash of the exogenous sequences (paired-draw audits)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(real.energy).tobytes())
    h.update(np.ascontiguousarray(real.channel_mag).tobytes())
    h.update(np.ascontiguousarray(real.arrivals).tobytes())
    return h.hexdigest()


def bootstrap_interval(values: np.ndarray, rng: np.random.Generator,
                       n_resamples: int = BOOTSTRAP_RESAMPLES) -> tuple[float, float, float]:
    """Mean and percentile-bootstrap 95% interval of the mean."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    mean = float(np.mean(values))
    if n < 2:
        return mean, mean, mean
    idx = rng.integers(0, n, size=(n_resamples, n))
    means = values[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return mean, float(lo), float(hi)


@dataclass
class ArmPointResult:
    """Per-episode metrics of one arm at one sweep point."""

    arm: str
    value: float
    episodes: dict[str, np.ndarray] = field(default_factory=dict)

    def aggregates(self, seed: int, point_id: int) -> list[tuple[str, float, float, float]]:
        out = []
        for metric in sorted(self.episodes):
            rng = np.random.default_rng(
                np.random.SeedSequence([seed, 2, ARM_IDS[self.arm], point_id]))
            mean, lo, hi = bootstrap_interval(self.episodes[metric], rng)
            out.append((metric, mean, lo, hi))
        return out


def _oracle_config(cfg: ScenarioConfig, grid_actions: int | None) -> ScenarioConfig:
    if grid_actions is None or grid_actions < 2:
        return cfg
    delta = (cfg.b_max[0] / (grid_actions - 1), cfg.b_max[1] / (grid_actions - 1))
    return replace(cfg, delta=delta)


def run_arm(point_cfg: ScenarioConfig, arm: str, n_episodes: int, seed: int,
            value: float, oracle_grid_actions: int | None = None) -> ArmPointResult:
    """Run ``n_episodes`` of one arm at one sweep point.

    Learning arms carry weights across episodes (sequential by contract);
    every arm consumes the same exogenous substreams, episode by episode.
    """
    cfg = arm_config(point_cfg, arm)
    if arm == "oracle":
        cfg = _oracle_config(cfg, oracle_grid_actions)
    n_int = cfg.n_intervals
    keys = ("throughput_bits", "normalized_throughput", "relay_overflow_events",
            "tx_overflow_events", "dropped_bits", "battery_overflow_energy",
            "signaling_energy", "delivered_fraction")
    acc: dict[str, list[float]] = {k: [] for k in keys}
    state = LearnerState.fresh()
    sched_offset = 0
    for ep in range(n_episodes):
        if cfg.learning_mode == "fresh":
            state = LearnerState.fresh()
            state.sched_offset = sched_offset  # used under global indexing
        real = draw_realization(cfg, exo_seed(seed, ep))
        if arm == "oracle":
            res = offline_oracle(real, cfg)
            total = res.value_bound
            acc["throughput_bits"].append(total)
            acc["normalized_throughput"].append(total / n_int)
            acc["relay_overflow_events"].append(0.0)
            acc["tx_overflow_events"].append(0.0)
            acc["dropped_bits"].append(0.0)
            acc["battery_overflow_energy"].append(0.0)
            acc["signaling_energy"].append(0.0)
            arrived = float(np.sum(real.arrivals))
            acc["delivered_fraction"].append(total / arrived if arrived > 0 else 1.0)
            continue
        draws = PolicyDraws.draw(n_int, policy_seed(seed, ep, arm))
        res = run_episode(cfg, arm, real, draws, state)
        sched_offset = state.sched_offset
        total = res.total_throughput
        acc["throughput_bits"].append(total)
        acc["normalized_throughput"].append(total / n_int)
        acc["relay_overflow_events"].append(float(res.relay_drop_events))
        acc["tx_overflow_events"].append(float(res.tx_drop_events))
        acc["dropped_bits"].append(res.dropped_bits)
        acc["battery_overflow_energy"].append(res.overflow_energy)
        acc["signaling_energy"].append(res.signaling_energy)
        arrived = float(np.sum(real.arrivals))
        acc["delivered_fraction"].append(total / arrived if arrived > 0 else 1.0)
    episodes = {k: np.asarray(v) for k, v in acc.items()}
    return ArmPointResult(arm=arm, value=value, episodes=episodes)


def point_config(plan: ExperimentPlan, value, ratio: float | None = None) -> ScenarioConfig:
    """Scenario config for one sweep point."""
    base = plan.base
    if plan.sweep == "tau_sig":
        return base.with_tau_sig(float(value) * base.tau)
    if plan.sweep == "buffer":
        return replace(base, d_max=(base.d_max[0], relay_buffer_bits(base, float(value))))
    if plan.sweep == "emax":
        e1 = float(value)
        e2 = e1 * (ratio if ratio is not None else 1.0)
        b = (2.0 * e1, 2.0 * e2)
        cfg = replace(base, e_max=(e1, e2), b_max=b, delta=None)
        d2 = cfg.bandwidth * cfg.tau * math.log2(1.0 + b[0] / cfg.tau)
        return replace(cfg, d_max=(base.d_max[0], d2))
    if plan.sweep == "lambda":
        d = base.bandwidth * base.tau * math.log2(1.0 + 2.0 * base.e_max[0] / base.tau)
        return replace(
            base,
            arrivals=ArrivalModel(mode="poisson", lam=float(value), packet_bits=plan.packet_bits),
            d_max=(d, d),
        )
    if plan.sweep == "convergence":
        return replace(base, n_intervals=int(value))
    raise ValueError(f"unknown sweep {plan.sweep!r}")


@dataclass
class SweepResult:
    plan: ExperimentPlan
    # rows: (sweep value, arm, metric, mean, ci_lo, ci_hi)
    rows: list[tuple]
    points: dict = field(default_factory=dict)  # (value_key, arm) -> ArmPointResult

    def table(self, metric: str, arm: str) -> list[tuple[float, float, float, float]]:
        return [(v, m, lo, hi) for (v, a, met, m, lo, hi) in self.rows
                if a == arm and met == metric]


def run_sweep(plan: ExperimentPlan, threads: int = 1) -> SweepResult:
    """Run every (point, arm) of a plan; deterministic regardless of the
    thread count (tasks are reduced in plan order)."""
    plan.validate()
    tasks = []  # (point_id, value_key, arm, cfg, n_episodes)
    if plan.sweep == "emax":
        point_id = 0
        for ratio in plan.emax_ratios:
            for value in plan.values:
                cfg = point_config(plan, value, ratio)
                for arm in plan.arms:
                    if arm == "oracle" and ratio > 1.0:
                        continue  # relay-side overflow cannot be avoided
                    n_ep = plan.n_episodes
                    if arm == "oracle" and plan.oracle_episodes:
                        n_ep = plan.oracle_episodes
                    tasks.append((point_id, (ratio, float(value)), arm, cfg, n_ep))
                point_id += 1
    elif plan.sweep == "tau_sig":
        flat_done = set()
        for point_id, value in enumerate(plan.values):
            cfg = point_config(plan, value)
            for arm in plan.arms:
                if arm in ("nocoop", "hasty", "oracle"):
                    if arm in flat_done:
                        continue  # signaling-free arms are flat: evaluate once
                    flat_done.add(arm)
                n_ep = plan.n_episodes
                if arm == "oracle" and plan.oracle_episodes:
                    n_ep = plan.oracle_episodes
                tasks.append((point_id, float(value), arm, cfg, n_ep))
    else:
        for point_id, value in enumerate(plan.values):
            cfg = point_config(plan, value)
            for arm in plan.arms:
                n_ep = plan.n_episodes
                if arm == "oracle" and plan.oracle_episodes:
                    n_ep = plan.oracle_episodes
                tasks.append((point_id, float(value), arm, cfg, n_ep))

    def _work(task):
        point_id, value_key, arm, cfg, n_ep = task
        v = value_key[1] if isinstance(value_key, tuple) else value_key
        return run_arm(cfg, arm, n_ep, plan.seed, v,
                       oracle_grid_actions=plan.oracle_grid_actions)

    # results[(value_key, arm)] = (bootstrap_point_id, order_id, ArmPointResult)
    results: dict = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for task, res in zip(tasks, pool.map(_work, tasks)):
                results[(task[1], task[2])] = (task[0], task[0], res)
    else:
        for task in tasks:
            results[(task[1], task[2])] = (task[0], task[0], _work(task))

    if plan.sweep == "tau_sig":
        # replicate the flat arms across every sweep value; they keep the
        # source bootstrap stream so replicated rows are bit-identical
        for point_id, value in enumerate(plan.values):
            for arm in plan.arms:
                key = (float(value), arm)
                if key not in results and arm in ("nocoop", "hasty", "oracle"):
                    src_pid, _, src = results[(float(plan.values[0]), arm)]
                    results[key] = (src_pid, point_id, ArmPointResult(
                        arm=arm, value=float(value), episodes=src.episodes))

    rows = []
    points = {}
    ordered = sorted(results.items(), key=lambda kv: (kv[1][1], ARM_IDS[kv[0][1]]))
    for (value_key, arm), (agg_pid, _, res) in ordered:
        points[(value_key, arm)] = res
        for metric, mean, lo, hi in res.aggregates(plan.seed, agg_pid):
            rows.append((value_key, arm, metric, mean, lo, hi))
    return SweepResult(plan=plan, rows=rows, points=points)


def sweep_csv(result: SweepResult) -> str:
    """Long-format CSV: sweep value, arm, mean, ci bounds, metric name."""
    lines = ["sweep_value,arm,mean,ci_low,ci_high,metric"]
    for value_key, arm, metric, mean, lo, hi in result.rows:
        if isinstance(value_key, tuple):
            value_txt = f"{value_key[1]:.9g}@r{value_key[0]:g}"
        else:
            value_txt = f"{value_key:.9g}"
        lines.append(f"{value_txt},{arm},{mean:.9g},{lo:.9g},{hi:.9g},{metric}")
    return "\n".join(lines) + "\n"


# Default desk-scale sweep recipes.


def default_plan(sweep: str, base: ScenarioConfig, seed: int,
                 arms: tuple[str, ...] | None = None,
                 n_episodes: int | None = None,
                 values: tuple | None = None,
                 packet_bits: float | None = None) -> ExperimentPlan:
    n_ep = n_episodes if n_episodes is not None else base.n_episodes
    if sweep == "tau_sig":
        vals = values or (0.0025, 0.005, 0.01, 0.02, 0.03, 0.04, 0.05,
                          0.06, 0.07, 0.08, 0.09, 0.10)
        return ExperimentPlan(name="tau_sig", sweep="tau_sig", values=tuple(vals),
                              arms=arms or ("marl", "nocoop", "hasty"),
                              base=base, n_episodes=n_ep, seed=seed)
    if sweep == "buffer":
        vals = values or (0.5, 1.0, 2.0, 5.0, 10.0)
        return ExperimentPlan(name="buffer", sweep="buffer", values=tuple(vals),
                              arms=arms or ("marl", "nocoop", "hasty"),
                              base=base, n_episodes=n_ep, seed=seed)
    if sweep == "emax":
        vals = values or tuple(2.0 * 10.0 ** (db / 10.0) for db in (2.0, 5.0, 8.0))
        return ExperimentPlan(name="emax", sweep="emax", values=tuple(vals),
                              arms=arms or ("marl", "oracle"),
                              base=base, n_episodes=n_ep, seed=seed,
                              oracle_episodes=max(10, n_ep // 4))
    if sweep == "lambda":
        vals = values or (1.0, 2.0, 3.0, 5.0, 8.0)
        return ExperimentPlan(name="lambda", sweep="lambda", values=tuple(vals),
                              arms=arms or ("marl", "nocoop", "hasty"),
                              base=base, n_episodes=n_ep, seed=seed,
                              packet_bits=packet_bits if packet_bits else 200e3)
    if sweep == "convergence":
        vals = values or (25, 50, 100, 200)
        return ExperimentPlan(name="convergence", sweep="convergence",
                              values=tuple(vals),
                              arms=arms or ("marl", "marl_fsr", "marl_rbf", "nocoop"),
                              base=base, n_episodes=n_ep, seed=seed)
    raise ValueError(f"unknown sweep {sweep!r}")
