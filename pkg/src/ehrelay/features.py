"""Binary feature functions, water-filling, and the FSR/RBF bases.

All features evaluate a node's own exact quantities plus whatever it
believes about the other node after the signaling phase. Both nodes share
one channel-mean estimate per link, built from the believed (quantized or
rolled-forward) magnitudes so that their cross-node power estimates agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ActionGrid, ScenarioConfig
from .signaling import ObservedState

N_FEATURES = 6
STATE_DIMS = 8  # E1, E2, B1, B2, |h1|, |h2|, D1, D2


@dataclass
class ChannelEstimate:
    """Running arithmetic mean of believed channel magnitudes for one link."""

    mean: float = 0.0
    count: int = 0

    def update(self, value: float) -> None:
        self.count += 1
        self.mean += (value - self.mean) / self.count

    @property
    def known(self) -> bool:
        return self.count > 0


def _round_half_down(x: float) -> int:
    return int(math.ceil(x - 0.5))


def _grid_floor(x: float) -> int:
    """floor with a small relative tolerance against float noise."""
    return int(math.floor(x + 1e-9 * max(1.0, abs(x))))


def water_fill_power(
    battery: float,
    e_in: float,
    channel_mag: float,
    channel_mean: float,
    cfg: ScenarioConfig,
    grid: ActionGrid,
) -> float:
    """Water-filling between the current channel and its running mean.

    The continuous level is rounded to the nearest grid power (ties toward
    the lower one) and clamped to what the battery can back over the data
    phase. Zero channel magnitudes yield 0.
    """
    return grid.delta * water_fill_index(battery, e_in, channel_mag, channel_mean, cfg, grid)


def water_fill_index(
    battery: float,
    e_in: float,
    channel_mag: float,
    channel_mean: float,
    cfg: ScenarioConfig,
    grid: ActionGrid,
) -> int:
    if channel_mag <= 0.0 or channel_mean <= 0.0:
        return 0
    td = cfg.tau_data
    level = 0.5 * (battery / td + e_in / td + cfg.sigma2 * (1.0 / channel_mean + 1.0 / channel_mag))
    p = min(battery / td, max(0.0, level - cfg.sigma2 / channel_mag))
    k = _round_half_down(p / grid.delta)
    k_feasible = _grid_floor(battery / (td * grid.delta))
    return max(0, min(k, k_feasible, grid.n - 1))


def _rates(grid: ActionGrid, channel_mag: float, cfg: ScenarioConfig) -> np.ndarray:
    # scalar math.log2 keeps this bit-identical to the jitted kernels
    g = channel_mag * channel_mag
    powers = grid.powers
    out = np.empty(grid.n)
    for k in range(grid.n):
        out[k] = cfg.tau_data * cfg.bandwidth * math.log2(1.0 + g * powers[k] / cfg.sigma2)
    return out


def f1(obs: ObservedState, p: float, cfg: ScenarioConfig, node: int) -> int:
    """Avoids battery overflow and respects the battery for the data phase."""
    td = cfg.tau_data
    ok = (obs.own_battery + obs.own_e - td * p <= cfg.b_max[node]) and (td * p <= obs.own_battery)
    return int(ok)


def f2(obs: ObservedState, p: float, estimate: ChannelEstimate, cfg: ScenarioConfig, grid: ActionGrid) -> int:
    """Matches the water-filling power for the current channel."""
    target = water_fill_index(
        obs.own_battery, obs.own_e, obs.own_channel_mag,
        estimate.mean if estimate.known else 0.0, cfg, grid,
    )
    return int(grid.index_of(p) == target)


def f3(obs: ObservedState, p: float, cfg: ScenarioConfig, grid: ActionGrid, node: int) -> int:
    """Depletes the battery when the incoming harvest alone would overflow it."""
    if obs.own_e < cfg.b_max[node]:
        return 0
    k = min(_grid_floor(obs.own_battery / (cfg.tau_data * grid.delta)), grid.n - 1)
    return int(grid.index_of(p) == k)


def f4(obs: ObservedState, p: float, cfg: ScenarioConfig) -> int:
    """Rate backed by the buffer and energy backed by the battery."""
    g = obs.own_channel_mag * obs.own_channel_mag
    r = cfg.tau_data * cfg.bandwidth * math.log2(1.0 + g * p / cfg.sigma2)
    return int((r <= obs.own_buffer) and (cfg.tau_data * p <= obs.own_battery))


def f5_index(obs: ObservedState, cfg: ScenarioConfig, grid: ActionGrid) -> int:
    """Grid power coming closest to draining the buffer from below.

    Among powers with rate <= buffer and energy backed by the battery, the
    gap buffer - rate is minimized; ties resolve to the smallest power, so a
    dead channel maps to 0.
    """
    if obs.own_channel_mag <= 0.0:
        return 0
    rates = _rates(grid, obs.own_channel_mag, cfg)
    feasible = (rates <= obs.own_buffer) & (cfg.tau_data * grid.powers <= obs.own_battery)
    return int(np.sum(feasible)) - 1  # both constraints are prefixes of the grid


def f5(obs: ObservedState, p: float, cfg: ScenarioConfig, grid: ActionGrid) -> int:
    return int(grid.index_of(p) == f5_index(obs, cfg, grid))


def remote_power_estimate(
    obs: ObservedState,
    remote_estimate: ChannelEstimate,
    cfg: ScenarioConfig,
    remote_grid: ActionGrid,
) -> int:
    """Estimate the other node's power: water-filling on believed values,
    scaled down to the smallest grid power that still drains its believed
    buffer whenever the water-filling rate overshoots it."""
    hbar = remote_estimate.mean if remote_estimate.known else 0.0
    k = water_fill_index(
        obs.remote_battery, obs.remote_e, obs.remote_channel_mag, hbar, cfg, remote_grid
    )
    if k == 0 or math.isinf(obs.remote_buffer):
        return k
    rates = _rates(remote_grid, obs.remote_channel_mag, cfg)
    if rates[k] > obs.remote_buffer:
        k = int(np.argmax(rates >= obs.remote_buffer))
    return k


def f6(
    obs: ObservedState,
    p: float,
    remote_estimate: ChannelEstimate,
    cfg: ScenarioConfig,
    grid: ActionGrid,
    remote_grid: ActionGrid,
    node: int,
) -> int:
    """Keeps the relay buffer within [0, d_max] under the estimated joint flow.

    The transmitter checks its own outflow against the believed relay buffer
    and the relay's estimated drain; the relay checks its own drain against
    its exact buffer and the transmitter's estimated inflow.
    """
    k_rem = remote_power_estimate(obs, remote_estimate, cfg, remote_grid)
    g_rem = obs.remote_channel_mag * obs.remote_channel_mag
    r_rem = cfg.tau_data * cfg.bandwidth * math.log2(
        1.0 + g_rem * remote_grid.powers[k_rem] / cfg.sigma2
    )
    g_own = obs.own_channel_mag * obs.own_channel_mag
    r_own = cfg.tau_data * cfg.bandwidth * math.log2(
        1.0 + g_own * p / cfg.sigma2
    )
    if node == 0:
        level = r_own + obs.remote_buffer - r_rem
    else:
        level = r_rem + obs.own_buffer - r_own
    return int(0.0 <= level <= cfg.d_max[1])


def feature_vector(
    obs: ObservedState,
    p: float,
    estimates: tuple[ChannelEstimate, ChannelEstimate],
    cfg: ScenarioConfig,
    node: int,
) -> np.ndarray:
    """The six-entry binary feature vector for one node and power."""
    grid = cfg.grid(node)
    remote_grid = cfg.grid(1 - node)
    own_est = estimates[node]
    remote_est = estimates[1 - node]
    return np.array(
        [
            f1(obs, p, cfg, node),
            f2(obs, p, own_est, cfg, grid),
            f3(obs, p, cfg, grid, node),
            f4(obs, p, cfg),
            f5(obs, p, cfg, grid),
            f6(obs, p, remote_est, cfg, grid, remote_grid, node),
        ],
        dtype=np.float64,
    )


# ---------------------------------------------------------------------------
# Alternative bases: fixed sparse representation and radial basis functions.


def state_dimensions(obs: ObservedState, node: int) -> np.ndarray:
    """Observed 8-dimensional state in the fixed order (E1, E2, B1, B2,
    |h1|, |h2|, D1, D2)."""
    own = (obs.own_e, obs.own_battery, obs.own_channel_mag, obs.own_buffer)
    rem = (obs.remote_e, obs.remote_battery, obs.remote_channel_mag, obs.remote_buffer)
    first, second = (own, rem) if node == 0 else (rem, own)
    return np.array(
        [first[0], second[0], first[1], second[1], first[2], second[2], first[3], second[3]],
        dtype=np.float64,
    )


def dimension_ranges(cfg: ScenarioConfig) -> np.ndarray:
    """Upper bound per state dimension (lower bounds are all zero)."""
    d1 = cfg.d_max[0]
    if math.isinf(d1):
        d1 = cfg.d_max[1]
    return np.array(
        [cfg.e_max[0], cfg.e_max[1], cfg.b_max[0], cfg.b_max[1],
         cfg.h_cap, cfg.h_cap, d1, cfg.d_max[1]],
        dtype=np.float64,
    )


def fsr_tiles_per_dim(cfg: ScenarioConfig) -> int:
    """Tiles per dimension: each dimension quantized with the action-grid
    step scaled to its range (50 tiles for the default 2% grid)."""
    return max(1, cfg.grid(0).n - 1)


def fsr_tile_indices(state8: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    """Active tile per dimension; values exactly on a boundary take the
    lower tile."""
    n_tiles = fsr_tiles_per_dim(cfg)
    widths = dimension_ranges(cfg) / n_tiles
    idx = np.ceil(state8 / widths) - 1.0
    idx = np.where(np.isnan(idx), n_tiles - 1.0, idx)  # inf/inf guard
    return np.clip(idx, 0, n_tiles - 1).astype(np.int64)


def fsr_features(obs: ObservedState, p: float, cfg: ScenarioConfig, node: int) -> np.ndarray:
    """One-hot tiles per dimension, concatenated, in the block of the chosen
    action (all other action blocks are zero)."""
    grid = cfg.grid(node)
    n_tiles = fsr_tiles_per_dim(cfg)
    block = STATE_DIMS * n_tiles
    vec = np.zeros(grid.n * block)
    k = grid.index_of(p)
    tiles = fsr_tile_indices(state_dimensions(obs, node), cfg)
    for d in range(STATE_DIMS):
        vec[k * block + d * n_tiles + tiles[d]] = 1.0
    return vec


def rbf_centers(cfg: ScenarioConfig) -> tuple[np.ndarray, float]:
    """Tensor grid of centers over the unit-normalized state cube and the
    kernel width (half the center spacing)."""
    m = cfg.rbf_centers_per_dim
    axis = np.linspace(0.0, 1.0, m)
    mesh = np.meshgrid(*([axis] * STATE_DIMS), indexing="ij")
    centers = np.stack([g.ravel() for g in mesh], axis=1)
    sigma = 0.5 * (axis[1] - axis[0]) if m > 1 else 0.5
    return centers, sigma


def rbf_state_features(state8: np.ndarray, centers: np.ndarray, sigma: float, cfg: ScenarioConfig) -> np.ndarray:
    """Gaussian kernel values of the normalized state against every center."""
    ranges = dimension_ranges(cfg)
    s = np.clip(np.nan_to_num(state8 / ranges, nan=1.0, posinf=1.0), 0.0, 1.0)
    diff = centers - s
    d2 = np.sum(diff * diff, axis=1)
    return np.exp(-d2 / (2.0 * sigma * sigma))


def rbf_features(obs: ObservedState, p: float, cfg: ScenarioConfig, node: int) -> np.ndarray:
    """State kernel values in the block of the chosen action."""
    grid = cfg.grid(node)
    centers, sigma = rbf_centers(cfg)
    phi = rbf_state_features(state_dimensions(obs, node), centers, sigma, cfg)
    vec = np.zeros(grid.n * centers.shape[0])
    k = grid.index_of(p)
    vec[k * centers.shape[0]:(k + 1) * centers.shape[0]] = phi
    return vec
