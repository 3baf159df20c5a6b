"""Seeded simulator and multi-agent SARSA learner for energy-harvesting
two-hop relay links, with signaling-overhead modeling, baselines, a
scheduling bound, and a sweep harness."""

from .config import (
    ActionGrid,
    ArrivalModel,
    ConfigError,
    ScenarioConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    paper_defaults,
    relay_buffer_bits,
)
from .scenario import (
    GlobalState,
    IntervalOutcome,
    NodeState,
    Realization,
    draw_realization,
    initial_state,
    rate,
    step,
)
from .signaling import ObservedState, Quantizer, QuantizerSpec, bits_required, exchange, signaling_power, total_bits
from .features import ChannelEstimate, feature_vector, fsr_features, rbf_features, water_fill_power
from .agents import (
    AgentMemory,
    EpisodeResult,
    LearnerState,
    OracleResult,
    OracleScaleError,
    PolicyDraws,
    TabularQ,
    arm_config,
    centralized_sarsa_update,
    distributed_q_update,
    hasty_action,
    offline_oracle,
    q_hat,
    run_episode,
    select_action,
    update_weights,
)

__version__ = "0.1.0"
