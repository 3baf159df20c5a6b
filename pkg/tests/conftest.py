import math

import numpy as np
import pytest

from ehrelay.config import ScenarioConfig, paper_defaults


@pytest.fixture
def paper_cfg():
    return paper_defaults()


@pytest.fixture
def coarse_cfg():
    """Small, fast scenario: 6-power grids, short episodes."""
    cfg = paper_defaults(n_intervals=20, n_episodes=10)
    from dataclasses import replace
    cfg = replace(cfg, delta=(cfg.b_max[0] / 5.0, cfg.b_max[1] / 5.0))
    cfg.validate()
    return cfg


@pytest.fixture
def unit_cfg():
    """Round numbers for hand-checked examples: tau=1, no signaling phase,
    W=1, sigma2=1, unit-step grids."""
    cfg = ScenarioConfig(
        tau=1.0, tau_sig=0.0, bandwidth=1.0, sigma2=1.0,
        e_max=(4.0, 4.0), b_max=(10.0, 10.0), d_max=(math.inf, 100.0),
        delta=(1.0, 1.0), gamma=0.9, n_intervals=5, n_episodes=2)
    cfg.validate()
    return cfg


def rng(*key):
    return np.random.default_rng(np.random.SeedSequence(list(key)))
