import math

import numpy as np
import pytest

from ehrelay.agents import (
    LearnerState,
    PolicyDraws,
    arm_config,
    hasty_action,
    q_hat,
    run_episode,
    select_action,
    select_action_index,
    update_weights,
)
from ehrelay.config import ScenarioConfig, paper_defaults
from ehrelay.scenario import draw_realization, rate
from ehrelay import kernels

from conftest import rng


class TestQHat:
    def test_zero_weights(self):
        assert q_hat(np.ones(6), np.zeros(6)) == 0.0

    def test_one_hot(self):
        w = np.zeros(6)
        w[3] = 2.0
        f = np.zeros(6)
        f[3] = 1.0
        assert q_hat(f, w) == 2.0

    def test_counts_active_features(self):
        f = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 1.0])
        assert q_hat(f, np.ones(6)) == 4.0


class TestSelectAction:
    def test_greedy_unique_maximizer(self):
        q = np.array([0.1, 0.9, 0.3, 0.9001])
        for u in (0.0, 0.5, 0.99):
            assert select_action_index(q, 4, 0.0, 0.5, u) == 3

    def test_greedy_respects_feasible_prefix(self):
        q = np.array([0.1, 0.2, 5.0])
        assert select_action_index(q, 2, 0.0, 0.5, 0.0) == 1

    def test_only_zero_feasible(self):
        q = np.array([0.0, 9.0, 9.0])
        assert select_action_index(q, 1, 0.0, 0.9, 0.9) == 0

    def test_explore_uniform_over_feasible(self):
        r = rng(21)
        n, nfeas, draws = 10, 7, 100_000
        counts = np.zeros(nfeas)
        q = r.random(n)
        for _ in range(draws):
            k = select_action_index(q, nfeas, 1.0, float(r.random()), float(r.random()))
            counts[k] += 1
        expected = draws / nfeas
        sd = math.sqrt(draws * (1 / nfeas) * (1 - 1 / nfeas))
        assert np.all(np.abs(counts - expected) < 5 * sd)

    def test_tie_break_uniform(self):
        r = rng(22)
        q = np.array([1.0, 0.5, 1.0, 1.0, 0.2])
        counts = {0: 0, 2: 0, 3: 0}
        for _ in range(60_000):
            k = select_action_index(q, 5, 0.0, 0.5, float(r.random()))
            counts[k] += 1
        for k in counts:
            assert abs(counts[k] - 20_000) < 5 * math.sqrt(60_000 * (1 / 3) * (2 / 3))

    def test_rng_wrapper(self):
        q = np.array([0.0, 1.0])
        assert select_action(q, 2, 0.0, rng(23)) == 1

    def test_never_returns_infeasible(self):
        r = rng(24)
        for _ in range(2000):
            n = int(r.integers(1, 12))
            nfeas = int(r.integers(1, n + 1))
            q = r.standard_normal(n)
            k = select_action_index(q, nfeas, float(r.random()), float(r.random()),
                                    float(r.random()))
            assert 0 <= k < nfeas


class TestUpdateWeights:
    def test_negative_td_leaves_weights(self):
        w = np.array([1.0, 2.0, 0.0, 0.0, 0.0, 0.0])
        before = w.copy()
        t, applied = update_weights(w, np.array([1.0, 0, 0, 0, 0, 0]), 0.0,
                                    np.zeros(6), 0.5, 0.9)
        assert t < 0 and not applied
        assert np.array_equal(w, before)

    def test_one_hot_hand_update(self):
        w = np.zeros(6)
        f = np.zeros(6)
        f[2] = 1.0
        t, applied = update_weights(w, f, 1.0, np.zeros(6), 1.0, 0.0)
        assert applied and t == 1.0
        assert list(w) == [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]

    def test_zero_feature_vector_no_change(self):
        w = np.ones(6)
        before = w.copy()
        t, applied = update_weights(w, np.zeros(6), 5.0, np.ones(6), 1.0, 0.9)
        assert applied  # the td term is positive, the increment is zero
        assert np.array_equal(w, before)

    def test_exact_gated_increment(self):
        r = rng(25)
        w = np.zeros(6)
        gamma = 0.9
        for i in range(1, 3000):
            f = (r.random(6) < 0.5).astype(np.float64)
            fn = (r.random(6) < 0.5).astype(np.float64)
            reward = float(r.random())
            alpha = 1.0 / i
            before = w.copy()
            t_expected = reward + gamma * float(np.dot(fn, w)) - float(np.dot(f, w))
            t, applied = update_weights(w, f, reward, fn, alpha, gamma)
            assert t == t_expected
            if t_expected > 0.0:
                assert applied
                assert np.array_equal(w, before + (alpha * t_expected) * f)
            else:
                assert not applied
                assert np.array_equal(w, before)


class TestHasty:
    def test_empty_battery(self):
        cfg = paper_defaults().with_tau_sig(0.0)
        assert hasty_action(0, 0.0, 1.0, math.inf, cfg) == 0.0
        assert hasty_action(1, 0.0, 1.0, 100.0, cfg) == 0.0

    def test_relay_with_empty_buffer(self):
        cfg = paper_defaults().with_tau_sig(0.0)
        assert hasty_action(1, 5.0, 1.0, 0.0, cfg) == 0.0

    def test_transmitter_drains_battery(self):
        cfg = ScenarioConfig(tau=1.0, tau_sig=0.0, bandwidth=1.0, sigma2=1.0,
                             e_max=(4.0, 4.0), b_max=(10.0, 10.0),
                             d_max=(math.inf, 100.0), delta=(1.0, 1.0))
        cfg.validate()
        assert hasty_action(0, 5.0, 1.0, math.inf, cfg) == 5.0
        assert hasty_action(0, 4.5, 1.0, math.inf, cfg) == 4.0

    def test_relay_respects_data_causality(self):
        cfg = ScenarioConfig(tau=1.0, tau_sig=0.0, bandwidth=1.0, sigma2=1.0,
                             e_max=(4.0, 4.0), b_max=(10.0, 10.0),
                             d_max=(math.inf, 100.0), delta=(1.0, 1.0))
        cfg.validate()
        d = rate(3.0, 1.0, cfg) + 0.1
        p = hasty_action(1, 10.0, 1.0, d, cfg)
        assert p == 3.0
        assert rate(p, 1.0, cfg) <= d


class TestEpisodes:
    def test_single_interval_episode(self):
        cfg = paper_defaults(n_intervals=1)
        real = draw_realization(cfg, np.random.SeedSequence([1, 0, 0]))
        draws = PolicyDraws.draw(1, np.random.SeedSequence([1, 1, 0, 0]))
        state = LearnerState.fresh()
        res = run_episode(cfg, "marl", real, draws, state)
        assert res.total_throughput == 0.0
        assert np.array_equal(state.weights, np.zeros((2, 6)))

    def test_deterministic_repeat(self):
        cfg = paper_defaults(n_intervals=50)
        real = draw_realization(cfg, np.random.SeedSequence([2, 0, 0]))
        draws = PolicyDraws.draw(50, np.random.SeedSequence([2, 1, 0, 0]))
        a = run_episode(cfg, "marl", real, draws, LearnerState.fresh())
        b = run_episode(cfg, "marl", real, draws, LearnerState.fresh())
        assert np.array_equal(a.trace, b.trace)

    def test_throughput_bounded_by_relay_rates(self):
        cfg = paper_defaults(n_intervals=50)
        real = draw_realization(cfg, np.random.SeedSequence([3, 0, 0]))
        draws = PolicyDraws.draw(50, np.random.SeedSequence([3, 1, 0, 0]))
        res = run_episode(cfg, "marl", real, draws, LearnerState.fresh())
        p_max = cfg.grid(1).p_max
        bound = sum(rate(p_max, float(real.channel_mag[1, i]), cfg) for i in range(50))
        assert 0.0 <= res.total_throughput <= bound

    def test_unknown_arm_rejected(self):
        cfg = paper_defaults(n_intervals=5)
        real = draw_realization(cfg, np.random.SeedSequence([4, 0, 0]))
        with pytest.raises(ValueError, match="arm"):
            run_episode(cfg, "telepathy", real, PolicyDraws.none(5), LearnerState.fresh())

    def test_nocoop_ignores_signaling_phase(self):
        base = paper_defaults(n_intervals=60)
        real = draw_realization(base, np.random.SeedSequence([5, 0, 0]))
        draws = PolicyDraws.draw(60, np.random.SeedSequence([5, 1, 0, 0]))
        runs = []
        for f in (0.0025, 0.05):
            acfg = arm_config(base.with_tau_sig(f), "nocoop")
            res = run_episode(acfg, "nocoop", real, draws, LearnerState.fresh())
            runs.append(res.trace)
        assert np.array_equal(runs[0], runs[1])

    def test_marl_never_violates_energy_causality(self):
        cfg = paper_defaults(n_intervals=80)
        real = draw_realization(cfg, np.random.SeedSequence([6, 0, 0]))
        draws = PolicyDraws.draw(80, np.random.SeedSequence([6, 1, 0, 0]))
        res = run_episode(cfg, "marl", real, draws, LearnerState.fresh())
        tr = res.trace
        for l, (tb, tp, tps) in enumerate(((kernels.T_B1, kernels.T_P1, kernels.T_PS1),
                                           (kernels.T_B2, kernels.T_P2, kernels.T_PS2))):
            spend = cfg.tau_sig * tr[:, tps] + cfg.tau_data * tr[:, tp]
            assert np.all(spend <= tr[:, tb] + 1e-12)
