import math
from dataclasses import replace

import numpy as np
import pytest

from ehrelay.config import paper_defaults
from ehrelay.scenario import GlobalState, NodeState, initial_state, step
from ehrelay.signaling import (
    ExchangeMemory,
    Quantizer,
    QuantizerSpec,
    bits_required,
    exchange,
    signaling_power,
    total_bits,
)

from conftest import rng


class TestBitsRequired:
    def test_ratio_four_is_one_bit(self):
        assert bits_required(0.0, 4.0, 1.0) == 1

    def test_ratio_hundred_is_six_bits(self):
        # ceil(log2(100) - 1) = ceil(5.6439)
        assert bits_required(0.0, 100.0, 1.0) == 6

    def test_degenerate_clamps_to_one(self):
        assert bits_required(0.0, 1.0, 1.0) == 1

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            bits_required(1.0, 1.0, 0.1)
        with pytest.raises(ValueError):
            bits_required(0.0, 1.0, 0.0)

    def test_monotone_in_error_and_range(self):
        r = rng(5)
        for _ in range(300):
            lo = 0.0
            hi = float(r.uniform(0.5, 1e7))
            e1 = float(r.uniform(1e-6, hi / 2))
            e2 = e1 * float(r.uniform(1.0, 50.0))
            assert bits_required(lo, hi, e1) >= bits_required(lo, hi, e2)
            wider = hi * float(r.uniform(1.0, 50.0))
            assert bits_required(lo, wider, e1) >= bits_required(lo, hi, e1)


class TestTotalBits:
    def test_all_ones(self):
        assert total_bits({"E": 1, "B": 1, "h": 1, "D": 1}) == 4

    def test_reported_counts_sum_to_54(self):
        assert total_bits({"E": 9, "B": 10, "D": 28, "h": 7}) == 54

    def test_missing_quantity_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            total_bits({})
        with pytest.raises(ValueError, match="missing"):
            total_bits({"E": 9, "B": 10, "D": 28})


class TestSignalingPower:
    def test_zero_bits_zero_power(self):
        assert signaling_power(0, 1.0, paper_defaults()) == 0.0

    def test_hand_evaluated_value(self):
        # L=54, W=1e6, tau_sig=0.01, sigma2=1, |h|=1 -> 2^0.0054 - 1
        cfg = paper_defaults()
        assert abs(signaling_power(54, 1.0, cfg) - 3.750e-3) <= 1e-6

    def test_inverse_channel_power_scaling(self):
        cfg = paper_defaults()
        assert signaling_power(54, 0.5, cfg) == 4.0 * signaling_power(54, 1.0, cfg)

    def test_dead_channel_is_infeasible_marker(self):
        assert math.isinf(signaling_power(54, 0.0, paper_defaults()))

    def test_requires_positive_signaling_phase(self):
        cfg = paper_defaults().with_tau_sig(0.0)
        with pytest.raises(ValueError):
            signaling_power(54, 1.0, cfg)

    def test_strictly_decreasing_in_tau_sig(self):
        cfg = paper_defaults()
        r = rng(6)
        for _ in range(200):
            t1 = float(r.uniform(0.001, 0.5))
            t2 = t1 * float(r.uniform(1.01, 20.0))
            if t2 >= cfg.tau:
                continue
            p1 = signaling_power(54, 1.3, cfg.with_tau_sig(t1))
            p2 = signaling_power(54, 1.3, cfg.with_tau_sig(t2))
            assert p2 < p1


class TestQuantizer:
    def test_round_trip_error_bound(self):
        r = rng(7)
        for _ in range(50):
            vmax = float(r.uniform(0.1, 1e7))
            bits = int(r.integers(1, 16))
            q = Quantizer(0.0, vmax, bits)
            values = r.uniform(0.0, vmax, 2000)
            err = np.abs([q.quantize(v) - v for v in values])
            # 2^bits levels keep the error within half a step
            assert err.max() <= vmax / (2 ** (bits + 1)) + 1e-12 * vmax

    def test_tolerable_error_satisfied_by_derived_bits(self):
        r = rng(8)
        for _ in range(50):
            vmax = float(r.uniform(0.5, 1e6))
            e = float(r.uniform(1e-4, 0.3)) * vmax
            q = Quantizer(0.0, vmax, bits_required(0.0, vmax, e))
            values = r.uniform(0.0, vmax, 500)
            assert all(abs(q.quantize(v) - v) <= e for v in values)

    def test_out_of_range_clamps(self):
        q = Quantizer(0.0, 1.0, 4)
        assert q.quantize(2.0) == q.quantize(1.0)
        assert q.quantize(-1.0) == q.quantize(0.0)

    def test_spec_from_config_uses_overrides(self):
        cfg = paper_defaults()
        spec = QuantizerSpec.from_config(cfg)
        assert spec.bits(0) == {"E": 9, "B": 10, "h": 7, "D": 28}
        assert total_bits(spec.bits(0)) == 54
        # without the override, Eq. budget from the 1% fractional error
        cfg2 = replace(cfg, l_bits={})
        spec2 = QuantizerSpec.from_config(cfg2)
        assert spec2.bits(0) == {"E": 6, "B": 6, "h": 6, "D": 6}


class TestExchange:
    def _state(self, cfg, e, b, h, d):
        nodes = (NodeState(e_in=e[0], battery=b[0], channel=h[0], buffer=d[0]),
                 NodeState(e_in=e[1], battery=b[1], channel=h[1], buffer=d[1]))
        return GlobalState(interval=1, nodes=nodes)

    def test_affluent_nodes_exchange_quantized_truth(self):
        cfg = paper_defaults()
        cfg = replace(cfg, d_max=(cfg.d_max[1], cfg.d_max[1]),
                      arrivals=replace(cfg.arrivals, mode="poisson", lam=1.0, packet_bits=1e5))
        cfg.validate()
        spec = QuantizerSpec.from_config(cfg)
        state = self._state(cfg, (1.2, 2.3), (5.0, 6.0), (0.9, 1.1), (1e5, 2e5))
        (obs0, obs1), mem, sig_e, psig = exchange(state, spec, cfg)
        assert obs0.remote_signal_received and obs1.remote_signal_received
        assert obs1.remote_e == spec.quantizers[0]["E"].quantize(1.2)
        assert obs1.remote_battery == spec.quantizers[0]["B"].quantize(5.0)
        assert obs1.remote_channel_mag == spec.quantizers[0]["h"].quantize(0.9)
        assert obs1.remote_buffer == spec.quantizers[0]["D"].quantize(1e5)
        assert obs0.remote_buffer == spec.quantizers[1]["D"].quantize(2e5)
        # own view is exact
        assert obs0.own_battery == 5.0 and obs0.own_e == 1.2
        # energy spent is exactly tau_sig * p_sig
        for l in (0, 1):
            assert sig_e[l] == cfg.tau_sig * psig[l]
            assert psig[l] > 0

    def test_empty_battery_triggers_fallback(self):
        cfg = paper_defaults()
        spec = QuantizerSpec.from_config(cfg)
        state = initial_state(cfg, (1.0, 1.0), (1.0, 1.0))  # batteries empty
        (obs0, obs1), mem, sig_e, psig = exchange(state, spec, cfg)
        assert sig_e == (0.0, 0.0) and psig == (0.0, 0.0)
        assert not obs1.remote_signal_received
        assert obs1.remote_e == 0.0 and obs1.remote_battery == 0.0
        # backlogged transmitter's buffer is common knowledge
        assert math.isinf(obs1.remote_buffer)
        assert obs0.remote_buffer == 0.0

    def test_fallback_rolls_channel_and_drains_buffer(self):
        cfg = replace(paper_defaults(), d_max=(3e6, 3e6),
                      arrivals=replace(paper_defaults().arrivals,
                                       mode="poisson", lam=1.0, packet_bits=1e5))
        cfg.validate()
        spec = QuantizerSpec.from_config(cfg)
        rich = self._state(cfg, (1.0, 1.0), (6.0, 6.0), (1.3, 0.8), (2e5, 4e5))
        (_, _), mem, sig_e, _ = exchange(rich, spec, cfg)
        assert sig_e[0] > 0 and sig_e[1] > 0
        believed_h1 = mem.beliefs[0].channel_mag
        believed_d1 = mem.beliefs[0].buffer
        mem.last_bits = (1.5e5, 0.0)
        # next interval: node 1 broke, node 2 still rich
        poor = self._state(cfg, (2.0, 1.0), (0.0, 6.0), (0.7, 0.9), (3e5, 4e5))
        (obs0, obs1), mem2, sig_e2, _ = exchange(poor, spec, cfg, mem)
        assert sig_e2[0] == 0.0 and sig_e2[1] > 0.0
        assert obs1.remote_channel_mag == believed_h1  # rolled forward
        assert obs1.remote_buffer == max(0.0, believed_d1 - 1.5e5)
        assert obs1.remote_e == 0.0 and obs1.remote_battery == 0.0

    def test_fallback_buffer_never_negative(self):
        cfg = replace(paper_defaults(), d_max=(3e6, 3e6),
                      arrivals=replace(paper_defaults().arrivals,
                                       mode="poisson", lam=1.0, packet_bits=1e5))
        cfg.validate()
        spec = QuantizerSpec.from_config(cfg)
        mem = ExchangeMemory()
        mem.last_bits = (5e6, 5e6)
        state = self._state(cfg, (0.0, 0.0), (0.0, 0.0), (1.0, 1.0), (0.0, 0.0))
        (obs0, obs1), _, _, _ = exchange(state, spec, cfg, mem)
        assert obs1.remote_buffer == 0.0
        assert obs0.remote_buffer == 0.0
