#!/usr/bin/env python3
"""Benchmark the compiled kernels against their pure-numpy fallback.

With numba active (the default), each kernel's dispatcher carries the
original Python function as ``.py_func``; both are timed on the same
inputs. Run with EHRELAY_NUMBA=0 to time the fallback build itself.

Usage: python benchmarks/bench_kernels.py [--episodes N] [--intervals I]
"""

import argparse
import time

import numpy as np

from ehrelay import kernels
from ehrelay.agents import LearnerState, PolicyDraws, arm_config, kernel_params, offline_oracle, run_episode
from ehrelay.config import paper_defaults
from ehrelay.scenario import draw_realization


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_episode(arm, cfg, n_episodes, label, use_py):
    acfg = arm_config(cfg, arm)
    reals = [draw_realization(acfg, np.random.SeedSequence([7, 0, ep]))
             for ep in range(n_episodes)]
    draws = [PolicyDraws.draw(acfg.n_intervals, np.random.SeedSequence([7, 1, ep, 0]))
             for ep in range(n_episodes)]

    def run():
        for ep in range(n_episodes):
            run_episode(acfg, arm, reals[ep], draws[ep], LearnerState.fresh())

    if use_py:
        # swap dispatchers for their python functions
        saved = {}
        for name in ("marl_episode", "nocoop_episode", "hasty_episode",
                     "approx_episode", "_exchange", "_apply_transition",
                     "_feature_matrix", "_feature_matrix5", "_select_index",
                     "_wf_index", "_quantize", "_remote_power_index", "_phi_state"):
            fn = getattr(kernels, name)
            if hasattr(fn, "py_func"):
                saved[name] = fn
                setattr(kernels, name, fn.py_func)
        try:
            run()  # warm caches
            dt = _time(run, 2)
        finally:
            for name, fn in saved.items():
                setattr(kernels, name, fn)
    else:
        run()  # compile
        dt = _time(run, 3)
    per_ep = dt / n_episodes * 1e3
    print(f"  {label:<26s} {dt:8.3f} s total   {per_ep:8.3f} ms/episode")
    return dt


def bench_oracle(cfg, label, use_py):
    from dataclasses import replace
    ocfg = replace(arm_config(cfg, "oracle"),
                   delta=(cfg.b_max[0] / 10, cfg.b_max[1] / 10))
    real = draw_realization(ocfg, np.random.SeedSequence([7, 0, 0]))

    def run():
        offline_oracle(real, ocfg)

    if use_py:
        saved = kernels.oracle_dp
        if hasattr(saved, "py_func"):
            kernels.oracle_dp = saved.py_func
        try:
            run()
            dt = _time(run, 2)
        finally:
            kernels.oracle_dp = saved
    else:
        run()
        dt = _time(run, 3)
    print(f"  {label:<26s} {dt:8.3f} s per realization")
    return dt


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--episodes", type=int, default=50)
    parser.add_argument("--intervals", type=int, default=100)
    args = parser.parse_args()

    cfg = paper_defaults(n_intervals=args.intervals)
    jitted = kernels.USE_NUMBA
    print(f"numba active: {jitted} (numba installed: {kernels.HAVE_NUMBA})")
    print(f"workload: {args.episodes} episodes x {args.intervals} intervals")

    rows = []
    for arm in ("marl", "nocoop", "hasty", "marl_rbf"):
        print(f"{arm}:")
        t_fast = bench_episode(arm, cfg, args.episodes, "compiled" if jitted else "fallback", use_py=False)
        if jitted:
            t_py = bench_episode(arm, cfg, args.episodes, "pure-numpy fallback", use_py=True)
            rows.append((arm, t_py / t_fast))
    print("oracle dp (11-power grid):")
    t_fast = bench_oracle(cfg, "compiled" if jitted else "fallback", use_py=False)
    if jitted:
        t_py = bench_oracle(cfg, "pure-numpy fallback", use_py=True)
        rows.append(("oracle_dp", t_py / t_fast))
    if rows:
        print("speedup (fallback / compiled):")
        for name, s in rows:
            print(f"  {name:<12s} {s:7.1f}x")


if __name__ == "__main__":
    main()
