"""Command-line front end: run sweeps, validate configs, compute scheduling
bounds, and dump per-interval traces.

Exit codes: 0 ok, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .agents import (
    LearnerState,
    OracleScaleError,
    PolicyDraws,
    arm_config,
    kernel_params,
    offline_oracle,
    run_episode,
)
from .config import ConfigError, ScenarioConfig, config_from_dict, config_to_dict, load_config
from .experiments import default_plan, run_sweep, sweep_csv
from .kernels import (
    N_TRACE, T_B1, T_B2, T_D1, T_D2, T_DROP1, T_DROP2, T_E1, T_E2, T_H1, T_H2,
    T_OVF1, T_OVF2, T_P1, T_P2, T_PS1, T_PS2, T_R1, T_R2, USE_NUMBA,
)
from .scenario import TRACE_COLUMNS, Realization, draw_realization, format_trace_row
from .signaling import QuantizerSpec, signaling_power, total_bits

OUT_DIR_ENV = "EHRELAY_OUT_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _out_dir(args) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    return Path(os.environ.get(OUT_DIR_ENV, "runs"))


def _load_cfg(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "episodes", None) is not None:
        overrides["n_episodes"] = args.episodes
    if getattr(args, "intervals", None) is not None:
        overrides["n_intervals"] = args.intervals
    if overrides:
        cfg = replace(cfg, **overrides)
        cfg.validate()
    return cfg


def _derived_summary(cfg: ScenarioConfig) -> dict:
    spec = QuantizerSpec.from_config(cfg)
    out = {
        "tau_data": cfg.tau_data,
        "grid_sizes": [cfg.grid(0).n, cfg.grid(1).n],
        "grid_steps": list(cfg.deltas),
        "bits_per_quantity": [spec.bits(0), spec.bits(1)],
        "bits_total": [total_bits(spec.bits(0)), total_bits(spec.bits(1))],
    }
    if cfg.tau_sig > 0:
        out["psig_coefficient"] = [
            2.0 ** (total_bits(spec.bits(l)) / (cfg.bandwidth * cfg.tau_sig)) - 1.0
            for l in (0, 1)
        ]
        out["psig_at_unit_channel"] = [
            signaling_power(total_bits(spec.bits(l)), 1.0, cfg) for l in (0, 1)
        ]
    return out


def _write_manifest(out_dir: Path, name: str, cfg: ScenarioConfig, args_dict: dict,
                    outputs: list[str]) -> Path:
    manifest = {
        "name": name,
        "version": __version__,
        "numba": USE_NUMBA,
        "seed": cfg.seed,
        "resolved_config": config_to_dict(cfg),
        "derived": _derived_summary(cfg),
        "cli_overrides": args_dict,
        "outputs": outputs,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    with open(out_dir / "manifests.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"name": name, "seed": cfg.seed, "outputs": outputs},
                            sort_keys=True) + "\n")
    return path


def _gnuplot_script(csv_name: str, metric: str) -> str:
    return (
        "set datafile separator ','\n"
        "set key outside\n"
        f"set ylabel '{metric}'\n"
        "set xlabel 'sweep value'\n"
        f"# plot one line per arm from {csv_name} (filter rows by arm/metric)\n"
        f"plot '< grep \",{metric}$\" {csv_name}' using 1:3 with linespoints title 'mean'\n"
    )


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    seed = cfg.seed if args.seed is None else args.seed
    arms = tuple(args.arms.split(",")) if args.arms else None
    plan = default_plan(args.sweep, cfg, seed, arms=arms,
                        n_episodes=args.episodes, packet_bits=args.packet_bits)
    result = run_sweep(plan, threads=args.threads)
    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = f"{plan.name}_seed{seed}"
    csv_path = out_dir / f"{name}.csv"
    csv_path.write_text(sweep_csv(result))
    plot_path = out_dir / f"{name}.gp"
    plot_path.write_text(_gnuplot_script(csv_path.name, "throughput_bits"))
    overrides = {k: getattr(args, k) for k in
                 ("seed", "episodes", "intervals", "arms", "threads")
                 if getattr(args, k, None) is not None}
    manifest = _write_manifest(out_dir, name, cfg, overrides,
                               [csv_path.name, plot_path.name])
    digest = hashlib.sha256(csv_path.read_bytes()).hexdigest()
    print(f"wrote {csv_path} (sha256 {digest[:16]})")
    print(f"wrote {plot_path}")
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load_cfg(args)
    summary = _derived_summary(cfg)
    print(f"config ok (version {__version__})")
    print(f"tau={cfg.tau} tau_sig={cfg.tau_sig} tau_data={summary['tau_data']}")
    print(f"action grids: {summary['grid_sizes']} powers, steps {summary['grid_steps']}")
    for l in (0, 1):
        bits = summary["bits_per_quantity"][l]
        print(f"node {l + 1}: signaling bits "
              + " ".join(f"L_{q}={bits[q]}" for q in ("E", "B", "h", "D"))
              + f" total L={summary['bits_total'][l]}")
    if "psig_coefficient" in summary:
        for l in (0, 1):
            print(f"node {l + 1}: p_sig = (sigma2/|h|^2) * {summary['psig_coefficient'][l]:.9g}"
                  f" (= {summary['psig_at_unit_channel'][l]:.9g} at |h|=1)")
    return EXIT_OK


def _load_realization(path: str, cfg: ScenarioConfig) -> Realization:
    """Realization file: CSV with header i,E1,E2,h1,h2[,arrivals]."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            if line.strip():
                rows.append([float(x) for x in line.strip().split(",")])
    data = np.asarray(rows)
    cols = {name: k for k, name in enumerate(header)}
    for need in ("E1", "E2", "h1", "h2"):
        if need not in cols:
            raise ConfigError("realization", f"missing column {need}")
    energy = np.stack([data[:, cols["E1"]], data[:, cols["E2"]]])
    mags = np.stack([data[:, cols["h1"]], data[:, cols["h2"]]])
    if "arrivals" in cols:
        arrivals = data[:, cols["arrivals"]]
    else:
        arrivals = np.zeros(data.shape[0])
    return Realization(energy=energy, channel_mag=mags, arrivals=arrivals)


def cmd_oracle(args) -> int:
    cfg = arm_config(_load_cfg(args), "oracle")
    if args.realization:
        real = _load_realization(args.realization, cfg)
        cfg = replace(cfg, n_intervals=real.n_intervals)
    else:
        real = draw_realization(cfg, np.random.SeedSequence([cfg.seed, 0, 0]))
    result = offline_oracle(real, cfg)
    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"oracle_seed{cfg.seed}.csv"
    lines = ["i,p1,p2"]
    for i in range(real.n_intervals):
        lines.append(f"{i + 1},{result.schedule[0, i]:.9g},{result.schedule[1, i]:.9g}")
    path.write_text("\n".join(lines) + "\n")
    print(f"value_bound {result.value_bound:.9g}")
    print(f"schedule_value {result.schedule_value:.9g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _load_cfg(args)
    arm = args.arm
    acfg = arm_config(cfg, arm)
    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"trace_{arm}_seed{cfg.seed}.csv"
    state = LearnerState.fresh()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for ep in range(args.episodes or 1):
            real = draw_realization(acfg, np.random.SeedSequence([cfg.seed, 0, ep]))
            draws = PolicyDraws.draw(acfg.n_intervals,
                                     np.random.SeedSequence([cfg.seed, 1, ep, 0]))
            if acfg.learning_mode == "fresh":
                state = LearnerState.fresh()
            res = run_episode(acfg, arm, real, draws, state)
            tr = res.trace
            for i in range(tr.shape[0]):
                row = [ep, i + 1,
                       tr[i, T_E1], tr[i, T_E2], tr[i, T_B1], tr[i, T_B2],
                       tr[i, T_H1], tr[i, T_H2], tr[i, T_D1], tr[i, T_D2],
                       tr[i, T_P1], tr[i, T_P2], tr[i, T_PS1], tr[i, T_PS2],
                       tr[i, T_R1], tr[i, T_R2],
                       tr[i, T_DROP1] + tr[i, T_DROP2],
                       tr[i, T_OVF1] + tr[i, T_OVF2]]
                fh.write(format_trace_row(row) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ehrelay",
        description="Energy-harvesting two-hop relay simulator and learner")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default="paper.defaults",
                       help="config YAML path or the shipped 'paper.defaults'")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None,
                       help=f"output directory (default ${OUT_DIR_ENV} or ./runs)")

    p_run = sub.add_parser("run", help="run a sweep and write CSV + manifest")
    common(p_run)
    p_run.add_argument("--sweep", default="tau_sig",
                       choices=("tau_sig", "buffer", "emax", "lambda", "convergence"))
    p_run.add_argument("--arms", default=None, help="comma-separated arm list")
    p_run.add_argument("--episodes", type=int, default=None)
    p_run.add_argument("--intervals", type=int, default=None)
    p_run.add_argument("--packet-bits", type=float, default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="echo derived quantities")
    common(p_val)
    p_val.add_argument("--episodes", type=int, default=None)
    p_val.add_argument("--intervals", type=int, default=None)
    p_val.set_defaults(func=cmd_validate)

    p_or = sub.add_parser("oracle", help="DP bound and schedule for a realization")
    common(p_or)
    p_or.add_argument("--realization", default=None,
                      help="CSV with columns i,E1,E2,h1,h2[,arrivals]")
    p_or.add_argument("--intervals", type=int, default=None)
    p_or.set_defaults(func=cmd_oracle)

    p_tr = sub.add_parser("trace", help="dump per-interval episode traces")
    common(p_tr)
    p_tr.add_argument("--arm", default="marl")
    p_tr.add_argument("--episodes", type=int, default=1)
    p_tr.add_argument("--intervals", type=int, default=None)
    p_tr.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleScaleError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
