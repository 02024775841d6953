"""Command-line pipeline for run-to-failure bearing monitoring.

Subcommands: train, calibrate, infer, sweep-k, energy-report, synth.
Exit codes: 0 = completed with no fault, 1 = fault detected, 2 = error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import ingest, report
from .calibration import DEFAULT_K_GRID, per_learner_thresholds
from .energy import OPERATING_POINTS, energy_summary_rows
from .ensemble import Policy, run_timeline
from .ingest import (EXIT_ERROR, EXIT_FAULT, EXIT_NO_FAULT, RunConfig,
                     SynthSpec, load_config, parse_config_text, run_pipeline)
from .network import Arithmetic
from .training import save_model


def _base_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = "\n".join(args.set or [])
    if overrides:
        cfg = parse_config_text(overrides, cfg)
    return cfg


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--out", default="out", help="output directory")


def _prepare(cfg: RunConfig):
    runs = ingest.obtain_runs(cfg)
    run = runs[cfg.run_index]
    codes, scale = ingest.codes_for_run(run, cfg)
    net = cfg.network_config(codes.shape[1])
    inputs = ingest.network_inputs(codes, net)
    return runs, run, codes, scale, net, inputs


def cmd_train(args) -> int:
    cfg = _base_config(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _, run, codes, scale, net, inputs = _prepare(cfg)
    ens = ingest.trained_ensemble(cfg, inputs[:cfg.train_window], codes.shape[1])
    for bl in ens.learners:
        beta = bl.state.beta
        if net.arithmetic is Arithmetic.FLOAT:
            beta = np.clip(np.rint(beta * net.fmt.scale),
                           net.fmt.raw_min, net.fmt.raw_max)
        save_model(outdir / f"model_bl{bl.id}.bin", beta, net, bl.seed, cfg.rule)
    ingest.export_feature_csv(outdir / "features.csv", codes, cfg)
    report.render_training_trace_figure(
        {bl.id: bl.beta_trace for bl in ens.learners},
        outdir / "training_trace.png")
    print(f"trained {ens.K} base learners on {run.run_id} "
          f"({min(cfg.train_window, len(inputs))} samples)")
    return EXIT_NO_FAULT


def cmd_calibrate(args) -> int:
    cfg = _base_config(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _, run, codes, scale, net, inputs = _prepare(cfg)
    ens = ingest.trained_ensemble(cfg, inputs[:cfg.train_window], codes.shape[1])
    models = per_learner_thresholds(ens, inputs[:cfg.train_window], cfg.k)
    with open(outdir / "thresholds.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["learner", "mu_e", "sigma_e", "k", "thr", "thr_sq"])
        for bl, model in zip(ens.learners, models):
            writer.writerow([bl.id, f"{model.mu_e:.9g}", f"{model.sigma_e:.9g}",
                             f"{model.k:g}", f"{model.thr:.9g}",
                             f"{model.thr_sq:.9g}"])
    print(f"calibrated {len(models)} thresholds at k={cfg.k:g} on {run.run_id}")
    return EXIT_NO_FAULT


def cmd_infer(args) -> int:
    cfg = _base_config(args)
    result = run_pipeline(cfg, args.out, make_figures=not args.no_figures)
    if result.timeline.fault_index is not None:
        print(f"fault detected at post-training sample {result.timeline.fault_index} "
              f"on {result.run_id}")
    else:
        print(f"no fault detected on {result.run_id}")
    return result.exit_code


def cmd_sweep_k(args) -> int:
    cfg = _base_config(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.dataset_dir is not None:
        runs = ingest.load_ims(cfg.dataset_dir, cfg.channel_map)
        failed = set((args.failed_runs or "").split(",")) - {""}
        for run in runs:
            run.failed = run.run_id in failed
    else:
        runs = ingest.make_surrogate_corpus(length=args.surrogate_length,
                                            onset_frac=args.surrogate_onset_frac)
        cfg = replace(cfg, train_window=min(cfg.train_window,
                                            args.surrogate_length // 3))
    validation = ingest.sweep_k(runs, cfg)
    validation.to_csv(outdir / "validation.csv")
    if not args.no_figures:
        report.render_sweep_figure(validation, outdir / "sweep.png")
    totals = validation.totals()
    for k in validation.k_grid:
        fp, fn = totals[k]
        print(f"k={k:<4g} FP={fp} FN={fn}")
    if validation.zero_region_found:
        print(f"k* = {validation.k_star:g} "
              f"(zero-error plateau {validation.plateau[0]:g}..{validation.plateau[1]:g})")
    else:
        print(f"k* = {validation.k_star:g} (no zero-error region; best trade-off)")
    return EXIT_NO_FAULT


def cmd_energy_report(args) -> int:
    cfg = _base_config(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _, run, codes, scale, net, inputs = _prepare(cfg)
    rows = []
    fault = False
    for policy in (Policy.ADEPOS, Policy.FIXED_N):
        pcfg = replace(cfg, policy=policy)
        ens = ingest.trained_ensemble(pcfg, inputs[:cfg.train_window],
                                      codes.shape[1])
        per_learner_thresholds(ens, inputs[:cfg.train_window], cfg.k)
        calibration = OPERATING_POINTS[cfg.operating_point]
        timeline = run_timeline(ens, inputs[cfg.train_window:],
                                continue_after_fault=False,
                                calibration=calibration)
        fault = fault or timeline.fault_index is not None
        rows.extend(energy_summary_rows(timeline.ledger, calibration, net,
                                        ens.K, policy.value))
    with open(outdir / "energy.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    if not args.no_figures:
        report.render_energy_figure(rows, outdir / "energy.png")
    for row in rows:
        print(f"{row['operating_point']} {row['policy']}: "
              f"{row['pJ_per_op_normalized']} pJ/OP")
    return EXIT_FAULT if fault else EXIT_NO_FAULT


def cmd_synth(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    spec = SynthSpec(healthy_samples=args.length, fault_onset=args.onset,
                     fault_ramp=args.ramp, noise=args.noise, seed=args.seed,
                     snapshot_len=args.snapshot_len)
    run = ingest.synth_run(spec)
    for snap in run.snapshots:
        lines = "\n".join(f"{v:.6f}" for v in snap.channels[0])
        (outdir / f"{snap.timestamp}.txt").write_text(lines + "\n")
    print(f"wrote {len(run)} snapshots to {outdir} "
          f"({'failing' if run.failed else 'surviving'} run)")
    return EXIT_NO_FAULT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elmsentry",
        description="ELM-ensemble anomaly detection pipeline for "
                    "run-to-failure vibration data")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the ensemble on the early-life window")
    _add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_cal = sub.add_parser("calibrate", help="fit per-learner thresholds")
    _add_common(p_cal)
    p_cal.set_defaults(func=cmd_calibrate)

    p_infer = sub.add_parser("infer", help="run the full detection pipeline")
    _add_common(p_infer)
    p_infer.add_argument("--no-figures", action="store_true")
    p_infer.set_defaults(func=cmd_infer)

    p_sweep = sub.add_parser("sweep-k", help="leave-one-out sensitivity sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.add_argument("--failed-runs", help="comma-separated failing run ids "
                                               "(dataset mode)")
    p_sweep.add_argument("--surrogate-length", type=int, default=120)
    p_sweep.add_argument("--surrogate-onset-frac", type=float, default=0.7)
    p_sweep.set_defaults(func=cmd_sweep_k)

    p_energy = sub.add_parser("energy-report", help="energy summary per policy")
    _add_common(p_energy)
    p_energy.add_argument("--no-figures", action="store_true")
    p_energy.set_defaults(func=cmd_energy_report)

    p_synth = sub.add_parser("synth", help="generate a synthetic run on disk")
    p_synth.add_argument("--out", default="synth_run")
    p_synth.add_argument("--length", type=int, default=1000)
    p_synth.add_argument("--onset", type=int, default=850)
    p_synth.add_argument("--ramp", type=float, default=8.0)
    p_synth.add_argument("--noise", type=float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=1)
    p_synth.add_argument("--snapshot-len", type=int, default=400)
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: map failures to the error code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
