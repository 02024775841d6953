"""Dataset ingestion, synthetic run-to-failure generation, pipeline driver.

Supports the run-to-failure bearing corpus layout (directories of
whitespace-separated ASCII snapshot files, one row per sample, one column
per channel, filename-encoded timestamps) and a deterministic synthetic
surrogate used as the default CI path.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .calibration import (DEFAULT_K_GRID, RunErrors, ThresholdModel,
                          fit_threshold, loo_sweep, per_learner_thresholds)
from .energy import (DEFAULT_OPERATING_POINT, OPERATING_POINTS, EnergyLedger,
                     energy_summary_rows)
from .ensemble import (DEFAULT_SEEDS, BaseLearner, EnsembleState, Policy,
                       TimelineReport, run_timeline)
from .features import (FEATURE_NAMES, FeatureScale, RawSnapshot, apply_scaler,
                       extract, fit_scaler)
from .fxp import OpCounter
from .network import Arithmetic, Mode, NetworkConfig
from .training import Rule, save_model


class MissingFiles(FileNotFoundError):
    pass


class RaggedColumns(ValueError):
    pass


class NonNumeric(ValueError):
    pass


class BadSpec(ValueError):
    pass


@dataclass
class BearingRun:
    run_id: str
    snapshots: list[RawSnapshot]
    failed: bool = False

    def __len__(self) -> int:
        return len(self.snapshots)


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------

def _parse_snapshot_file(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise RaggedColumns(
                    f"{path}:{lineno}: expected {width} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise NonNumeric(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise NonNumeric(f"{path}: no numeric rows")
    return np.asarray(rows, dtype=float)


def load_ims(directory, channel_map=(0,), sample_rate: float = 20000.0,
             labels: dict[int, bool] | None = None) -> list[BearingRun]:
    """Load one test directory into one run per selected channel.

    Snapshot files are ordered by their (timestamp-encoded) names; labels,
    keyed by channel index, default to survived.
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.is_file()) \
        if directory.is_dir() else []
    if not files:
        raise MissingFiles(f"no snapshot files in {directory}")
    tables = [(_parse_snapshot_file(p), p.name) for p in files]
    runs = []
    for ch in channel_map:
        snaps = []
        for table, name in tables:
            if ch >= table.shape[1]:
                raise RaggedColumns(
                    f"{directory / name}: channel {ch} out of range "
                    f"({table.shape[1]} columns)")
            snaps.append(RawSnapshot(channels=table[:, ch][np.newaxis, :],
                                     sample_rate=sample_rate, timestamp=name))
        failed = bool(labels.get(ch, False)) if labels else False
        runs.append(BearingRun(run_id=f"{directory.name}:ch{ch}",
                               snapshots=snaps, failed=failed))
    return runs


# ---------------------------------------------------------------------------
# Synthetic surrogate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    healthy_samples: int = 1000       # run length in snapshots
    fault_onset: int = 850            # == run length for a surviving run
    fault_ramp: float = 8.0           # terminal amplitude multiplier
    noise: float = 1.0                # healthy RMS in ADC units
    seed: int = 1
    snapshot_len: int = 400
    sample_rate: float = 20000.0

    @property
    def length(self) -> int:
        return max(self.healthy_samples, self.fault_onset)


def synth_run(spec: SynthSpec, run_id: str | None = None) -> BearingRun:
    """Stationary band-limited vibration, then a ramped amplitude and
    impulsiveness increase after fault onset. Deterministic per seed."""
    if spec.fault_onset > spec.length or spec.fault_onset < 0:
        raise BadSpec("fault_onset must lie within the run length")
    if spec.snapshot_len < 8 or spec.noise <= 0:
        raise BadSpec("snapshot_len must be >= 8 and noise > 0")
    rng = np.random.default_rng(spec.seed)
    kernel = np.ones(5) / 5.0
    snaps = []
    gain = spec.noise * np.sqrt(kernel.size)   # MA(n) of unit noise has sd 1/sqrt(n)
    for i in range(spec.length):
        white = rng.standard_normal(spec.snapshot_len + kernel.size - 1)
        s = gain * np.convolve(white, kernel, mode="valid")
        if i >= spec.fault_onset:
            progress = (i - spec.fault_onset + 1) / max(1, spec.length - spec.fault_onset)
            amp = 1.0 + (spec.fault_ramp - 1.0) * progress
            s = s * amp
            # Sparse one-sided impulses raise kurtosis, crest and skewness.
            n_imp = 1 + int(6 * progress)
            pos = rng.integers(0, spec.snapshot_len, size=n_imp)
            s[pos] += 4.0 * amp * spec.noise
        snaps.append(RawSnapshot(channels=s[np.newaxis, :],
                                 sample_rate=spec.sample_rate, timestamp=f"{i:06d}"))
    failed = spec.fault_onset < spec.length
    return BearingRun(run_id=run_id or f"synth-{spec.seed}", snapshots=snaps,
                      failed=failed)


def make_surrogate_corpus(n_runs: int = 12, n_failing: int = 4,
                          length: int = 120, onset_frac: float = 0.7,
                          seed0: int = 1000, **kwargs) -> list[BearingRun]:
    """Desk-scale surrogate corpus: n_runs runs, the first n_failing fail."""
    runs = []
    for i in range(n_runs):
        failing = i < n_failing
        onset = int(length * onset_frac) if failing else length
        spec = SynthSpec(healthy_samples=length, fault_onset=onset,
                         seed=seed0 + i, **kwargs)
        runs.append(synth_run(spec, run_id=f"surrogate-{i:02d}"))
    return runs


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    L: int = 32
    mode: Mode = Mode.RECONSTRUCTION
    arithmetic: Arithmetic = Arithmetic.FIXED
    rule: Rule = Rule.OPIUM
    policy: Policy = Policy.ADEPOS
    features: tuple[str, ...] = FEATURE_NAMES
    channel_map: tuple[int, ...] = (0,)
    k: float = 50.0
    train_window: int = 300           # healthy snapshots used for training
    headroom_bits: int = 2            # code-space margin beyond the healthy range
    weight_bits: int = 8
    debounce: int = 3                 # consecutive fault votes required to latch
    continue_after_fault: bool = True
    theta_init: float | None = None
    operating_point: str = DEFAULT_OPERATING_POINT
    dataset_dir: str | None = None
    synth: SynthSpec | None = None
    run_index: int = 0                # which loaded run the pipeline processes

    @property
    def K(self) -> int:
        return len(self.seeds)

    def network_config(self, d: int) -> NetworkConfig:
        return NetworkConfig(d=d, L=self.L, mode=self.mode,
                             arithmetic=self.arithmetic)


_BOOL = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Flat key=value configuration; later keys override earlier ones."""
    cfg = base or RunConfig()
    synth_kwargs: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadSpec(f"config line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            cfg = _apply_config_key(cfg, synth_kwargs, key, value)
        except (KeyError, ValueError) as exc:
            raise BadSpec(f"config line {lineno}: {exc}") from exc
    if synth_kwargs:
        cfg = replace(cfg, synth=SynthSpec(**synth_kwargs))
    return cfg


def _apply_config_key(cfg: RunConfig, synth_kwargs: dict, key: str,
                      value: str) -> RunConfig:
    if key == "seeds":
        return replace(cfg, seeds=tuple(int(v, 0) for v in value.split(",")))
    if key == "L":
        return replace(cfg, L=int(value))
    if key == "mode":
        return replace(cfg, mode=Mode(value))
    if key == "arithmetic":
        return replace(cfg, arithmetic=Arithmetic(value))
    if key == "rule":
        return replace(cfg, rule=Rule(value))
    if key == "policy":
        return replace(cfg, policy=Policy(value))
    if key == "features":
        return replace(cfg, features=tuple(value.split(",")))
    if key == "channel_map":
        return replace(cfg, channel_map=tuple(int(v) for v in value.split(",")))
    if key == "k":
        return replace(cfg, k=float(value))
    if key == "train_window":
        return replace(cfg, train_window=int(value))
    if key == "headroom_bits":
        return replace(cfg, headroom_bits=int(value))
    if key == "weight_bits":
        return replace(cfg, weight_bits=int(value))
    if key == "debounce":
        return replace(cfg, debounce=int(value))
    if key == "continue_after_fault":
        return replace(cfg, continue_after_fault=_BOOL[value.lower()])
    if key == "theta_init":
        return replace(cfg, theta_init=float(value))
    if key == "operating_point":
        if value not in OPERATING_POINTS:
            raise ValueError(f"unknown operating point {value!r}")
        return replace(cfg, operating_point=value)
    if key == "dataset_dir":
        return replace(cfg, dataset_dir=value)
    if key == "run_index":
        return replace(cfg, run_index=int(value))
    if key.startswith("synth."):
        sub = key.split(".", 1)[1]
        caster = {"healthy_samples": int, "fault_onset": int, "fault_ramp": float,
                  "noise": float, "seed": int, "snapshot_len": int,
                  "sample_rate": float}[sub]
        synth_kwargs[sub] = caster(value)
        return cfg
    raise KeyError(f"unknown config key {key!r}")


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(), base)


# ---------------------------------------------------------------------------
# Feature pipeline plumbing
# ---------------------------------------------------------------------------

def raw_features(run: BearingRun, selection=FEATURE_NAMES) -> np.ndarray:
    return np.vstack([extract(s, selection) for s in run.snapshots])


def codes_for_run(run: BearingRun, cfg: RunConfig,
                  scale: FeatureScale | None = None):
    """Scaled 7-bit codes for every snapshot; the scaler is fitted on the
    training window unless one is supplied."""
    feats = raw_features(run, cfg.features)
    if scale is None:
        scale = fit_scaler(feats[:cfg.train_window],
                           headroom_bits=cfg.headroom_bits)
    codes = np.vstack([apply_scaler(row, scale).codes for row in feats])
    return codes, scale


def network_inputs(codes: np.ndarray, config: NetworkConfig) -> list[np.ndarray]:
    """Map 7-bit codes to network inputs: raw words for the fixed path
    (code == raw), dequantized floats for the reference path."""
    if config.arithmetic is Arithmetic.FIXED:
        return [row for row in codes.astype(np.int64)]
    return [row / config.fmt.scale for row in codes.astype(float)]


def export_feature_csv(path, codes: np.ndarray, cfg: RunConfig) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snapshot_index"] + list(cfg.features))
        for i, row in enumerate(codes):
            writer.writerow([i] + [int(v) for v in row])


def import_feature_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return np.array([[int(v) for v in row[1:]] for row in reader],
                        dtype=np.int64)


# ---------------------------------------------------------------------------
# End-to-end pipeline
# ---------------------------------------------------------------------------

EXIT_NO_FAULT = 0
EXIT_FAULT = 1
EXIT_ERROR = 2


@dataclass
class PipelineResult:
    run_id: str
    timeline: TimelineReport
    thresholds: list[ThresholdModel]
    ensemble: EnsembleState
    counter: OpCounter
    exit_code: int
    artifacts: dict[str, Path] = field(default_factory=dict)


def obtain_runs(cfg: RunConfig) -> list[BearingRun]:
    if cfg.dataset_dir is not None:
        return load_ims(cfg.dataset_dir, cfg.channel_map)
    spec = cfg.synth or SynthSpec()
    return [synth_run(spec)]


def trained_ensemble(cfg: RunConfig, train_inputs, d: int) -> EnsembleState:
    net = cfg.network_config(d)
    ens = EnsembleState.create(net, seeds=cfg.seeds, policy=cfg.policy,
                               weight_bits=cfg.weight_bits, debounce=cfg.debounce)
    ens.train(train_inputs, rule=cfg.rule, theta_init=cfg.theta_init)
    return ens


def run_pipeline(cfg: RunConfig, outdir, make_figures: bool = True,
                 runs: list[BearingRun] | None = None) -> PipelineResult:
    """train -> calibrate -> infer -> emit timeline/energy CSVs, models and
    (optionally) figures for one run."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    counter = OpCounter()
    if runs is None:
        runs = obtain_runs(cfg)
    run = runs[cfg.run_index]
    if not 0 < cfg.train_window < len(run):
        raise BadSpec(f"training window {cfg.train_window} must fall inside "
                      f"the run (length {len(run)})")
    codes, scale = codes_for_run(run, cfg)
    net = cfg.network_config(codes.shape[1])
    inputs = network_inputs(codes, net)
    train_inputs = inputs[:cfg.train_window]
    if not train_inputs:
        raise BadSpec("training window is empty")

    ens = trained_ensemble(cfg, train_inputs, codes.shape[1])
    thresholds = per_learner_thresholds(ens, train_inputs, cfg.k, counter)
    calibration = OPERATING_POINTS[cfg.operating_point]
    timeline = run_timeline(ens, inputs[cfg.train_window:],
                            continue_after_fault=cfg.continue_after_fault,
                            calibration=calibration, counter=counter)

    artifacts: dict[str, Path] = {}
    timeline_csv = outdir / "timeline.csv"
    timeline.to_csv(timeline_csv)
    artifacts["timeline"] = timeline_csv

    energy_csv = outdir / "energy.csv"
    rows = energy_summary_rows(timeline.ledger, calibration, net, ens.K,
                               cfg.policy.value)
    with open(energy_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    artifacts["energy"] = energy_csv

    features_csv = outdir / "features.csv"
    export_feature_csv(features_csv, codes, cfg)
    artifacts["features"] = features_csv

    for bl in ens.learners:
        model_path = outdir / f"model_bl{bl.id}.bin"
        beta = bl.state.beta
        if net.arithmetic is Arithmetic.FLOAT:
            beta = np.clip(np.rint(beta * net.fmt.scale),
                           net.fmt.raw_min, net.fmt.raw_max)
        save_model(model_path, beta, net, bl.seed, cfg.rule)
        artifacts[f"model_bl{bl.id}"] = model_path

    if make_figures:
        from . import report
        fig_path = outdir / "timeline.png"
        report.render_timeline_figure(timeline, thresholds, fig_path)
        artifacts["timeline_figure"] = fig_path

    exit_code = EXIT_FAULT if timeline.fault_index is not None else EXIT_NO_FAULT
    return PipelineResult(run_id=run.run_id, timeline=timeline,
                          thresholds=thresholds, ensemble=ens, counter=counter,
                          exit_code=exit_code, artifacts=artifacts)


def sweep_material(runs: list[BearingRun], cfg: RunConfig) -> list[RunErrors]:
    """Per-run material for the leave-one-out sweep.

    Every run gets its own single-learner detector trained on its own early
    life, mirroring one deployed detector per machine; the healthy-window
    errors feed the pooled statistics.
    """
    material = []
    for run in runs:
        codes, _ = codes_for_run(run, cfg)
        net = cfg.network_config(codes.shape[1])
        inputs = network_inputs(codes, net)
        bl = BaseLearner.create(1, cfg.seeds[0], net, cfg.weight_bits)
        bl.train(inputs[:cfg.train_window], rule=cfg.rule,
                 theta_init=cfg.theta_init)
        healthy = np.sqrt([bl.error_sq(x) for x in inputs[:cfg.train_window]])
        test = np.sqrt([bl.error_sq(x) for x in inputs[cfg.train_window:]])
        material.append(RunErrors(run_id=run.run_id, failed=run.failed,
                                  healthy_errors=healthy, test_errors=test))
    return material


def sweep_k(runs: list[BearingRun], cfg: RunConfig, k_grid=DEFAULT_K_GRID):
    return loo_sweep(sweep_material(runs, cfg), k_grid)
