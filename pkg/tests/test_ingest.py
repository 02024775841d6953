"""Dataset ingestion, synthetic generation, configuration parsing and the
end-to-end pipeline contract."""
import numpy as np
import pytest
from dataclasses import replace

from elmsentry import ingest
from elmsentry.ensemble import Decision, run_timeline
from elmsentry.ingest import (EXIT_FAULT, EXIT_NO_FAULT, BadSpec, MissingFiles,
                              NonNumeric, RaggedColumns, RunConfig, SynthSpec,
                              codes_for_run, export_feature_csv,
                              import_feature_csv, load_config, load_ims,
                              make_surrogate_corpus, network_inputs,
                              parse_config_text, run_pipeline, synth_run,
                              trained_ensemble)
from elmsentry.network import Arithmetic, Mode
from elmsentry.training import Rule


class TestLoadIms:
    def write_snapshot(self, path, rows):
        path.write_text("\n".join("\t".join(str(v) for v in row)
                                  for row in rows) + "\n")

    def test_empty_directory(self, tmp_path):
        with pytest.raises(MissingFiles):
            load_ims(tmp_path)

    def test_well_formed_file(self, tmp_path):
        self.write_snapshot(tmp_path / "t0", [[1, 2, 3, 4]] * 3)
        runs = load_ims(tmp_path, channel_map=(0,))
        assert len(runs) == 1
        assert len(runs[0]) == 1
        assert runs[0].snapshots[0].channels.shape == (1, 3)

    def test_ragged_row_names_location(self, tmp_path):
        self.write_snapshot(tmp_path / "t0", [[1, 2], [1, 2, 3], [1, 2]])
        with pytest.raises(RaggedColumns, match="t0:2"):
            load_ims(tmp_path)

    def test_non_numeric_names_location(self, tmp_path):
        (tmp_path / "t0").write_text("1 2\n1 oops\n")
        with pytest.raises(NonNumeric, match="t0:2"):
            load_ims(tmp_path)

    def test_channel_out_of_range(self, tmp_path):
        self.write_snapshot(tmp_path / "t0", [[1, 2]] * 3)
        with pytest.raises(RaggedColumns, match="channel 5"):
            load_ims(tmp_path, channel_map=(5,))

    def test_files_ordered_by_name(self, tmp_path):
        self.write_snapshot(tmp_path / "b", [[2.0]] * 4)
        self.write_snapshot(tmp_path / "a", [[1.0]] * 4)
        run = load_ims(tmp_path)[0]
        assert [s.timestamp for s in run.snapshots] == ["a", "b"]
        assert run.snapshots[0].channels[0, 0] == 1.0


class TestSynthRun:
    def test_surviving_run(self):
        spec = SynthSpec(healthy_samples=60, fault_onset=60, snapshot_len=64)
        run = synth_run(spec)
        assert not run.failed
        assert len(run) == 60

    def test_healthy_features_stationary(self):
        spec = SynthSpec(healthy_samples=120, fault_onset=120, seed=4)
        feats = ingest.raw_features(synth_run(spec))
        first, second = feats[:60], feats[60:]
        for col in range(feats.shape[1]):
            drift = abs(first[:, col].mean() - second[:, col].mean())
            assert drift < 2 * feats[:, col].std()

    def test_post_onset_rms_rises(self):
        spec = SynthSpec(healthy_samples=100, fault_onset=50, fault_ramp=8.0,
                         seed=2)
        feats = ingest.raw_features(synth_run(spec), selection=("rms",))
        healthy_max = feats[:50].max()
        late = feats[80:]
        assert np.all(late > healthy_max)
        # amplitude grows along the ramp
        mid = feats[55:65].mean()
        assert late.mean() > mid

    def test_deterministic_per_seed(self):
        spec = SynthSpec(healthy_samples=20, fault_onset=10, seed=9)
        a, b = synth_run(spec), synth_run(spec)
        for sa, sb in zip(a.snapshots, b.snapshots):
            np.testing.assert_array_equal(sa.channels, sb.channels)

    def test_bad_specs_rejected(self):
        with pytest.raises(BadSpec):
            synth_run(SynthSpec(healthy_samples=10, fault_onset=-1))
        with pytest.raises(BadSpec):
            synth_run(SynthSpec(noise=0.0))
        with pytest.raises(BadSpec):
            synth_run(SynthSpec(snapshot_len=4))

    def test_surrogate_corpus_labels(self):
        runs = make_surrogate_corpus(n_runs=6, n_failing=2, length=30)
        assert [r.failed for r in runs] == [True] * 2 + [False] * 4
        assert len({r.run_id for r in runs}) == 6


class TestConfig:
    def test_defaults_match_flagship_shape(self):
        cfg = RunConfig()
        assert cfg.K == 7
        assert cfg.L == 32
        assert cfg.k == 50.0
        assert cfg.mode is Mode.RECONSTRUCTION
        assert cfg.arithmetic is Arithmetic.FIXED
        assert cfg.operating_point == "0.75V/10MHz"

    def test_parse_overrides(self):
        cfg = parse_config_text("""
            # comment
            L = 16
            rule = opium-lite
            arithmetic = float
            seeds = 0x1, 0x2, 0x3
            k = 40
            synth.healthy_samples = 50
            synth.fault_onset = 25
        """)
        assert cfg.L == 16
        assert cfg.rule is Rule.OPIUM_LITE
        assert cfg.arithmetic is Arithmetic.FLOAT
        assert cfg.seeds == (1, 2, 3)
        assert cfg.synth.fault_onset == 25

    def test_bad_lines_diagnosed(self):
        with pytest.raises(BadSpec, match="line 1"):
            parse_config_text("no equals sign")
        with pytest.raises(BadSpec, match="nonsense"):
            parse_config_text("nonsense = 1")
        with pytest.raises(BadSpec):
            parse_config_text("operating_point = 5V/1Hz")

    def test_load_config_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("L = 8\ndebounce = 1\n")
        cfg = load_config(path)
        assert cfg.L == 8
        assert cfg.debounce == 1


class TestFeaturePlumbing:
    def test_codes_respect_headroom(self):
        spec = SynthSpec(healthy_samples=80, fault_onset=80, seed=3)
        cfg = RunConfig(synth=spec, train_window=40)
        codes, scale = codes_for_run(synth_run(spec), cfg)
        train = codes[:40]
        assert train.min() >= -16 and train.max() <= 15
        assert (scale.code_lo, scale.code_hi) == (-16, 15)

    def test_feature_csv_roundtrip(self, tmp_path, rng):
        codes = rng.integers(-64, 64, size=(10, 5))
        cfg = RunConfig()
        path = tmp_path / "features.csv"
        export_feature_csv(path, codes, cfg)
        np.testing.assert_array_equal(import_feature_csv(path), codes)

    def test_replay_reproduces_decisions(self, tmp_path):
        """Feature-CSV replay must give bit-identical detector decisions."""
        spec = SynthSpec(healthy_samples=200, fault_onset=160, seed=6)
        cfg = RunConfig(synth=spec, train_window=80, L=8)
        run = synth_run(spec)
        codes, _ = codes_for_run(run, cfg)
        path = tmp_path / "features.csv"
        export_feature_csv(path, codes, cfg)
        replayed = import_feature_csv(path)

        def decisions(code_matrix):
            net = cfg.network_config(code_matrix.shape[1])
            inputs = network_inputs(code_matrix, net)
            ens = trained_ensemble(cfg, inputs[:80], code_matrix.shape[1])
            from elmsentry.calibration import per_learner_thresholds
            per_learner_thresholds(ens, inputs[:80], cfg.k)
            timeline = run_timeline(ens, inputs[80:])
            return [row["decision"] for row in timeline.rows]

        assert decisions(codes) == decisions(replayed)


class TestRunPipeline:
    def faulty_cfg(self, **kwargs):
        spec = SynthSpec(healthy_samples=200, fault_onset=160, fault_ramp=8.0,
                         seed=1)
        return RunConfig(synth=spec, train_window=80, L=8,
                         continue_after_fault=False, **kwargs)

    def test_fault_latched_after_onset(self, tmp_path):
        cfg = self.faulty_cfg()
        result = run_pipeline(cfg, tmp_path, make_figures=False)
        assert result.exit_code == EXIT_FAULT
        absolute = result.timeline.fault_index + cfg.train_window
        assert absolute >= 160 - cfg.debounce
        assert absolute < 200

    def test_no_fault_on_surviving_run(self, tmp_path):
        spec = SynthSpec(healthy_samples=200, fault_onset=200, seed=1)
        cfg = RunConfig(synth=spec, train_window=80, L=8)
        result = run_pipeline(cfg, tmp_path, make_figures=False)
        assert result.exit_code == EXIT_NO_FAULT
        assert result.timeline.fault_index is None

    def test_artifacts_written(self, tmp_path):
        result = run_pipeline(self.faulty_cfg(), tmp_path, make_figures=True)
        for name in ("timeline", "energy", "features", "timeline_figure",
                     "model_bl1", "model_bl7"):
            assert result.artifacts[name].exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = self.faulty_cfg()
        a = run_pipeline(cfg, tmp_path / "a", make_figures=False)
        b = run_pipeline(cfg, tmp_path / "b", make_figures=False)
        for name in a.artifacts:
            assert (a.artifacts[name].read_bytes()
                    == b.artifacts[name].read_bytes())

    def test_empty_training_window_rejected(self, tmp_path):
        spec = SynthSpec(healthy_samples=10, fault_onset=10)
        cfg = RunConfig(synth=spec, train_window=0)
        with pytest.raises(BadSpec):
            run_pipeline(cfg, tmp_path, make_figures=False)

    def test_sweep_k_on_surrogate_corpus(self):
        runs = make_surrogate_corpus()
        cfg = replace(RunConfig(), train_window=40)
        report = ingest.sweep_k(runs, cfg)
        assert report.zero_region_found
        assert report.plateau is not None
