"""Calibrated energy model tests: normalization identities, the power-ratio
fit, training-rule comparison and ledger arithmetic."""
import numpy as np
import pytest

from elmsentry.energy import (DEFAULT_OPERATING_POINT, OPERATING_POINTS,
                              EmptyTimeline, EnergyCalibration, EnergyLedger,
                              MismatchedStreams, average_lite_savings,
                              efficiency_from_alpha, energy_summary_rows,
                              lifetime_energy, power_model,
                              training_energy_compare)
from elmsentry.network import NetworkConfig

CAL = OPERATING_POINTS[DEFAULT_OPERATING_POINT]
CFG = NetworkConfig(d=5, L=32)


def ledger_at(votes, samples=None):
    ledger = EnergyLedger()
    for n, count in votes.items():
        for _ in range(count):
            ledger.record_vote(n)
    ledger.samples = samples if samples is not None else sum(votes.values())
    return ledger


class TestNormalization:
    def test_minimum_active_count_divides_by_k(self):
        _, norm = lifetime_energy(ledger_at({1: 1000}), CAL, CFG, K=7)
        assert norm == pytest.approx(CAL.infer_pj_per_op / 7)

    def test_full_ensemble_recovers_calibration_figure(self):
        _, norm = lifetime_energy(ledger_at({7: 1000}), CAL, CFG, K=7)
        assert norm == pytest.approx(CAL.infer_pj_per_op)

    def test_alpha_form_agrees_with_ledger_form(self):
        ledger = ledger_at({1: 900, 3: 50, 7: 50})
        _, norm = lifetime_energy(ledger, CAL, CFG, K=7)
        via_alpha = efficiency_from_alpha(ledger.alpha(7), CAL, K=7)
        assert norm == pytest.approx(via_alpha)

    def test_cannot_beat_all_healthy_bound(self, rng):
        for _ in range(20):
            votes = {n: int(rng.integers(0, 100)) + 1 for n in (1, 3, 5, 7)}
            _, norm = lifetime_energy(ledger_at(votes), CAL, CFG, K=7)
            assert norm >= CAL.infer_pj_per_op / 7 - 1e-12

    def test_empty_timeline_rejected(self):
        with pytest.raises(EmptyTimeline):
            lifetime_energy(EnergyLedger(), CAL, CFG, K=7)

    def test_alpha_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError):
            efficiency_from_alpha({1: 0.5, 7: 0.4}, CAL, K=7)

    def test_shared_overhead_added_per_sample(self):
        cal = EnergyCalibration("test", 1.0, 2.0, 1.0,
                                shared_pj_per_sample=10.0)
        ledger = ledger_at({1: 100})
        e_total, _ = lifetime_energy(ledger, cal, CFG, K=7)
        ops = 32 * 5 + 32 * 5
        assert e_total == pytest.approx(100 * 10.0 + 100 * ops)


class TestPowerModel:
    def test_full_vs_single_ratio(self):
        assert power_model(7) / power_model(1) == pytest.approx(1.8)

    def test_static_share_solves_ratio(self):
        assert (6.5 + 7) / (6.5 + 1) == pytest.approx(1.8)

    def test_same_count_unity(self):
        assert power_model(7) / power_model(7) == 1.0

    def test_range_enforced(self):
        with pytest.raises(ValueError):
            power_model(0)
        with pytest.raises(ValueError):
            power_model(9, K=7)


class TestTrainingComparison:
    def make_ledgers(self):
        full = EnergyLedger(samples=100, mac_count=100_000,
                            theta_update_count=100)
        lite = EnergyLedger(samples=100, mac_count=10_000)
        return full, lite

    def test_calibrated_ratio_from_table(self):
        full, lite = self.make_ledgers()
        cmp = training_energy_compare(full, lite, CAL)
        assert cmp.calibrated_energy_ratio == pytest.approx(8.12 / 11.87)
        assert cmp.lite_theta_updates == 0

    def test_counted_ratio_below_calibrated_for_wide_config(self):
        from elmsentry.training import opium_multiplies
        counted = (opium_multiplies(32, 16, True)
                   / opium_multiplies(32, 16, False))
        assert counted < 8.12 / 11.87

    def test_mismatched_streams_rejected(self):
        full, lite = self.make_ledgers()
        lite.samples = 99
        with pytest.raises(MismatchedStreams):
            training_energy_compare(full, lite, CAL)

    def test_average_savings_across_table(self):
        assert average_lite_savings() == pytest.approx(0.428, abs=0.05)


class TestLedger:
    def test_alpha_covers_odd_counts(self):
        ledger = ledger_at({1: 75, 3: 25})
        alpha = ledger.alpha(7)
        assert alpha == {1: 0.75, 3: 0.25, 5: 0.0, 7: 0.0}

    def test_alpha_requires_votes(self):
        with pytest.raises(EmptyTimeline):
            EnergyLedger().alpha(7)

    def test_merge_additive(self):
        a = ledger_at({1: 10, 3: 5})
        b = ledger_at({3: 5, 7: 2})
        a.merge(b)
        assert a.votes_at_n == {1: 10, 3: 10, 7: 2}
        assert a.samples == 22
        assert a.evaluations == 10 + 15 + 15 + 14

    def test_summary_rows_shape(self):
        rows = energy_summary_rows(ledger_at({1: 10}), CAL, CFG, K=7,
                                   policy="adepos")
        row = rows[0]
        assert row["operating_point"] == DEFAULT_OPERATING_POINT
        assert row["policy"] == "adepos"
        assert set(row) >= {"E_total_pJ", "pJ_per_op_normalized",
                            "alpha_1", "alpha_3", "alpha_5", "alpha_7"}
