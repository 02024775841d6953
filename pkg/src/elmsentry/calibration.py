"""Threshold fitting and the leave-one-out sensitivity sweep.

The threshold is the healthy-error mean plus 0.1*k standard deviations;
k is selected by leaving each labeled run out in turn and counting
run-level misclassifications over a k grid.

Convention for the counts: FP = a faulty machine flagged healthy,
FN = a healthy machine flagged faulty.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class InsufficientData(ValueError):
    pass


K_MIN = 10
K_MAX = 100
DEFAULT_K_GRID = tuple(range(10, 101, 10))


@dataclass(frozen=True)
class ThresholdModel:
    mu_e: float
    sigma_e: float
    k: float
    thr: float

    @property
    def thr_sq(self) -> float:
        """Squared form, for comparing against squared internal scores."""
        return self.thr ** 2


def fit_threshold(healthy_errors, k: float) -> ThresholdModel:
    """Thr = mu + 0.1*k*sigma over the healthy (unsquared) errors."""
    errors = np.asarray(list(healthy_errors), dtype=float)
    if errors.size < 2:
        raise InsufficientData("need at least 2 healthy error samples")
    if not K_MIN <= k <= K_MAX:
        raise ValueError(f"k must be in [{K_MIN}, {K_MAX}], got {k}")
    mu = float(np.mean(errors))
    sigma = float(np.std(errors))        # population normalization
    return ThresholdModel(mu_e=mu, sigma_e=sigma, k=k, thr=mu + 0.1 * k * sigma)


def per_learner_thresholds(ensemble, healthy_inputs, k: float,
                           counter=None) -> list[ThresholdModel]:
    """Give every learner its own threshold from its own healthy errors,
    sharing one sensitivity k. Sets threshold_sq on each learner."""
    models = []
    for bl in ensemble.learners:
        errors = [np.sqrt(bl.error_sq(x, counter)) for x in healthy_inputs]
        model = fit_threshold(errors, k)
        bl.threshold_sq = model.thr_sq
        models.append(model)
    return models


@dataclass(frozen=True)
class RunErrors:
    """Per-run material for the sweep, produced by that run's own detector."""

    run_id: str
    failed: bool
    healthy_errors: np.ndarray    # e values from the healthy window
    test_errors: np.ndarray       # e values over the post-training stream


@dataclass
class ValidationReport:
    k_grid: tuple
    entries: list[dict] = field(default_factory=list)   # k, fold, FP, FN
    k_star: float = float("nan")
    plateau: tuple | None = None
    zero_region_found: bool = True

    def totals(self) -> dict[float, tuple[int, int]]:
        out: dict[float, list[int]] = {k: [0, 0] for k in self.k_grid}
        for e in self.entries:
            out[e["k"]][0] += e["FP"]
            out[e["k"]][1] += e["FN"]
        return {k: (v[0], v[1]) for k, v in out.items()}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["k", "fold", "FP", "FN"])
            writer.writeheader()
            writer.writerows(self.entries)
            fh.write(f"# k_star,{self.k_star:g},zero_region,"
                     f"{int(self.zero_region_found)}\n")


def _widest_zero_plateau(k_grid, totals):
    best = None
    start = None
    ks = list(k_grid)
    for i, k in enumerate(ks + [None]):
        clean = k is not None and totals[k] == (0, 0)
        if clean and start is None:
            start = i
        if not clean and start is not None:
            span = (ks[start], ks[i - 1])
            if best is None or span[1] - span[0] > best[1] - best[0]:
                best = span
            start = None
    return best


def loo_sweep(runs: list[RunErrors],
              k_grid=DEFAULT_K_GRID) -> ValidationReport:
    """Leave-one-out sweep of k with run-level FP/FN accounting.

    For each held-out run the threshold statistics are pooled from every
    other run's healthy errors; the held-out run's own error series is then
    judged against the candidate thresholds. k* is the midpoint of the
    widest k-interval with zero FP and zero FN; if none exists the best
    trade-off is reported with the zero_region flag cleared.
    """
    if len(runs) < 2:
        raise InsufficientData("need at least 2 labeled runs")
    report = ValidationReport(k_grid=tuple(k_grid))
    for fold, held_out in enumerate(runs):
        pooled = np.concatenate([r.healthy_errors for r in runs if r is not held_out])
        mu = float(np.mean(pooled))
        sigma = float(np.std(pooled))
        for k in k_grid:
            thr = mu + 0.1 * k * sigma
            predicted_faulty = bool(np.any(held_out.test_errors > thr))
            fp = int(held_out.failed and not predicted_faulty)
            fn = int((not held_out.failed) and predicted_faulty)
            report.entries.append({"k": k, "fold": fold, "FP": fp, "FN": fn})
    totals = report.totals()
    plateau = _widest_zero_plateau(k_grid, totals)
    if plateau is not None:
        report.plateau = plateau
        report.k_star = (plateau[0] + plateau[1]) / 2
    else:
        report.zero_region_found = False
        report.k_star = min(k_grid, key=lambda k: (sum(totals[k]), k))
    return report
