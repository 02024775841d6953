"""Figure rendering for the report path.

Every figure is written to a file next to its CSV; nothing here opens a
display.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .calibration import ThresholdModel, ValidationReport
from .energy import OPERATING_POINTS, EnergyCalibration
from .ensemble import TimelineReport


def render_timeline_figure(timeline: TimelineReport,
                           thresholds: list[ThresholdModel] | None,
                           path) -> None:
    """Per-learner squared errors over the stream with threshold lines and
    the active-count trace."""
    idx = [row["sample_index"] for row in timeline.rows]
    fig, (ax_err, ax_n) = plt.subplots(
        2, 1, figsize=(9, 6), sharex=True,
        gridspec_kw={"height_ratios": [3, 1]})
    for i in range(1, timeline.K + 1):
        xs, ys = [], []
        for row in timeline.rows:
            val = row.get(f"e2_bl{i}", "")
            if val != "":
                xs.append(row["sample_index"])
                ys.append(float(val))
        if xs:
            ax_err.semilogy(xs, ys, lw=0.8, label=f"BL{i}")
    if thresholds:
        for i, model in enumerate(thresholds, start=1):
            ax_err.axhline(model.thr_sq, color="red", lw=0.6, alpha=0.5)
    if timeline.fault_index is not None:
        ax_err.axvline(timeline.fault_index, color="black", ls="--", lw=1.0,
                       label="fault latched")
    ax_err.set_ylabel("squared error")
    ax_err.legend(fontsize=7, ncol=4, loc="upper left")
    ax_n.step(idx, [row["N"] for row in timeline.rows], where="post")
    ax_n.set_ylabel("active BLs")
    ax_n.set_xlabel("sample index")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(report: ValidationReport, path) -> None:
    """FP and FN totals against the sensitivity grid."""
    totals = report.totals()
    ks = list(report.k_grid)
    fp = [totals[k][0] for k in ks]
    fn = [totals[k][1] for k in ks]
    fig, (ax_fp, ax_fn) = plt.subplots(1, 2, figsize=(9, 3.5), sharex=True)
    ax_fp.plot(ks, fp, "o-")
    ax_fp.set_xlabel("k")
    ax_fp.set_ylabel("FP (faulty flagged healthy)")
    ax_fn.plot(ks, fn, "o-")
    ax_fn.set_xlabel("k")
    ax_fn.set_ylabel("FN (healthy flagged faulty)")
    if not np.isnan(report.k_star):
        for ax in (ax_fp, ax_fn):
            ax.axvline(report.k_star, color="red", ls="--", lw=1.0)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_energy_figure(rows: list[dict], path) -> None:
    """Normalized efficiency per policy/operating point as a bar chart."""
    labels = [f"{r['operating_point']}\n{r['policy']}" for r in rows]
    values = [float(r["pJ_per_op_normalized"]) for r in rows]
    fig, ax = plt.subplots(figsize=(max(4, 1.6 * len(rows)), 3.5))
    ax.bar(range(len(rows)), values, color="steelblue")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("pJ/OP (normalized)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_training_trace_figure(traces: dict[int, list[float]], path) -> None:
    """Per-learner output-weight norm during training."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for bl_id, trace in sorted(traces.items()):
        ax.plot(trace, lw=0.9, label=f"BL{bl_id}")
    ax.set_xlabel("training sample")
    ax.set_ylabel("||beta||")
    ax.legend(fontsize=7, ncol=4)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
