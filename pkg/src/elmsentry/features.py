"""Time-domain statistical features of one vibration snapshot.

Converts raw acceleration windows into the network's d-dimensional input:
per-channel RMS, kurtosis, peak-to-peak, crest factor and skewness, then an
affine min-max scaling to 7-bit signed codes fitted on healthy data only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEATURE_NAMES = ("rms", "kurtosis", "peak_peak", "crest", "skewness")

CODE_MIN = -64
CODE_MAX = 63

MAX_INPUTS = 16


class DegenerateWindow(ValueError):
    """Zero variance makes a moment-ratio feature undefined."""


class ShortWindow(ValueError):
    """Fewer than 4 samples in a channel window."""


class ConstantFeature(Warning):
    pass


@dataclass(frozen=True)
class RawSnapshot:
    """One acquisition window: equal-length channels plus metadata."""

    channels: np.ndarray        # (C, n) float array
    sample_rate: float = 20000.0
    timestamp: str = ""

    def __post_init__(self) -> None:
        ch = np.asarray(self.channels, dtype=float)
        if ch.ndim != 2 or ch.shape[1] < 2:
            raise ValueError("channels must be a (C, n>=2) array")
        object.__setattr__(self, "channels", ch)


def extract(snapshot: RawSnapshot,
            selection: tuple[str, ...] = FEATURE_NAMES) -> np.ndarray:
    """Per-channel features, concatenated channel-major, unscaled.

    Central moments use 1/N (population) normalization; kurtosis is raw
    (Gaussian -> 3), not excess.
    """
    unknown = set(selection) - set(FEATURE_NAMES)
    if unknown:
        raise ValueError(f"unknown features: {sorted(unknown)}")
    out = []
    for s in snapshot.channels:
        n = s.size
        if n < 4:
            raise ShortWindow(f"channel window has {n} < 4 samples")
        rms = float(np.sqrt(np.mean(s * s)))
        mean = float(np.mean(s))
        centered = s - mean
        m2 = float(np.mean(centered ** 2))
        vals = {}
        if "rms" in selection:
            vals["rms"] = rms
        if "peak_peak" in selection:
            vals["peak_peak"] = float(np.max(s) - np.min(s))
        if "crest" in selection:
            vals["crest"] = float(np.max(np.abs(s)) / rms) if rms > 0 else 0.0
        if "kurtosis" in selection or "skewness" in selection:
            if m2 == 0.0:
                raise DegenerateWindow("zero variance in a moment-ratio feature")
            if "kurtosis" in selection:
                vals["kurtosis"] = float(np.mean(centered ** 4) / m2 ** 2)
            if "skewness" in selection:
                vals["skewness"] = float(np.mean(centered ** 3) / m2 ** 1.5)
        out.extend(vals[name] for name in selection)
    vec = np.array(out, dtype=float)
    if vec.size > MAX_INPUTS:
        vec = vec[:MAX_INPUTS]  # channel/feature priority order is the selection order
    return vec


@dataclass(frozen=True)
class FeatureScale:
    """Per-feature affine map sending the training min/max to a code range.

    The target range defaults to the full [-64, 63]; a headroom of n bits
    shrinks it to [-64 >> n, 63 >> n] so post-training drift has room to
    move before clamping at the 7-bit limits.
    """

    lo: np.ndarray
    hi: np.ndarray
    code_lo: int = CODE_MIN
    code_hi: int = CODE_MAX

    @property
    def d(self) -> int:
        return int(self.lo.size)


@dataclass(frozen=True)
class FeatureVector:
    """Scaled feature vector: integer 7-bit codes plus the scale used."""

    codes: np.ndarray           # int codes in [-64, 63]
    scale: FeatureScale
    clamped: bool = False

    @property
    def d(self) -> int:
        return int(self.codes.size)


def fit_scaler(training_features: np.ndarray, headroom_bits: int = 0) -> FeatureScale:
    """Fit the min-max scale on a (N, d) matrix of healthy raw features.

    With headroom_bits > 0 the training range maps to the correspondingly
    narrowed sub-range, leaving code space for post-training drift.
    """
    feats = np.asarray(training_features, dtype=float)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError("training features must be a nonempty (N, d) matrix")
    if not 0 <= headroom_bits <= 4:
        raise ValueError(f"headroom_bits must be in 0..4, got {headroom_bits}")
    return FeatureScale(lo=feats.min(axis=0), hi=feats.max(axis=0),
                        code_lo=CODE_MIN >> headroom_bits,
                        code_hi=CODE_MAX >> headroom_bits)


def apply_scaler(raw: np.ndarray, scale: FeatureScale) -> FeatureVector:
    """Map raw features to signed 7-bit codes, clamping out-of-range values.

    Constant features (min == max in training) map to 0. Rounding is
    half-to-even.
    """
    raw = np.asarray(raw, dtype=float)
    span = scale.hi - scale.lo
    codes = np.where(span > 0,
                     np.rint(scale.code_lo + (raw - scale.lo) / np.where(span > 0, span, 1.0)
                             * (scale.code_hi - scale.code_lo)),
                     0.0)
    clipped = np.clip(codes, CODE_MIN, CODE_MAX)
    clamped = bool(np.any(clipped != codes))
    return FeatureVector(codes=clipped.astype(np.int64), scale=scale, clamped=clamped)
