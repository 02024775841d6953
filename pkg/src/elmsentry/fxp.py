"""Deterministic fixed-point arithmetic for a 16-bit MAC datapath.

Models signed storage words of 8/12/16 bits, a 32-bit accumulator with
overflow detection, a configurable 16-bit slice of the accumulator, and a
float<->fixed bridge. All narrowing saturates (never wraps); slicing
truncates low bits like a hardware bit-select.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACC_BITS = 32
ACC_MIN = -(1 << (ACC_BITS - 1))
ACC_MAX = (1 << (ACC_BITS - 1)) - 1


class AccumulatorOverflow(ArithmeticError):
    """True accumulator sum left the 32-bit signed range."""


class DegenerateDenominator(ArithmeticError):
    """Scalar denominator of a fixed-point divide was <= 0."""


@dataclass
class OpCounter:
    """Additive operation tally shared by the arithmetic kernels.

    Counters are mergeable across independent workers; ``saturations`` is a
    sticky event count (nonzero means at least one value was clamped).
    """

    macs: int = 0
    activations: int = 0
    divides: int = 0
    theta_updates: int = 0
    saturations: int = 0

    @property
    def saturated(self) -> bool:
        return self.saturations > 0

    def merge(self, other: "OpCounter") -> "OpCounter":
        self.macs += other.macs
        self.activations += other.activations
        self.divides += other.divides
        self.theta_updates += other.theta_updates
        self.saturations += other.saturations
        return self

    def copy(self) -> "OpCounter":
        return OpCounter(self.macs, self.activations, self.divides,
                         self.theta_updates, self.saturations)


@dataclass(frozen=True)
class FxpFormat:
    """Datapath configuration: storage width, binary point, accumulator slice.

    ``slice_select`` s in {0,1,2,3} picks accumulator bits [15+4(s+1) : 4(s+1)],
    i.e. windows [19:4], [23:8], [27:12], [31:16]. The default s=2 recovers a
    Q3.12 word from the product of two Q3.12 operands.
    """

    word_bits: int = 16
    frac_bits: int = 12
    slice_select: int = 2
    acc_bits: int = ACC_BITS

    def __post_init__(self) -> None:
        if self.word_bits not in (8, 12, 16):
            raise ValueError(f"word_bits must be 8, 12 or 16, got {self.word_bits}")
        if self.acc_bits != ACC_BITS:
            raise ValueError("accumulator is fixed at 32 bits")
        if self.slice_select not in (0, 1, 2, 3):
            raise ValueError(f"slice_select must be in 0..3, got {self.slice_select}")
        if not 0 <= self.frac_bits < self.word_bits:
            raise ValueError(f"frac_bits must satisfy 0 <= frac_bits < word_bits")

    @property
    def shift(self) -> int:
        """Low bit index of the accumulator slice window."""
        return 4 * (self.slice_select + 1)

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def raw_min(self) -> int:
        return -(1 << (self.word_bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.word_bits - 1)) - 1


DEFAULT_FORMAT = FxpFormat()


@dataclass(frozen=True)
class FxpValue:
    """One storage word: two's-complement integer plus its format."""

    raw: int
    fmt: FxpFormat = DEFAULT_FORMAT

    def __post_init__(self) -> None:
        if not self.fmt.raw_min <= self.raw <= self.fmt.raw_max:
            raise ValueError(
                f"raw {self.raw} outside {self.fmt.word_bits}-bit signed range")

    def to_float(self) -> float:
        return self.raw / self.fmt.scale


@dataclass(frozen=True)
class Accumulator:
    """32-bit signed accumulator; overflow is detected, not wrapped."""

    raw: int = 0
    fmt: FxpFormat = DEFAULT_FORMAT

    def __post_init__(self) -> None:
        if not ACC_MIN <= self.raw <= ACC_MAX:
            raise AccumulatorOverflow(f"accumulator value {self.raw} exceeds 32 bits")


def mac(acc: Accumulator, a: FxpValue, b: FxpValue,
        counter: OpCounter | None = None) -> Accumulator:
    """Multiply-accumulate: acc + a*b in exact integer arithmetic."""
    if a.fmt != b.fmt or a.fmt != acc.fmt:
        raise ValueError("mac operands must share one format")
    total = acc.raw + a.raw * b.raw
    if counter is not None:
        counter.macs += 1
    if not ACC_MIN <= total <= ACC_MAX:
        raise AccumulatorOverflow(f"mac result {total} exceeds 32-bit signed range")
    return Accumulator(total, acc.fmt)


def slice_acc(acc: Accumulator, counter: OpCounter | None = None) -> FxpValue:
    """Extract the configured 16-bit window, saturating to the word range.

    Truncates the low bits (arithmetic shift); if the discarded high bits
    disagree with the sign the result clamps and the sticky flag is set.
    """
    fmt = acc.fmt
    window = acc.raw >> fmt.shift
    if window > fmt.raw_max:
        window = fmt.raw_max
        if counter is not None:
            counter.saturations += 1
    elif window < fmt.raw_min:
        window = fmt.raw_min
        if counter is not None:
            counter.saturations += 1
    return FxpValue(window, fmt)


def quantize(x: float, fmt: FxpFormat = DEFAULT_FORMAT,
             counter: OpCounter | None = None) -> FxpValue:
    """Round x to the nearest representable word (half-to-even), saturating."""
    raw = int(np.rint(x * fmt.scale))
    if raw > fmt.raw_max:
        raw = fmt.raw_max
        if counter is not None:
            counter.saturations += 1
    elif raw < fmt.raw_min:
        raw = fmt.raw_min
        if counter is not None:
            counter.saturations += 1
    return FxpValue(raw, fmt)


def dequantize(v: FxpValue) -> float:
    return v.raw / v.fmt.scale


# ---------------------------------------------------------------------------
# Vectorized kernels. These reproduce, element for element, what a chain of
# mac()/slice_acc() calls produces with ascending-index accumulation; the
# scalar ops above stay the reference semantics (asserted in tests).
# ---------------------------------------------------------------------------

def _saturate_words(vals: np.ndarray, fmt: FxpFormat,
                    counter: OpCounter | None) -> np.ndarray:
    clipped = np.clip(vals, fmt.raw_min, fmt.raw_max)
    if counter is not None:
        counter.saturations += int(np.count_nonzero(clipped != vals))
    return clipped


def fixed_matvec(m_raw: np.ndarray, v_raw: np.ndarray, fmt: FxpFormat,
                 bias_raw: np.ndarray | None = None,
                 counter: OpCounter | None = None) -> np.ndarray:
    """Rows of m_raw dotted with v_raw through the 32-bit accumulator.

    The optional bias is pre-shifted into the accumulator so the slice
    recovers it at word scale. Every partial sum is checked against the
    32-bit range, matching the sequential hardware accumulation order.
    """
    m_raw = np.asarray(m_raw, dtype=np.int64)
    v_raw = np.asarray(v_raw, dtype=np.int64)
    prods = m_raw * v_raw[np.newaxis, :]
    partials = np.cumsum(prods, axis=1)
    if bias_raw is not None:
        partials = partials + (np.asarray(bias_raw, dtype=np.int64) << fmt.shift)[:, np.newaxis]
    if counter is not None:
        counter.macs += int(prods.size)
    if partials.size and (partials.max() > ACC_MAX or partials.min() < ACC_MIN):
        raise AccumulatorOverflow("partial sum exceeded 32-bit signed range")
    sliced = partials[:, -1] >> fmt.shift
    return _saturate_words(sliced, fmt, counter)


def fixed_dot(a_raw: np.ndarray, b_raw: np.ndarray, fmt: FxpFormat,
              counter: OpCounter | None = None) -> int:
    """Scalar dot product with the same accumulate-and-slice discipline."""
    out = fixed_matvec(np.asarray(a_raw, dtype=np.int64)[np.newaxis, :],
                       b_raw, fmt, counter=counter)
    return int(out[0])


def fixed_scale(a_raw: np.ndarray, b_raw: np.ndarray, fmt: FxpFormat,
                counter: OpCounter | None = None) -> np.ndarray:
    """Elementwise product of two word arrays, narrowed through the slice."""
    a_raw = np.asarray(a_raw, dtype=np.int64)
    b_raw = np.asarray(b_raw, dtype=np.int64)
    prods = a_raw * b_raw
    if counter is not None:
        counter.macs += int(prods.size)
    if prods.size and (prods.max() > ACC_MAX or prods.min() < ACC_MIN):
        raise AccumulatorOverflow("product exceeded 32-bit signed range")
    return _saturate_words(prods >> fmt.shift, fmt, counter)


def fixed_divide(num_raw: np.ndarray, denom_raw: int, fmt: FxpFormat,
                 counter: OpCounter | None = None) -> np.ndarray:
    """Scalar divide of word numerators: pre-shift, integer divide, truncate.

    The numerators are widened by frac_bits before the divide so the
    quotient lands back on the word's binary point; truncation is toward
    zero, matching a simple restoring divider.
    """
    if denom_raw <= 0:
        raise DegenerateDenominator(f"denominator {denom_raw} <= 0")
    num = np.asarray(num_raw, dtype=np.int64) << fmt.frac_bits
    quot = np.sign(num) * (np.abs(num) // denom_raw)
    if counter is not None:
        counter.divides += 1
    return _saturate_words(quot, fmt, counter)
