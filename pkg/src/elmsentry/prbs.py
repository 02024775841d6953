"""LFSR-backed pseudo-random weight generation.

Input weights and biases are never stored: they are a pure function of a
16-bit seed, the feedback polynomial and the draw index, so the first layer
of every base learner can be regenerated on demand.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .fxp import DEFAULT_FORMAT, FxpFormat

if TYPE_CHECKING:
    from .network import NetworkConfig

# Maximal-length polynomial x^16 + x^14 + x^13 + x^11 + 1 (Fibonacci form).
# Bit positions of the feedback taps, 0-indexed from the LSB.
DEFAULT_TAPS = (15, 13, 12, 10)

REGISTER_BITS = 16
WORD_MIN = -(1 << 15)
WORD_MAX = (1 << 15) - 1


class ZeroState(ValueError):
    """The all-zero LFSR state is absorbing and therefore forbidden."""


@dataclass(frozen=True)
class PrbsState:
    """Value-semantics LFSR state; advancing returns a new state."""

    register: int
    seed: int
    taps: tuple[int, ...] = DEFAULT_TAPS
    weight_bits: int = 8

    def __post_init__(self) -> None:
        if self.seed == 0 or self.register == 0:
            raise ZeroState("LFSR seed/register must be nonzero")
        if not 0 < self.register < (1 << REGISTER_BITS):
            raise ValueError("register must be a nonzero 16-bit value")
        if self.weight_bits not in (2, 4, 6, 8):
            raise ValueError(f"weight_bits must be 2, 4, 6 or 8, got {self.weight_bits}")

    @classmethod
    def from_seed(cls, seed: int, weight_bits: int = 8,
                  taps: tuple[int, ...] = DEFAULT_TAPS) -> "PrbsState":
        return cls(register=seed, seed=seed, taps=taps, weight_bits=weight_bits)


def step_bit(state: PrbsState) -> PrbsState:
    """Advance the register by one bit (Fibonacci feedback into the LSB)."""
    reg = state.register
    fb = 0
    for tap in state.taps:
        fb ^= (reg >> tap) & 1
    reg = ((reg << 1) | fb) & 0xFFFF
    return replace(state, register=reg)


def next16(state: PrbsState) -> tuple[int, PrbsState]:
    """Advance 16 bit-steps and emit the register as a signed 16-bit word."""
    for _ in range(16):
        state = step_bit(state)
    word = state.register
    if word > WORD_MAX:
        word -= 1 << 16
    return word, state


def draw_weight(state: PrbsState) -> tuple[int, PrbsState]:
    """Draw one weight word at the configured precision.

    The top weight_bits of the 16-bit draw are kept and left-aligned (low
    bits zeroed), preserving the full +/-2^15 dynamic range while reducing
    precision.
    """
    word, state = next16(state)
    drop = 16 - state.weight_bits
    word = (word >> drop) << drop
    return word, state


BIAS_SHIFT = 9


def weights_for(config: "NetworkConfig", seed: int,
                weight_bits: int = 8,
                taps: tuple[int, ...] = DEFAULT_TAPS,
                bias_shift: int = BIAS_SHIFT) -> tuple[np.ndarray, np.ndarray]:
    """Regenerate the L x d weight matrix and L-vector of biases for a seed.

    Draw order is fixed: row-major W first, then b. Same (seed, config,
    weight_bits, taps) always reproduces bit-identical arrays. Bias words
    are rescaled to the 7-bit input range (arithmetic shift) so the bias
    addend matches the magnitude of the scaled input features; weights keep
    the full dynamic range.
    """
    state = PrbsState.from_seed(seed, weight_bits=weight_bits, taps=taps)
    n_w = config.L * config.d
    draws = np.empty(n_w + config.L, dtype=np.int64)
    for i in range(draws.size):
        draws[i], state = draw_weight(state)
    w = draws[:n_w].reshape(config.L, config.d)
    b = draws[n_w:] >> bias_shift
    return w, b


def period_bits(state: PrbsState, limit: int = 1 << 17) -> int:
    """Number of single-bit steps until the register state recurs."""
    start = state.register
    cur = state
    for n in range(1, limit + 1):
        cur = step_bit(cur)
        if cur.register == start:
            return n
    raise RuntimeError("no recurrence within limit")
