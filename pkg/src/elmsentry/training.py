"""Online learning of the output weights.

Implements the inverse-free recursive update (full and Lite variants, the
Lite variant freezing its inverse-correlation state at initialization), the
recursive-least-squares reference that needs a per-step solve, and the
batch pseudoinverse oracle. Fixed-point training always runs on the full
16-bit datapath.
"""
from __future__ import annotations

import enum
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fxp import (DEFAULT_FORMAT, DegenerateDenominator, FxpFormat, OpCounter,
                  _saturate_words, fixed_divide, fixed_dot, fixed_matvec,
                  fixed_scale)
from .network import Arithmetic, Mode, NetworkConfig, hidden_layer


class SingularSystem(ArithmeticError):
    """The per-step linear solve of the RLS reference failed."""


class Rule(enum.Enum):
    OPIUM = "opium"
    OPIUM_LITE = "opium-lite"
    OSELM = "oselm"


DEFAULT_THETA_INIT = 100.0
DEFAULT_THETA_INIT_LITE = 1.0


@dataclass
class OpiumState:
    """Recursive-update learning state: output weights plus inverse correlation."""

    beta: np.ndarray          # (L, m); float or raw words depending on path
    theta: np.ndarray         # (L, L)
    lite: bool = False
    theta_init: float = DEFAULT_THETA_INIT
    samples_seen: int = 0

    @classmethod
    def initial(cls, L: int, m: int, lite: bool = False,
                theta_init: float | None = None) -> "OpiumState":
        if theta_init is None:
            theta_init = DEFAULT_THETA_INIT_LITE if lite else DEFAULT_THETA_INIT
        return cls(beta=np.zeros((L, m)), theta=theta_init * np.eye(L),
                   lite=lite, theta_init=theta_init)

    @classmethod
    def initial_fixed(cls, L: int, m: int, fmt: FxpFormat = DEFAULT_FORMAT,
                      lite: bool = False,
                      theta_init: float | None = None) -> "OpiumState":
        if theta_init is None:
            theta_init = DEFAULT_THETA_INIT_LITE
        diag = min(int(round(theta_init * fmt.scale)), fmt.raw_max)
        beta = np.zeros((L, m), dtype=np.int64)
        theta = np.zeros((L, L), dtype=np.int64)
        np.fill_diagonal(theta, diag)
        return cls(beta=beta, theta=theta, lite=lite, theta_init=diag / fmt.scale)


def opium_update(state: OpiumState, h: np.ndarray, target: np.ndarray,
                 counter: OpCounter | None = None) -> OpiumState:
    """One float-path update: eta from the scalar-denominator gain, then the
    rank-one corrections of beta and (unless Lite) theta."""
    h = np.asarray(h, dtype=float)
    target = np.asarray(target, dtype=float)
    L, m = state.beta.shape
    if state.lite:
        # theta is frozen at theta_init * I, so theta @ h is a diagonal scale.
        theta_h = state.theta_init * h
        theta_h_cost = L
    else:
        theta_h = state.theta @ h
        theta_h_cost = L * L
    denom = 1.0 + h @ theta_h
    if denom <= 0:
        raise DegenerateDenominator(f"1 + h^T theta h = {denom} <= 0")
    eta = theta_h / denom
    pred = h @ state.beta
    beta = state.beta + np.outer(eta, target - pred)
    if counter is not None:
        counter.macs += theta_h_cost + L + L + L * m + L * m
        counter.divides += 1
    if state.lite:
        theta = state.theta
    else:
        theta = state.theta - np.outer(eta, theta_h)
        if counter is not None:
            counter.macs += L * L
            counter.theta_updates += 1
    return OpiumState(beta=beta, theta=theta, lite=state.lite,
                      theta_init=state.theta_init,
                      samples_seen=state.samples_seen + 1)


def opium_update_fixed(state: OpiumState, h_raw: np.ndarray, target_raw: np.ndarray,
                       fmt: FxpFormat = DEFAULT_FORMAT,
                       counter: OpCounter | None = None) -> OpiumState:
    """Bit-accurate update on raw words: 32-bit accumulate, slice, one
    pre-shifted integer divide per sample, truncating narrows throughout."""
    h_raw = np.asarray(h_raw, dtype=np.int64)
    target_raw = np.asarray(target_raw, dtype=np.int64)
    theta_h = fixed_matvec(state.theta, h_raw, fmt, counter=counter)
    s = fixed_dot(h_raw, theta_h, fmt, counter=counter)
    denom = fmt.scale + s
    eta = fixed_divide(theta_h, denom, fmt, counter=counter)
    pred = fixed_matvec(state.beta.T, h_raw, fmt, counter=counter)
    err = _saturate_words(target_raw - pred, fmt, counter)
    dbeta = fixed_scale(eta[:, np.newaxis], err[np.newaxis, :], fmt, counter=counter)
    beta = _saturate_words(state.beta + dbeta, fmt, counter)
    if state.lite:
        theta = state.theta
    else:
        dtheta = fixed_scale(eta[:, np.newaxis], theta_h[np.newaxis, :], fmt,
                             counter=counter)
        theta = _saturate_words(state.theta - dtheta, fmt, counter)
        if counter is not None:
            counter.theta_updates += 1
    return OpiumState(beta=beta, theta=theta, lite=state.lite,
                      theta_init=state.theta_init,
                      samples_seen=state.samples_seen + 1)


def opium_multiplies(L: int, m: int, lite: bool) -> int:
    """Counted multiplies per update (the divide is tallied separately)."""
    theta_h = L if lite else L * L
    count = theta_h + L + L + 2 * L * m
    if not lite:
        count += L * L
    return count


@dataclass
class OselmState:
    """RLS reference state: output weights plus the correlation accumulator."""

    beta: np.ndarray   # (L, m)
    corr: np.ndarray   # (L, L), grows by h h^T each sample

    @classmethod
    def initial(cls, L: int, m: int, corr_init: float = 1e-6) -> "OselmState":
        return cls(beta=np.zeros((L, m)), corr=corr_init * np.eye(L))


def oselm_update(state: OselmState, h: np.ndarray, target: np.ndarray,
                 counter: OpCounter | None = None) -> OselmState:
    """K' = K + h h^T; beta' = beta + K'^-1 h E^T via a linear solve."""
    h = np.asarray(h, dtype=float)
    target = np.asarray(target, dtype=float)
    L, m = state.beta.shape
    corr = state.corr + np.outer(h, h)
    err = target - h @ state.beta
    try:
        z = np.linalg.solve(corr, h)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    beta = state.beta + np.outer(z, err)
    if counter is not None:
        counter.macs += L * L + L * m + L ** 3 + L * m
    return OselmState(beta=beta, corr=corr)


def oselm_multiplies(L: int, m: int) -> int:
    return L ** 3 + L * L + 2 * L * m


def opium_memory_words(L: int, m: int) -> int:
    """Persistent learning state: theta (L^2) plus beta (L*m)."""
    return L * L + L * m


def oselm_workspace_words(L: int, m: int) -> int:
    """Working set including the solve: correlation matrix, an LU factor
    copy, elimination scratch, beta and the error row."""
    return 3 * L * L + L * m + m


def batch_pinv(H: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares beta* via a rank-revealing decomposition."""
    H = np.asarray(H, dtype=float)
    targets = np.asarray(targets, dtype=float)
    beta, *_ = np.linalg.lstsq(H, targets, rcond=None)
    return beta


def training_target(x, config: NetworkConfig) -> np.ndarray:
    """Reconstruction trains toward the input, boundary toward the constant."""
    if config.mode is Mode.RECONSTRUCTION:
        return np.asarray(x)
    if config.arithmetic is Arithmetic.FIXED:
        return np.array([int(round(config.boundary_target * config.fmt.scale))],
                        dtype=np.int64)
    return np.array([config.boundary_target])


def train_stream(w, b, samples, config: NetworkConfig, rule: Rule = Rule.OPIUM,
                 state: OpiumState | OselmState | None = None,
                 theta_init: float | None = None,
                 counter: OpCounter | None = None):
    """Run hidden_layer + the chosen update over a sample stream.

    Returns (state, beta_norm_trace); the trace records ||beta|| after each
    sample for convergence reporting. Fixed-point training keeps the full
    16-bit datapath regardless of any inference-time precision reduction.
    """
    L, m = config.L, config.m
    fixed = config.arithmetic is Arithmetic.FIXED
    if state is None:
        if rule is Rule.OSELM:
            if fixed:
                raise ValueError("the RLS reference exists only in the float path")
            state = OselmState.initial(L, m)
        elif fixed:
            state = OpiumState.initial_fixed(L, m, config.fmt,
                                             lite=(rule is Rule.OPIUM_LITE),
                                             theta_init=theta_init)
        else:
            state = OpiumState.initial(L, m, lite=(rule is Rule.OPIUM_LITE),
                                       theta_init=theta_init)
    trace = []
    for x in samples:
        h = hidden_layer(x, w, b, config, counter)
        target = training_target(x, config)
        if rule is Rule.OSELM:
            state = oselm_update(state, h, target, counter)
        elif fixed:
            state = opium_update_fixed(state, h, target, config.fmt, counter)
        else:
            state = opium_update(state, h, target, counter)
        beta = state.beta / config.fmt.scale if fixed else state.beta
        trace.append(float(np.linalg.norm(beta)))
    return state, trace


# ---------------------------------------------------------------------------
# Model serialization: versioned little-endian record with raw beta words.
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"ELMB"
MODEL_VERSION = 1
_HEADER = struct.Struct("<4sBBBBBBHB B")  # magic, ver, d, L-1, m, mode, rule, seed, frac, has_theta


def _mode_code(mode: Mode) -> int:
    return 0 if mode is Mode.RECONSTRUCTION else 1


def _rule_code(rule: Rule) -> int:
    return {Rule.OPIUM: 0, Rule.OPIUM_LITE: 1, Rule.OSELM: 2}[rule]


def save_model(path, beta_raw: np.ndarray, config: NetworkConfig, seed: int,
               rule: Rule, theta_raw: np.ndarray | None = None) -> None:
    beta_raw = np.asarray(beta_raw, dtype=np.int16)
    header = _HEADER.pack(MODEL_MAGIC, MODEL_VERSION, config.d, config.L - 1,
                          config.m, _mode_code(config.mode), _rule_code(rule),
                          seed, config.fmt.frac_bits,
                          0 if theta_raw is None else 1)
    payload = beta_raw.astype("<i2").tobytes()
    if theta_raw is not None:
        payload += np.asarray(theta_raw, dtype=np.int16).astype("<i2").tobytes()
    crc = zlib.crc32(header + payload) & 0xFFFFFFFF
    Path(path).write_bytes(header + payload + struct.pack("<I", crc))


def load_model(path) -> dict:
    blob = Path(path).read_bytes()
    header, rest = blob[:_HEADER.size], blob[_HEADER.size:]
    magic, ver, d, l_minus1, m, mode, rule, seed, frac, has_theta = _HEADER.unpack(header)
    if magic != MODEL_MAGIC:
        raise ValueError("bad model magic")
    if ver != MODEL_VERSION:
        raise ValueError(f"unsupported model version {ver}")
    payload, crc_bytes = rest[:-4], rest[-4:]
    if zlib.crc32(header + payload) & 0xFFFFFFFF != struct.unpack("<I", crc_bytes)[0]:
        raise ValueError("model checksum mismatch")
    L = l_minus1 + 1
    beta_n = L * m
    words = np.frombuffer(payload, dtype="<i2")
    beta = words[:beta_n].astype(np.int64).reshape(L, m)
    theta = None
    if has_theta:
        theta = words[beta_n:beta_n + L * L].astype(np.int64).reshape(L, L)
    return {
        "d": d, "L": L, "m": m,
        "mode": Mode.RECONSTRUCTION if mode == 0 else Mode.BOUNDARY,
        "rule": {0: Rule.OPIUM, 1: Rule.OPIUM_LITE, 2: Rule.OSELM}[rule],
        "seed": seed, "frac_bits": frac,
        "beta_raw": beta, "theta_raw": theta,
    }
