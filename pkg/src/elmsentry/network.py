"""Single base learner forward pass: hidden layer, output layer, error score.

Supports reconstruction mode (autoencoder, m = d) and boundary mode (single
output trained toward a constant target), each in bit-accurate fixed-point
or a float reference path.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .fxp import (DEFAULT_FORMAT, FxpFormat, OpCounter, fixed_matvec)


class Mode(enum.Enum):
    RECONSTRUCTION = "reconstruction"
    BOUNDARY = "boundary"


class Activation(enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"


class Arithmetic(enum.Enum):
    FIXED = "fixed"
    FLOAT = "float"


@dataclass(frozen=True)
class NetworkConfig:
    d: int
    L: int
    mode: Mode = Mode.RECONSTRUCTION
    activation: Activation = Activation.RELU
    arithmetic: Arithmetic = Arithmetic.FIXED
    fmt: FxpFormat = DEFAULT_FORMAT
    boundary_target: float = 1.0

    def __post_init__(self) -> None:
        if not 1 <= self.d <= 16:
            raise ValueError(f"d must be in 1..16, got {self.d}")
        if not 1 <= self.L <= 32:
            raise ValueError(f"L must be in 1..32, got {self.L}")
        if self.activation is Activation.SIGMOID and self.arithmetic is Arithmetic.FIXED:
            raise ValueError("sigmoid is only available in the float reference path")

    @property
    def m(self) -> int:
        return self.d if self.mode is Mode.RECONSTRUCTION else 1

    def with_arithmetic(self, arithmetic: Arithmetic) -> "NetworkConfig":
        return NetworkConfig(self.d, self.L, self.mode, self.activation,
                             arithmetic, self.fmt, self.boundary_target)


def _activate_float(pre: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(pre, 0.0)
    return 1.0 / (1.0 + np.exp(-pre))


def hidden_layer(x, w, b, config: NetworkConfig,
                 counter: OpCounter | None = None) -> np.ndarray:
    """h_j = g(sum_i W_ji x_i + b_j).

    Fixed path takes/returns raw integer words; each dot product runs
    through the 32-bit accumulator and slice before the activation.
    """
    if config.arithmetic is Arithmetic.FIXED:
        pre = fixed_matvec(w, x, config.fmt, bias_raw=b, counter=counter)
        h = np.maximum(pre, 0)
    else:
        pre = np.asarray(w, dtype=float) @ np.asarray(x, dtype=float) + np.asarray(b, dtype=float)
        if counter is not None:
            counter.macs += int(np.size(w))
        h = _activate_float(pre, config.activation)
    if counter is not None:
        counter.activations += config.L
    return h


def output_layer(h, beta, config: NetworkConfig,
                 counter: OpCounter | None = None) -> np.ndarray:
    """x~_k = sum_j beta_jk h_j with the same accumulate-and-slice discipline."""
    beta = np.asarray(beta)
    if config.arithmetic is Arithmetic.FIXED:
        return fixed_matvec(beta.T, h, config.fmt, counter=counter)
    if counter is not None:
        counter.macs += int(beta.size)
    return beta.T.astype(float) @ np.asarray(h, dtype=float)


def forward(x, w, b, beta, config: NetworkConfig,
            counter: OpCounter | None = None) -> np.ndarray:
    h = hidden_layer(x, w, b, config, counter)
    return output_layer(h, beta, config, counter)


def reconstruction_error(x, x_tilde, config: NetworkConfig) -> float:
    """Squared Euclidean error; the canonical internal anomaly score.

    Thresholds are stored squared correspondingly, so comparisons against
    the paper-style (unsquared) norm are order-isomorphic.
    """
    if config.arithmetic is Arithmetic.FIXED:
        scale = config.fmt.scale
        xf = np.asarray(x, dtype=float) / scale
        of = np.asarray(x_tilde, dtype=float) / scale
    else:
        xf = np.asarray(x, dtype=float)
        of = np.asarray(x_tilde, dtype=float)
    if config.mode is Mode.BOUNDARY:
        return float((config.boundary_target - of[0]) ** 2)
    diff = xf - of
    return float(diff @ diff)


def inference_macs(config: NetworkConfig) -> int:
    """Counted MACs for one inference of one base learner: L*d + L*m."""
    return config.L * config.d + config.L * config.m
