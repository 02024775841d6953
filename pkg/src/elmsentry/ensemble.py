"""Ensemble of base learners with majority voting and the adaptive controller.

The adaptive policy starts each sample with the current active count N,
escalates by two (re-voting on the same sample) while a majority fires, and
only declares a fault when the full ensemble agrees; healthy decisions
de-escalate by two. Inactive learners contribute no operations, which is
the clock-gating model the energy ledger relies on.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import prbs
from .energy import EnergyCalibration, EnergyLedger
from .fxp import OpCounter
from .network import (Arithmetic, NetworkConfig, forward, inference_macs,
                      reconstruction_error)
from .training import OpiumState, Rule, train_stream


class UncalibratedLearner(RuntimeError):
    """A learner was asked to vote before its threshold was set."""


class Decision(enum.Enum):
    HEALTHY = "healthy"
    FAULT = "fault"


class Policy(enum.Enum):
    FIXED_N = "fixed-n"
    ADEPOS = "adepos"


DEFAULT_SEEDS = (0xACE1, 0x1234, 0x9E37, 0x5A5A, 0x3C71, 0x7F2B, 0x2B3D)


@dataclass
class BaseLearner:
    """One ELM one-class classifier, distinguished by its PRBS seed."""

    id: int
    seed: int
    config: NetworkConfig
    w_raw: np.ndarray
    b_raw: np.ndarray
    state: OpiumState | None = None
    threshold_sq: float | None = None   # squared-error scale
    active: bool = True
    beta_trace: list = field(default_factory=list)

    @classmethod
    def create(cls, id: int, seed: int, config: NetworkConfig,
               weight_bits: int = 8) -> "BaseLearner":
        w_raw, b_raw = prbs.weights_for(config, seed, weight_bits=weight_bits)
        return cls(id=id, seed=seed, config=config, w_raw=w_raw, b_raw=b_raw)

    def _wb(self):
        if self.config.arithmetic is Arithmetic.FIXED:
            return self.w_raw, self.b_raw
        scale = self.config.fmt.scale
        return self.w_raw / scale, self.b_raw / scale

    def train(self, samples, rule: Rule = Rule.OPIUM,
              theta_init: float | None = None,
              counter: OpCounter | None = None) -> None:
        w, b = self._wb()
        self.state, self.beta_trace = train_stream(
            w, b, samples, self.config, rule=rule, state=self.state,
            theta_init=theta_init, counter=counter)

    def error_sq(self, x, counter: OpCounter | None = None) -> float:
        if self.state is None:
            raise RuntimeError(f"learner {self.id} is untrained")
        w, b = self._wb()
        x_tilde = forward(x, w, b, self.state.beta, self.config, counter)
        return reconstruction_error(x, x_tilde, self.config)


@dataclass
class EnsembleState:
    learners: list[BaseLearner]
    policy: Policy = Policy.ADEPOS
    n_active: int = 1
    debounce: int = 1                    # consecutive fault decisions to latch
    fault_streak: int = 0
    latched: bool = False

    def __post_init__(self) -> None:
        seeds = [bl.seed for bl in self.learners]
        if len(set(seeds)) != len(seeds):
            raise ValueError("base-learner seeds must be distinct")
        if self.K % 2 == 0:
            raise ValueError("ensemble size must be odd")
        if self.n_active % 2 == 0 or not 1 <= self.n_active <= self.K:
            raise ValueError("active count must be odd and within 1..K")

    @property
    def K(self) -> int:
        return len(self.learners)

    @classmethod
    def create(cls, config: NetworkConfig, seeds=DEFAULT_SEEDS,
               policy: Policy = Policy.ADEPOS, weight_bits: int = 8,
               debounce: int = 1) -> "EnsembleState":
        learners = [BaseLearner.create(i + 1, seed, config, weight_bits)
                    for i, seed in enumerate(seeds)]
        return cls(learners=learners, policy=policy, debounce=debounce)

    def train(self, samples, rule: Rule = Rule.OPIUM,
              theta_init: float | None = None,
              counter: OpCounter | None = None) -> None:
        for bl in self.learners:
            bl.train(samples, rule=rule, theta_init=theta_init, counter=counter)


def vote(learners: list[BaseLearner], x, counter: OpCounter | None = None):
    """Evaluate the given learners on one sample.

    Returns (T, fired, errors): the tally, the per-learner booleans and the
    squared errors, merged in id order for determinism.
    """
    for bl in learners:
        if bl.threshold_sq is None:
            raise UncalibratedLearner(f"learner {bl.id} has no threshold")
    ordered = sorted(learners, key=lambda bl: bl.id)
    errors = [bl.error_sq(x, counter) for bl in ordered]
    fired = [e > bl.threshold_sq for e, bl in zip(errors, ordered)]
    return sum(fired), fired, errors


def adepos_step(state: EnsembleState, x, ledger: EnergyLedger | None = None,
                counter: OpCounter | None = None):
    """One controller step on one sample.

    Escalates by 2 and re-votes on the same sample while a majority fires;
    a majority at the ceiling is a fault, anything else is healthy with a
    de-escalation by 2. Returns (decision, evaluations, last_T, errors,
    final_n) where final_n is the active count of the deciding vote.
    """
    evaluations = 0
    errors_seen: dict[int, float] = {}
    while True:
        n = state.n_active
        active = state.learners[:n]
        t, fired, errors = vote(active, x, counter)
        evaluations += n
        if ledger is not None:
            ledger.record_vote(n)
        for bl, e in zip(sorted(active, key=lambda b: b.id), errors):
            errors_seen[bl.id] = e
        if t >= (n + 1) // 2:
            if n != state.K:
                state.n_active = n + 2
                continue
            return Decision.FAULT, evaluations, t, errors_seen, n
        state.n_active = max(1, n - 2)
        return Decision.HEALTHY, evaluations, t, errors_seen, n


def fixed_n_step(state: EnsembleState, x, ledger: EnergyLedger | None = None,
                 counter: OpCounter | None = None):
    """Single majority vote with the full ensemble."""
    t, fired, errors = vote(state.learners, x, counter)
    if ledger is not None:
        ledger.record_vote(state.K)
    decision = Decision.FAULT if t >= (state.K + 1) // 2 else Decision.HEALTHY
    errors_map = {bl.id: e for bl, e in
                  zip(sorted(state.learners, key=lambda b: b.id), errors)}
    return decision, state.K, t, errors_map


@dataclass
class TimelineReport:
    K: int
    rows: list[dict]
    ledger: EnergyLedger
    fault_index: int | None = None

    @property
    def total_evaluations(self) -> int:
        return self.ledger.evaluations

    def alpha(self) -> dict[int, float]:
        return self.ledger.alpha(self.K)

    def to_csv(self, path) -> None:
        fields = (["sample_index"]
                  + [f"e2_bl{i}" for i in range(1, self.K + 1)]
                  + ["N", "T", "decision", "cum_evaluations", "cum_energy_pJ"])
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.rows)


def run_timeline(state: EnsembleState, samples,
                 continue_after_fault: bool = True,
                 calibration: EnergyCalibration | None = None,
                 counter: OpCounter | None = None) -> TimelineReport:
    """Drive the controller over a sample stream and record everything.

    A latched fault terminates the run unless continue_after_fault is set,
    in which case the remaining samples are evaluated at the full ensemble
    so the complete error curve can be plotted.
    """
    ledger = EnergyLedger()
    rows: list[dict] = []
    fault_index: int | None = None
    ops_bl = inference_macs(state.learners[0].config)
    cum_energy = 0.0
    for idx, x in enumerate(samples):
        ledger.record_sample()
        if state.latched and continue_after_fault:
            decision, n_used, t, errors = fixed_n_step(state, x, ledger, counter)
            decision = Decision.FAULT
            evaluations = state.K
        elif state.policy is Policy.ADEPOS:
            decision, evaluations, t, errors, n_used = adepos_step(
                state, x, ledger, counter)
        else:
            decision, n_used, t, errors = fixed_n_step(state, x, ledger, counter)
            evaluations = state.K
        if not state.latched:
            if decision is Decision.FAULT:
                state.fault_streak += 1
                if state.fault_streak >= state.debounce:
                    state.latched = True
                    fault_index = idx
            else:
                state.fault_streak = 0
        if calibration is not None:
            cum_energy += (calibration.shared_pj_per_sample
                           + evaluations * calibration.bl_inference_pj(ops_bl))
        row = {"sample_index": idx, "N": n_used, "T": t,
               "decision": decision.value,
               "cum_evaluations": ledger.evaluations,
               "cum_energy_pJ": f"{cum_energy:.6g}"}
        for i in range(1, state.K + 1):
            row[f"e2_bl{i}"] = f"{errors[i]:.9g}" if i in errors else ""
        rows.append(row)
        if state.latched and not continue_after_fault:
            break
    return TimelineReport(K=state.K, rows=rows, ledger=ledger,
                          fault_index=fault_index)
