"""Shared fixtures: small trained ensembles and synthetic streams."""
import numpy as np
import pytest

from elmsentry.ensemble import BaseLearner, EnsembleState, Policy
from elmsentry.network import Arithmetic, NetworkConfig
from elmsentry.training import OpiumState


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def stub_learner(id, seed, threshold_sq, config=None):
    """Learner with zero output weights: error_sq(x) is a pure function of x,
    so firing is controlled entirely through threshold_sq."""
    config = config or NetworkConfig(d=3, L=4, arithmetic=Arithmetic.FIXED)
    bl = BaseLearner.create(id, seed, config)
    bl.state = OpiumState.initial_fixed(config.L, config.m, config.fmt)
    bl.threshold_sq = threshold_sq
    return bl


def stub_ensemble(thresholds, policy=Policy.ADEPOS, debounce=1):
    """Seven stub learners with the given per-learner squared thresholds."""
    seeds = (0xACE1, 0x1234, 0x9E37, 0x5A5A, 0x3C71, 0x7F2B, 0x2B3D)
    learners = [stub_learner(i + 1, seed, thr)
                for i, (seed, thr) in enumerate(zip(seeds, thresholds))]
    return EnsembleState(learners=learners, policy=policy, debounce=debounce)
