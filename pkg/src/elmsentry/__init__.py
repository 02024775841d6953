"""Bit-accurate model of an ELM-ensemble anomaly-detection co-processor."""

from .fxp import FxpFormat, FxpValue, Accumulator, OpCounter
from .network import Activation, Arithmetic, Mode, NetworkConfig
from .training import Rule
from .ensemble import Decision, EnsembleState, Policy
from .ingest import RunConfig, SynthSpec

__all__ = [
    "FxpFormat", "FxpValue", "Accumulator", "OpCounter",
    "Activation", "Arithmetic", "Mode", "NetworkConfig",
    "Rule", "Decision", "EnsembleState", "Policy",
    "RunConfig", "SynthSpec",
]

__version__ = "0.1.0"
