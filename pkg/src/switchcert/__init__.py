"""Simulation, coupling and ergodicity certificates for Markov processes with random switching."""

from switchcert.model import (
    AffineFlow,
    ConstantRates,
    Metric,
    OrnsteinUhlenbeck,
    SigmoidRates,
    SpecError,
    SwitchingSpec,
    ValidationReport,
    dump_spec,
    eval_rate,
    load_spec,
    spec_from_dict,
    spec_to_dict,
    validate_spec,
)

__version__ = "0.1.0"

__all__ = [
    "AffineFlow",
    "ConstantRates",
    "Metric",
    "OrnsteinUhlenbeck",
    "SigmoidRates",
    "SpecError",
    "SwitchingSpec",
    "ValidationReport",
    "dump_spec",
    "eval_rate",
    "load_spec",
    "spec_from_dict",
    "spec_to_dict",
    "validate_spec",
]
