"""Path simulation by uniformization."""

from switchcert.sim.engine import SeedSpec
from switchcert.sim.flow import affine_flow, expm_batch, flow_step
from switchcert.sim.paths import (
    GeneratorCheck,
    QuadraticTest,
    Trajectory,
    default_rate,
    estimate_expectation,
    generator_check,
    simulate_path,
)

__all__ = [
    "SeedSpec",
    "Trajectory",
    "QuadraticTest",
    "GeneratorCheck",
    "affine_flow",
    "expm_batch",
    "flow_step",
    "default_rate",
    "simulate_path",
    "estimate_expectation",
    "generator_check",
]
