"""Shared fixtures and small spec builders for the test suite."""

from __future__ import annotations

import sys

import numpy as np
import pytest

from switchcert.examples import dilation_chain, elementary, intro_plane, spiral
from switchcert.model import AffineFlow, ConstantRates, Metric, OrnsteinUhlenbeck, SigmoidRates, SwitchingSpec


def scalar_spec(drifts, rates, q=1.0, partition=None, c=None) -> SwitchingSpec:
    """1-D affine spec ``x' = drift_i x + c_i`` with constant rates."""
    drifts = np.asarray(drifts, dtype=np.float64)
    c = np.zeros_like(drifts) if c is None else np.asarray(c, dtype=np.float64)
    return SwitchingSpec(
        dim=1,
        regimes=[AffineFlow([[a]], [b]) for a, b in zip(drifts, c)],
        rates=ConstantRates(np.asarray(rates, dtype=np.float64)),
        metric=Metric(np.eye(1), q=q),
        partition=partition,
    )


def sigmoid_pair(amplitude: float = 2.0, drift: float = 0.0) -> SwitchingSpec:
    """Two scalar regimes with logistic rates ``1 + amplitude * s(x)``."""
    base = np.array([[0.0, 1.0], [1.0, 0.0]])
    return SwitchingSpec(
        dim=1,
        regimes=[AffineFlow([[drift]], [0.0]), AffineFlow([[drift]], [0.0])],
        rates=SigmoidRates(base, amplitude * base, np.array([1.0]), 0.0),
        metric=Metric(np.eye(1), q=1.0),
    )


def sigmoid_chain() -> SwitchingSpec:
    """Three scalar regimes on a path with x-dependent rates and a three-block partition."""
    base = np.array([[0.0, 1.0, 0.0], [0.5, 0.0, 1.0], [0.0, 0.7, 0.0]])
    amp = np.array([[0.0, 0.5, 0.0], [0.5, 0.0, 0.3], [0.0, 0.4, 0.0]])
    return SwitchingSpec(
        dim=1,
        regimes=[AffineFlow([[0.5]], [0.0]), AffineFlow([[-0.2]], [0.1]), AffineFlow([[-1.0]], [0.0])],
        rates=SigmoidRates(base, amp, np.array([1.0]), 0.2),
        metric=Metric(np.eye(1), q=1.0),
        partition=((0,), (1,), (2,)),
    )


def ou_pair() -> SwitchingSpec:
    return SwitchingSpec(
        dim=2,
        regimes=[
            OrnsteinUhlenbeck(-np.eye(2), np.array([1.0, 0.0]), 0.5 * np.eye(2)),
            AffineFlow(np.array([[-0.5, 1.0], [-1.0, -0.5]]), np.zeros(2)),
        ],
        rates=ConstantRates(np.array([[0.0, 1.5], [0.5, 0.0]])),
        metric=Metric(np.eye(2), q=1.0),
    )


@pytest.fixture
def elementary_spec():
    return elementary()


@pytest.fixture
def intro_spec():
    return intro_plane()


@pytest.fixture
def spiral_spec():
    return spiral()


@pytest.fixture
def chain_spec():
    return dilation_chain()


@pytest.fixture
def sigmoid_spec():
    return sigmoid_chain()


@pytest.fixture
def ou_spec():
    return ou_pair()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
