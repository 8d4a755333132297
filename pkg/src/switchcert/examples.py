"""Built-in example specifications."""

from __future__ import annotations

import numpy as np

from switchcert.model import AffineFlow, ConstantRates, Metric, SwitchingSpec

__all__ = ["EXAMPLES", "build_example", "intro_plane", "elementary", "dilation_chain", "spiral"]


def intro_plane(rate: float = 1.0) -> SwitchingSpec:
    """Planar flows ``x' = -(x - (i, 0))`` for ``i`` in ``{-1, 1}``, switching at rate ``rate``.

    The invariant law lives on the horizontal axis, so there is no
    total-variation convergence from off-axis starts.
    """
    regimes = [AffineFlow(-np.eye(2), np.array([float(i), 0.0])) for i in (-1, 1)]
    return SwitchingSpec(
        dim=2,
        regimes=regimes,
        rates=ConstantRates(np.array([[0.0, rate], [rate, 0.0]])),
        metric=Metric(np.eye(2), q=1.0),
        labels=("-1", "1"),
        name="intro-plane",
    )


def elementary(a1: float = 2.0, am1: float = 1.0, q: float = 0.5) -> SwitchingSpec:
    """Scalar dilations ``x' = i x`` for ``i`` in ``{-1, 1}``.

    Regime index 0 is ``i = -1`` (contracting, leaves at rate ``am1``) and
    index 1 is ``i = 1`` (expanding, leaves at rate ``a1``).
    """
    regimes = [AffineFlow(np.array([[-1.0]]), np.zeros(1)), AffineFlow(np.array([[1.0]]), np.zeros(1))]
    return SwitchingSpec(
        dim=1,
        regimes=regimes,
        rates=ConstantRates(np.array([[0.0, am1], [a1, 0.0]])),
        metric=Metric(np.eye(1), q=q),
        partition=((1,), (0,)),
        labels=("-1", "1"),
        name="elementary",
    )


def dilation_chain(speeds=(1.0, 0.5, -0.25, -0.5), rate: float = 1.0) -> SwitchingSpec:
    """Scalar flows ``x' = -a(i) x`` with a nearest-neighbour regime chain.

    Regimes are ordered from most contracting to most expanding; the
    partition lists them from the worst block up so that ``alpha`` is
    non-decreasing.
    """
    a = np.asarray(speeds, dtype=np.float64)
    F = a.size
    rates = np.zeros((F, F))
    for k in range(F - 1):
        rates[k, k + 1] = rates[k + 1, k] = rate
    order = np.argsort(a, kind="stable")
    return SwitchingSpec(
        dim=1,
        regimes=[AffineFlow(np.array([[-s]]), np.zeros(1)) for s in a],
        rates=ConstantRates(rates),
        metric=Metric(np.eye(1), q=1.0),
        partition=tuple((int(k),) for k in order) if _is_path(order) else None,
        name="dilation-chain",
    )


def _is_path(order) -> bool:
    return all(abs(int(order[k + 1]) - int(order[k])) == 1 for k in range(len(order) - 1))


SPIRAL_A0 = np.array([[-1.0, 3.0], [-1.0 / 3.0, -1.0]])
SPIRAL_A1 = np.array([[-1.0, -1.0 / 3.0], [3.0, -1.0]])
SPIRAL_M0 = np.diag([1.0 / 9.0, 1.0])
SPIRAL_M1 = np.diag([1.0, 1.0 / 9.0])


def spiral(rate: float = 1.0) -> SwitchingSpec:
    """Two planar linear flows, each stable in its own norm, switching at rate ``rate``."""
    return SwitchingSpec(
        dim=2,
        regimes=[AffineFlow(SPIRAL_A0, np.zeros(2)), AffineFlow(SPIRAL_A1, np.zeros(2))],
        rates=ConstantRates(np.array([[0.0, rate], [rate, 0.0]])),
        metric=Metric(np.eye(2), q=1.0),
        name="spiral",
    )


EXAMPLES = {
    "intro-plane": intro_plane,
    "elementary": elementary,
    "dilation-chain": dilation_chain,
    "spiral": spiral,
}


def build_example(tag: str, **params) -> SwitchingSpec:
    try:
        factory = EXAMPLES[tag]
    except KeyError:
        raise ValueError(f"unknown example {tag!r}; choose from {sorted(EXAMPLES)}") from None
    return factory(**params)
