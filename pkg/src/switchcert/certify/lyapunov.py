"""Monte-Carlo fit of a Lyapunov bound ``P_t V^q(x) <= C e^{-lambda t} V^q(x) + K``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import least_squares

from switchcert.model import SwitchingSpec
from switchcert.sim.paths import estimate_expectation

__all__ = ["LyapunovFit", "lyapunov_fit"]


@dataclass(frozen=True, eq=False)
class LyapunovFit:
    """Fitted constants, the data they were fitted to, and whether the bound holds.

    ``(C, lam)`` come from a least-squares fit; ``K`` is then raised just
    enough that every Monte-Carlo mean lies below the bound plus ``n_sigma``
    standard errors (``K_fit`` keeps the unlifted value and ``max_excess``
    the largest excess over the unlifted bound, in standard errors).
    ``holds`` requires a finite envelope with ``lam > 0``.
    """

    C: float
    lam: float
    K: float
    q: float
    t: NDArray[np.float64]
    v0: NDArray[np.float64]
    mean: NDArray[np.float64]
    stderr: NDArray[np.float64]
    residuals: NDArray[np.float64]
    holds: bool
    max_excess: float
    K_fit: float = 0.0

    def to_dict(self) -> dict:
        return {
            "C_V": self.C,
            "lambda_V": self.lam,
            "K_V": self.K,
            "K_fit": self.K_fit,
            "q": self.q,
            "holds": self.holds,
            "max_excess_sigma": self.max_excess,
        }


def _default_starts(spec: SwitchingSpec) -> list[tuple[NDArray, int]]:
    e1 = np.zeros(spec.dim)
    e1[0] = 1.0
    return [(spec.metric.x0 + s * e1, i) for i in range(spec.n_regimes) for s in (1.0, 2.0)]


def lyapunov_fit(
    spec: SwitchingSpec,
    starts: Sequence[tuple[ArrayLike, int]] | None,
    t_grid: ArrayLike,
    n_paths: int,
    seed: int,
    q: float | None = None,
    n_sigma: float = 3.0,
    jobs: int = 1,
) -> LyapunovFit:
    """Fit ``(C_V, lambda_V, K_V) >= 0`` to estimates of ``E[V^q(X_t)]``, ``V = d(., x0)``.

    Parameters
    ----------
    starts : sequence of (x, i), optional
        Initial points; defaults to ``x0 + e_1`` and ``x0 + 2 e_1`` in every regime.
    t_grid : array
        Increasing evaluation times.
    q : float, optional
        Exponent; defaults to the metric exponent.
    """
    q = spec.metric.q if q is None else float(q)
    starts = list(starts) if starts is not None else _default_starts(spec)
    t = np.asarray(t_grid, dtype=np.float64)
    tag = f"dist:{q!r}"
    means, ses, v0s, ts = [], [], [], []
    for k, (x, i) in enumerate(starts):
        m, s = estimate_expectation(spec, tag, x, i, t, n_paths, seed + k, jobs=jobs)
        v0 = float(spec.metric.dist(np.asarray(x, dtype=np.float64), spec.metric.x0)) ** q
        means.append(m)
        ses.append(s)
        v0s.append(np.full(t.size, v0))
        ts.append(t)
    mean, se, v0, tt = (np.concatenate(a) for a in (means, ses, v0s, ts))
    scale = np.maximum(se, 1e-3 * max(float(np.abs(mean).max()), 1e-12))

    def resid(p):
        C, lam, K = p
        return (C * np.exp(-lam * tt) * v0 + K - mean) / scale

    with np.errstate(over="ignore"):
        fit = least_squares(resid, x0=[1.0, 0.5, float(np.abs(mean).min())], bounds=([0, 0, 0], [np.inf, 50.0, np.inf]))
    C, lam, K_fit = (float(v) for v in fit.x)
    bound = C * np.exp(-lam * tt) * v0 + K_fit
    finite = bool(np.all(np.isfinite(mean)))
    excess = (mean - bound) / np.where(se > 0, se, np.inf)
    max_excess = float(np.nanmax(np.where(np.isfinite(excess), excess, 0.0)))
    lift = float(np.max(mean - bound - n_sigma * se, initial=0.0)) if finite else np.inf
    K = K_fit + max(lift, 0.0)
    holds = finite and np.isfinite(K) and lam > 1e-9
    return LyapunovFit(C, lam, K, q, tt, v0, mean, se, fit.fun * scale, bool(holds), max_excess, K_fit)
