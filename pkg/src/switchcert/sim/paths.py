"""Single trajectories, Monte-Carlo expectations and a generator consistency check."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from switchcert.model import OrnsteinUhlenbeck, SwitchingSpec
from switchcert.sim.engine import BatchState, SeedSpec, path_rng, pick, run_batch, run_chunked

__all__ = [
    "Trajectory",
    "ThinningKernel",
    "StartState",
    "QuadraticTest",
    "GeneratorCheck",
    "default_rate",
    "check_rate",
    "simulate_path",
    "observable",
    "estimate_expectation",
    "generator_check",
]


def default_rate(spec: SwitchingSpec) -> float:
    """Uniformization rate ``max(2 a_bar, 1)``."""
    return max(2.0 * spec.rate_bound(), 1.0)


def check_rate(spec: SwitchingSpec, r: float | None, factor: float = 2.0) -> float:
    if r is None:
        return default_rate(spec)
    need = factor * spec.rate_bound()
    if r < need * (1 - 1e-12) or r <= 0:
        raise ValueError(f"uniformization rate r = {r} is below the required {need:g}")
    return float(r)


@dataclass(frozen=True)
class ThinningKernel:
    """Accept a jump to ``j`` with probability ``a(x, i, j) / r`` at each tick."""

    spec: SwitchingSpec
    clock: float

    def jump(self, st: BatchState, rows: NDArray[np.int64], rng: np.random.Generator) -> None:
        u = rng.random(rows.size)
        probs = self.spec.rates.rates(st.x[rows], st.i[rows]) / self.clock
        k = pick(probs, u)
        moved = k < probs.shape[1]
        st.i[rows[moved]] = k[moved]


@dataclass(frozen=True)
class StartState:
    """Picklable factory of identical initial states for a batch."""

    x: NDArray[np.float64]
    i: int
    y: NDArray[np.float64] | None = None
    j: int | None = None
    l: int | None = None

    def __call__(self, n: int) -> BatchState:
        def rep(v):
            return np.repeat(np.asarray(v, dtype=np.float64)[None], n, axis=0)

        return BatchState(
            t=np.zeros(n),
            x=rep(self.x),
            i=np.full(n, self.i, dtype=np.int64),
            y=None if self.y is None else rep(self.y),
            j=None if self.j is None else np.full(n, self.j, dtype=np.int64),
            l=None if self.l is None else np.full(n, self.l, dtype=np.int64),
        )


def _as_state(spec: SwitchingSpec, x0: ArrayLike) -> NDArray[np.float64]:
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if x.shape != (spec.dim,):
        raise ValueError(f"initial state must have dimension {spec.dim}")
    return x


def _as_regime(spec: SwitchingSpec, i0: int) -> int:
    i = int(i0)
    if not 0 <= i < spec.n_regimes:
        raise ValueError(f"regime {i0} outside 0..{spec.n_regimes - 1}")
    return i


def _as_seed(seed) -> SeedSpec:
    return seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed), 0)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One path of ``(X_t, I_t)``.

    ``event_times``/``event_regimes`` list every regime switch with the regime
    entered; ``X``/``I`` are samples on ``grid``.  ``first_exit`` is the first
    time ``max|x_k|`` exceeded 1e12 (``inf`` if never) and ``blown`` flags a
    non-finite state, after which samples are NaN.
    """

    event_times: NDArray[np.float64]
    event_regimes: NDArray[np.int64]
    grid: NDArray[np.float64]
    X: NDArray[np.float64]
    I: NDArray[np.int64]
    switch_count: int
    first_exit: float
    blown: bool
    cap_hit: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.X.shape[1]
        w.writerow(["t", "i"] + [f"x_{k + 1}" for k in range(d)])
        for t, i, x in zip(self.grid, self.I, self.X):
            w.writerow([repr(float(t)), int(i)] + [repr(float(v)) for v in x])
        return buf.getvalue()

    def occupation(self, n_regimes: int) -> NDArray[np.float64]:
        """Exact fraction of ``[0, grid[-1]]`` spent in each regime (from the switch log)."""
        T = float(self.grid[-1])
        times = np.concatenate(([0.0], self.event_times[self.event_times <= T], [T]))
        regs = np.concatenate(([self.I[0]], self.event_regimes[self.event_times <= T]))
        out = np.zeros(n_regimes)
        np.add.at(out, regs, np.diff(times))
        return out / T


def _grid(T: float, n_out: int) -> NDArray[np.float64]:
    if T <= 0:
        raise ValueError("horizon T must be positive")
    return np.linspace(0.0, T, n_out + 1)


def simulate_path(
    spec: SwitchingSpec,
    x0: ArrayLike,
    i0: int,
    T: float,
    seed: SeedSpec | int,
    r: float | None = None,
    n_out: int = 200,
) -> Trajectory:
    """Simulate one path on ``[0, T]`` by thinning a rate-``r`` Poisson clock.

    Parameters
    ----------
    spec : SwitchingSpec
    x0, i0 : initial state and regime
    T : float
        Horizon.
    seed : SeedSpec or int
        ``(seed, stream)``; an int means stream 0.
    r : float, optional
        Clock rate, at least ``2 a_bar``; defaults to ``max(2 a_bar, 1)``.
    n_out : int
        Number of output grid intervals.
    """
    r = check_rate(spec, r)
    start = StartState(_as_state(spec, x0), _as_regime(spec, i0))
    res = run_batch(spec, ThinningKernel(spec, r), start(1), _grid(T, n_out), path_rng(_as_seed(seed)), record=True)
    times, regs, prev = [], [], int(start.i)
    for t, tag, i, *_ in res.log:
        if tag == "event" and i != prev:
            times.append(t)
            regs.append(i)
            prev = i
    return Trajectory(
        event_times=np.array(times, dtype=np.float64),
        event_regimes=np.array(regs, dtype=np.int64),
        grid=res.grid,
        X=res.X[:, 0],
        I=res.I[:, 0],
        switch_count=int(res.switches[0]),
        first_exit=float(res.first_exit[0]),
        blown=bool(res.blown[0]),
        cap_hit=bool(res.cap_hit[0]),
    )


def observable(tag: str | Callable, spec: SwitchingSpec) -> Callable[[NDArray, NDArray], NDArray]:
    """Vectorized observable ``f(X, I)`` from a tag.

    Tags: ``one``, ``norm`` (Euclidean), ``log_norm``, ``sq`` (squared
    Euclidean norm), ``x<k>`` (1-based component), ``regime:<k>``
    (indicator), ``exp:<s>`` (``exp(s x_1)``), ``dist:<p>`` (``d(x, x0)^p``
    in the metric of ``spec``).  Callables are passed through.
    """
    if callable(tag):
        return tag
    name, _, arg = tag.partition(":")
    if name == "one":
        return lambda X, I: np.ones(X.shape[0])
    if name == "norm":
        return lambda X, I: np.linalg.norm(X, axis=1)
    if name == "log_norm":
        return lambda X, I: np.log(np.linalg.norm(X, axis=1))
    if name == "sq":
        return lambda X, I: np.einsum("ni,ni->n", X, X)
    if name == "regime":
        k = int(arg)
        return lambda X, I: (I == k).astype(np.float64)
    if name == "exp":
        s = float(arg)
        return lambda X, I: np.exp(s * X[:, 0])
    if name == "dist":
        p = float(arg)
        return lambda X, I: spec.metric.dist(X, spec.metric.x0) ** p
    if name.startswith("x") and name[1:].isdigit():
        k = int(name[1:]) - 1
        if not 0 <= k < spec.dim:
            raise ValueError(f"component {k + 1} outside dimension {spec.dim}")
        return lambda X, I: X[:, k]
    raise ValueError(f"unknown observable tag {tag!r}")


def estimate_expectation(
    spec: SwitchingSpec,
    f: str | Callable,
    x0: ArrayLike,
    i0: int,
    t: float | Sequence[float],
    n_paths: int,
    seed: int,
    r: float | None = None,
    jobs: int = 1,
):
    """Monte-Carlo mean and standard error of ``f(X_t, I_t)``.

    ``t`` may be a scalar or an increasing sequence of times; the return
    value is ``(mean, stderr)`` as floats or arrays accordingly.
    """
    if n_paths < 2:
        raise ValueError("need at least two paths for a standard error")
    r = check_rate(spec, r)
    fn = observable(f, spec)
    times = np.atleast_1d(np.asarray(t, dtype=np.float64))
    start = StartState(_as_state(spec, x0), _as_regime(spec, i0))
    res = run_chunked(spec, ThinningKernel(spec, r), start, n_paths, times, seed, jobs)
    vals = np.stack([fn(res.X[g], res.I[g]) for g in range(times.size)])
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / np.sqrt(n_paths)
    if np.ndim(t) == 0:
        return float(mean[0]), float(se[0])
    return mean, se


def expectation_report(mean, stderr, **meta) -> str:
    """JSON report for :func:`estimate_expectation` results."""
    doc = dict(meta)
    doc["mean"] = np.asarray(mean).tolist()
    doc["stderr"] = np.asarray(stderr).tolist()
    return json.dumps(doc, indent=2)


@dataclass(frozen=True, eq=False)
class QuadraticTest:
    """Test function ``f(x, i) = x^T P_i x + g_i^T x + h_i``."""

    P: NDArray[np.float64]
    g: NDArray[np.float64]
    h: NDArray[np.float64]

    def __call__(self, X: NDArray, I: NDArray) -> NDArray:
        X = np.atleast_2d(X)
        I = np.atleast_1d(I)
        return np.einsum("ni,nij,nj->n", X, self.P[I], X) + np.einsum("ni,ni->n", self.g[I], X) + self.h[I]

    def generator(self, spec: SwitchingSpec, x: ArrayLike, i: int) -> float:
        """Exact ``L f(x, i)``: drift term, Itô correction for OU, and jump sum."""
        x = np.asarray(x, dtype=np.float64)
        reg = spec.regimes[i]
        P = self.P[i]
        grad = (P + P.T) @ x + self.g[i]
        val = float((reg.A @ x + reg.c) @ grad)
        if isinstance(reg, OrnsteinUhlenbeck):
            val += float(np.trace(reg.sigma @ reg.sigma.T @ P))
        a = spec.rates.rates(x[None], np.array([i]))[0]
        fx = np.array([self(x[None], np.array([j]))[0] for j in range(spec.n_regimes)])
        return val + float(a @ (fx - fx[i]))


@dataclass(frozen=True)
class GeneratorCheck:
    residual: float
    stderr: float
    exact: float
    estimate: float


def generator_check(
    spec: SwitchingSpec,
    f: QuadraticTest,
    x: ArrayLike,
    i: int,
    t_small: float,
    n_paths: int = 10_000,
    seed: int = 0,
) -> GeneratorCheck:
    """Compare the finite-difference quotient ``(E f(X_t) - f(x)) / t`` with ``L f(x, i)``.

    The residual should be within a few standard errors of zero, up to an
    ``O(t)`` bias.
    """
    if not 1e-3 <= t_small <= 1e-1:
        raise ValueError("t_small must lie in [1e-3, 1e-1]")
    x = _as_state(spec, x)
    mean, se = estimate_expectation(spec, f, x, i, t_small, n_paths, seed)
    f0 = float(f(x[None], np.array([i]))[0])
    est = (mean - f0) / t_small
    exact = f.generator(spec, x, i)
    return GeneratorCheck(residual=est - exact, stderr=se / t_small, exact=exact, estimate=est)
