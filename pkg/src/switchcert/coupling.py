"""Couplings of two switching processes, and of one process with a dominating chain.

Three constructions share the uniformization engine:

* :func:`couple_constant` -- for x-independent rates.  The two copies run
  independent clocks until their regimes meet; afterwards every regime jump
  is applied to both.
* :func:`couple_uniformized` -- one clock of rate ``r`` and one uniform per
  tick, split into "I only", "J only", "both to the same target" and
  "nobody" (:func:`jump_partition`).  This is the Markovian form of the
  four-interval construction.
* :func:`couple_with_dominating` -- a process ``(X, I)`` together with a
  birth-death chain ``L`` such that ``n_I >= L`` once they have coincided.

In all cases the continuous components move synchronously (same flow, same
Brownian increments) while the regimes agree.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from switchcert.chain import BirthDeathRates
from switchcert.model import SwitchingSpec
from switchcert.sim.engine import BatchResult, BatchState, SeedSpec, path_rng, pick, run_batch, run_chunked
from switchcert.sim.paths import StartState, _as_regime, _as_seed, _as_state, check_rate

__all__ = [
    "AdjacencyError",
    "JumpPartition",
    "CoupledRun",
    "DecayCurve",
    "ConstantCouplingKernel",
    "UniformizedKernel",
    "DominatingKernel",
    "jump_partition",
    "dominating_rates",
    "check_adjacency",
    "dominating_clock",
    "couple_constant",
    "couple_uniformized",
    "couple_with_dominating",
    "coupled_batch",
    "dominating_batch",
    "eval_pair_costs",
    "fit_tail_rate",
    "wasserstein_decay_curve",
    "expansion_constant",
]


class AdjacencyError(ValueError):
    """Some regime can jump to a block that is not adjacent to its own."""


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantCouplingKernel:
    """Independent rate-``r`` thinning of both copies, merged after meeting.

    One clock of rate ``2 r`` with a fair coin deciding whose tick it is.
    After ``I == J`` the X-ticks move both regimes and the Y-ticks are void.
    """

    spec: SwitchingSpec
    r: float

    @property
    def clock(self) -> float:
        return 2.0 * self.r

    def jump(self, st: BatchState, rows, rng) -> None:
        x_turn = rng.random(rows.size) < 0.5
        u = rng.random(rows.size)
        merged = st.i[rows] == st.j[rows]
        F = self.spec.n_regimes
        rx = rows[x_turn]
        if rx.size:
            k = pick(self.spec.rates.rates(st.x[rx], st.i[rx]) / self.r, u[x_turn])
            mv = k < F
            st.i[rx[mv]] = k[mv]
            both = mv & merged[x_turn]
            st.j[rx[both]] = k[both]
        sel = ~x_turn & ~merged
        ry = rows[sel]
        if ry.size:
            k = pick(self.spec.rates.rates(st.y[ry], st.j[ry]) / self.r, u[sel])
            mv = k < F
            st.j[ry[mv]] = k[mv]


@dataclass(frozen=True, eq=False)
class JumpPartition:
    """Split of [0, 1) at one clock tick.

    ``alloc[0]``, ``alloc[1]``, ``alloc[2]`` hold the per-target lengths of
    the "I only", "J only" and "both" intervals (laid out in regime order);
    ``lam`` holds the four interval lengths.
    """

    lam: NDArray[np.float64]
    alloc: NDArray[np.float64]

    @property
    def total(self) -> float:
        return float(self.lam.sum())


def _partition_rows(ax: NDArray, ay: NDArray, r: float) -> NDArray:
    """Per-target allocations, shape (n, 3, F)."""
    return np.stack([np.maximum(ax - ay, 0.0), np.maximum(ay - ax, 0.0), np.minimum(ax, ay)], axis=1) / r


def jump_partition(spec: SwitchingSpec, x: ArrayLike, i: int, y: ArrayLike, j: int, r: float) -> JumpPartition:
    """Interval lengths of the uniformized coupling at states ``(x, i)``, ``(y, j)``.

    ``lam[3] = 1 - sum_k max(a(x,i,k), a(y,j,k)) / r`` so the four lengths
    add up to one.
    """
    ax = spec.rates.rates(np.atleast_2d(np.asarray(x, dtype=np.float64)), np.array([i]))
    ay = spec.rates.rates(np.atleast_2d(np.asarray(y, dtype=np.float64)), np.array([j]))
    alloc = _partition_rows(ax, ay, r)[0]
    used = alloc.sum(axis=1)
    lam = np.append(used, 1.0 - np.maximum(ax, ay).sum() / r)
    return JumpPartition(lam=lam, alloc=alloc)


@dataclass(frozen=True)
class UniformizedKernel:
    spec: SwitchingSpec
    r: float

    @property
    def clock(self) -> float:
        return self.r

    def jump(self, st: BatchState, rows, rng) -> None:
        u = rng.random(rows.size)
        ax = self.spec.rates.rates(st.x[rows], st.i[rows])
        ay = self.spec.rates.rates(st.y[rows], st.j[rows])
        probs = _partition_rows(ax, ay, self.r).reshape(rows.size, -1)
        k = pick(probs, u)
        F = self.spec.n_regimes
        kind, target = np.divmod(k, F)
        sel = kind == 0
        st.i[rows[sel]] = target[sel]
        sel = kind == 1
        st.j[rows[sel]] = target[sel]
        sel = kind == 2
        st.i[rows[sel]] = target[sel]
        st.j[rows[sel]] = target[sel]


def check_adjacency(spec: SwitchingSpec, partition: Sequence[Sequence[int]]) -> None:
    """Raise :class:`AdjacencyError` unless every jump stays within neighbouring blocks."""
    block = _block_of(spec, partition)
    F = spec.n_regimes
    for i in range(F):
        far = [j for j in range(F) if j != i and abs(block[j] - block[i]) > 1]
        if far and spec.rates.sum_range(i, far)[1] > 0:
            raise AdjacencyError(f"regime {i} (block {block[i]}) jumps to non-adjacent regimes {far}")


def _block_of(spec: SwitchingSpec, partition) -> NDArray[np.int64]:
    block = np.full(spec.n_regimes, -1, dtype=np.int64)
    for n, blk in enumerate(partition):
        for i in blk:
            if block[i] >= 0:
                raise ValueError(f"regime {i} appears in two blocks")
            block[i] = n
    if np.any(block < 0):
        raise ValueError("partition does not cover every regime")
    return block


def dominating_rates(spec: SwitchingSpec, partition: Sequence[Sequence[int]]) -> tuple[NDArray, NDArray]:
    """Birth rates ``b(0..nbar-1)`` (block-wise infima) and death rates ``d(1..nbar)`` (suprema).

    Returned as raw arrays; they may contain zeros, which the caller reports.
    """
    nbar = len(partition) - 1
    b = np.array([min(spec.rates.sum_range(i, list(partition[n + 1]))[0] for i in partition[n]) for n in range(nbar)])
    d = np.array([max(spec.rates.sum_range(i, list(partition[n - 1]))[1] for i in partition[n]) for n in range(1, nbar + 1)])
    return b, d


def dominating_clock(spec: SwitchingSpec, d: NDArray) -> float:
    """Smallest admissible clock ``2 (a_bar + max d)`` for the dominating coupling."""
    return 2.0 * (spec.rate_bound() + float(np.max(d, initial=0.0)))


@dataclass(frozen=True, eq=False)
class DominatingKernel:
    """Coupling of ``(X, I)`` with the birth-death chain ``L``.

    Each tick flips a fair coin ``B``.  If ``n_I != L``, ``B = 0`` lets ``L``
    move and ``B = 1`` lets ``I`` move, each with doubled probabilities.  If
    ``n_I == L``, ``B = 0`` does nothing and ``B = 1`` draws a joint move
    from the coincident generator (with rates scaled by ``2 / r``).
    """

    spec: SwitchingSpec
    block_of: NDArray[np.int64]
    b_full: NDArray[np.float64]  # b(0..nbar), b(nbar) = 0
    d_full: NDArray[np.float64]  # d(0..nbar), d(0) = 0
    masks: NDArray[np.float64]  # (nbar + 3, F): masks[l + 1] selects F_l
    r: float

    @classmethod
    def build(cls, spec, partition, b, d, r) -> "DominatingKernel":
        block = _block_of(spec, partition)
        nbar = len(partition) - 1
        masks = np.zeros((nbar + 3, spec.n_regimes))
        for n, blk in enumerate(partition):
            masks[n + 1, list(blk)] = 1.0
        return cls(
            spec=spec,
            block_of=block,
            b_full=np.append(np.asarray(b, dtype=np.float64), 0.0),
            d_full=np.insert(np.asarray(d, dtype=np.float64), 0, 0.0),
            masks=masks,
            r=float(r),
        )

    @property
    def clock(self) -> float:
        return self.r

    def jump(self, st: BatchState, rows, rng) -> None:
        B = rng.random(rows.size) < 0.5
        u = rng.random(rows.size)
        s = 2.0 / self.r
        coin = self.block_of[st.i[rows]] == st.l[rows]

        # non-coincident, B = 0: L moves alone
        sel = ~coin & ~B
        rl = rows[sel]
        if rl.size:
            l = st.l[rl]
            probs = np.stack([self.d_full[l], self.b_full[l]], axis=1) * s
            k = pick(probs, u[sel])
            st.l[rl] += np.where(k == 0, -1, np.where(k == 1, 1, 0))

        # non-coincident, B = 1: I moves alone
        sel = ~coin & B
        ri = rows[sel]
        if ri.size:
            probs = self.spec.rates.rates(st.x[ri], st.i[ri]) * s
            k = pick(probs, u[sel])
            mv = k < probs.shape[1]
            st.i[ri[mv]] = k[mv]

        # coincident, B = 1: joint move
        sel = coin & B
        rc = rows[sel]
        if rc.size:
            i, l = st.i[rc], st.l[rc]
            ax = self.spec.rates.rates(st.x[rc], i)
            lower, same, upper = self.masks[l], self.masks[l + 1], self.masks[l + 2]
            s_dn = (ax * lower).sum(axis=1)
            s_up = (ax * upper).sum(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = np.where(s_up > 0, np.minimum(self.b_full[l] / s_up, 1.0), 0.0)
            stay = np.zeros_like(ax)
            stay[np.arange(rc.size), i] = np.maximum(self.d_full[l] - s_dn, 0.0)
            down = ax * lower + stay
            level = ax * same + (1.0 - ratio)[:, None] * ax * upper
            up = ratio[:, None] * ax * upper
            probs = np.concatenate([down, level, up], axis=1) * s
            k = pick(probs, u[sel])
            F = ax.shape[1]
            mv = k < 3 * F
            kind, target = np.divmod(k[mv], F)
            st.i[rc[mv]] = target
            st.l[rc[mv]] += kind - 1


# ---------------------------------------------------------------------------
# Single coupled runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoupledRun:
    """Chronological record of one coupled run.

    Rows are clock ticks (``tag == "event"``) and output-grid times
    (``tag == "grid"``).  ``Y``/``J`` are ``None`` for the dominating
    coupling, ``L`` is ``None`` for the two-copy couplings.
    """

    times: NDArray[np.float64]
    tags: tuple
    X: NDArray[np.float64]
    I: NDArray[np.int64]
    Y: NDArray[np.float64] | None
    J: NDArray[np.int64] | None
    L: NDArray[np.int64] | None
    t_meet: float
    t_sep: float
    t_coincide: float
    dominance_violations: int
    switches: int
    blown: bool

    @property
    def event_times(self) -> NDArray[np.float64]:
        return self.times[np.array([t == "event" for t in self.tags], dtype=bool)]

    def distances(self, spec: SwitchingSpec) -> NDArray[np.float64] | None:
        return None if self.Y is None else spec.metric.dist(self.X, self.Y)

    def to_csv(self, spec: SwitchingSpec) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.X.shape[1]
        head = ["t", "i", "j", "l"] + [f"x_{k + 1}" for k in range(d)]
        if self.Y is not None:
            head += [f"y_{k + 1}" for k in range(d)] + ["d"]
        w.writerow(head)
        dist = self.distances(spec)
        for n, t in enumerate(self.times):
            row = [
                repr(float(t)),
                int(self.I[n]),
                "" if self.J is None else int(self.J[n]),
                "" if self.L is None else int(self.L[n]),
            ] + [repr(float(v)) for v in self.X[n]]
            if self.Y is not None:
                row += [repr(float(v)) for v in self.Y[n]] + [repr(float(dist[n]))]
            w.writerow(row)
        return buf.getvalue()


def _from_log(res: BatchResult) -> CoupledRun:
    rows = res.log
    times = np.array([r[0] for r in rows])
    has_y = rows[0][3] is not None
    has_l = rows[0][4] is not None
    return CoupledRun(
        times=times,
        tags=tuple(r[1] for r in rows),
        X=np.array([r[5] for r in rows]),
        I=np.array([r[2] for r in rows], dtype=np.int64),
        Y=np.array([r[6] for r in rows]) if has_y else None,
        J=np.array([r[3] for r in rows], dtype=np.int64) if has_y else None,
        L=np.array([r[4] for r in rows], dtype=np.int64) if has_l else None,
        t_meet=float(res.t_meet[0]) if res.t_meet is not None else np.inf,
        t_sep=float(res.t_sep[0]) if res.t_sep is not None else np.inf,
        t_coincide=float(res.t_coincide[0]) if res.t_coincide is not None else np.inf,
        dominance_violations=int(res.dominance_violations[0]) if res.dominance_violations is not None else 0,
        switches=int(res.switches[0]),
        blown=bool(res.blown[0]),
    )


def _require_constant(spec: SwitchingSpec) -> None:
    if not spec.rates.is_constant():
        raise ValueError("the constant-rate coupling needs rates that do not depend on x")


def _kernel(spec: SwitchingSpec, mode: str, r: float | None):
    if mode == "constant":
        _require_constant(spec)
        return ConstantCouplingKernel(spec, check_rate(spec, r, factor=1.0))
    if mode == "uniformized":
        return UniformizedKernel(spec, check_rate(spec, r))
    raise ValueError(f"unknown coupling mode {mode!r}")


def _grid(T: float, n_out: int) -> NDArray[np.float64]:
    if T <= 0:
        raise ValueError("horizon T must be positive")
    return np.linspace(0.0, T, n_out + 1)


def _pair_run(spec, kernel, x, y, i, j, T, seed, n_out) -> CoupledRun:
    start = StartState(_as_state(spec, x), _as_regime(spec, i), _as_state(spec, y), _as_regime(spec, j))
    res = run_batch(spec, kernel, start(1), _grid(T, n_out), path_rng(_as_seed(seed)), record=True)
    return _from_log(res)


def couple_constant(
    spec: SwitchingSpec,
    x: ArrayLike,
    y: ArrayLike,
    i: int,
    j: int,
    T: float,
    seed: SeedSpec | int,
    r: float | None = None,
    n_out: int = 200,
) -> CoupledRun:
    """Coupling for x-independent rates: independent until ``I`` and ``J`` meet, merged afterwards."""
    return _pair_run(spec, _kernel(spec, "constant", r), x, y, i, j, T, seed, n_out)


def couple_uniformized(
    spec: SwitchingSpec,
    x: ArrayLike,
    y: ArrayLike,
    i: int,
    j: int,
    T: float,
    r: float | None,
    seed: SeedSpec | int,
    n_out: int = 200,
) -> CoupledRun:
    """Single-uniform coupling at each tick of a rate-``r`` clock (``r >= 2 a_bar``)."""
    return _pair_run(spec, _kernel(spec, "uniformized", r), x, y, i, j, T, seed, n_out)


def _dominating_kernel(spec, partition, r) -> DominatingKernel:
    if partition is None:
        partition = spec.partition
    if partition is None:
        raise ValueError("the dominating coupling needs a partition of the regimes")
    check_adjacency(spec, partition)
    b, d = dominating_rates(spec, partition)
    BirthDeathRates(b, d)  # validates positivity
    need = dominating_clock(spec, d)
    r = max(need, 1.0) if r is None else float(r)
    if r < need * (1 - 1e-12):
        raise ValueError(f"dominating coupling needs r >= 2 (a_bar + max d) = {need:g}, got {r}")
    return DominatingKernel.build(spec, partition, b, d, r)


def couple_with_dominating(
    spec: SwitchingSpec,
    partition: Sequence[Sequence[int]] | None,
    x: ArrayLike,
    i: int,
    T: float,
    r: float | None,
    seed: SeedSpec | int,
    l0: int = 0,
    n_out: int = 200,
) -> CoupledRun:
    """Run ``(X, I)`` together with the dominating birth-death chain ``L`` started at ``l0``."""
    kernel = _dominating_kernel(spec, partition, r)
    start = StartState(_as_state(spec, x), _as_regime(spec, i), l=int(l0))
    res = run_batch(spec, kernel, start(1), _grid(T, n_out), path_rng(_as_seed(seed)), record=True)
    return _from_log(res)


# ---------------------------------------------------------------------------
# Monte-Carlo batches and decay curves
# ---------------------------------------------------------------------------


def coupled_batch(
    spec: SwitchingSpec,
    mode: str,
    x: ArrayLike,
    y: ArrayLike,
    i: int,
    j: int,
    grid: ArrayLike,
    n_paths: int,
    seed: int,
    r: float | None = None,
    jobs: int = 1,
) -> BatchResult:
    """Grid samples of ``n_paths`` independent coupled pairs."""
    start = StartState(_as_state(spec, x), _as_regime(spec, i), _as_state(spec, y), _as_regime(spec, j))
    return run_chunked(spec, _kernel(spec, mode, r), start, n_paths, grid, seed, jobs)


def dominating_batch(
    spec: SwitchingSpec,
    partition,
    x: ArrayLike,
    i: int,
    grid: ArrayLike,
    n_paths: int,
    seed: int,
    r: float | None = None,
    l0: int = 0,
    jobs: int = 1,
) -> BatchResult:
    kernel = _dominating_kernel(spec, partition, r)
    start = StartState(_as_state(spec, x), _as_regime(spec, i), l=int(l0))
    return run_chunked(spec, kernel, start, n_paths, grid, seed, jobs)


def eval_pair_costs(spec: SwitchingSpec, res: BatchResult, q: float, delta: float = 1.0):
    """Truncated cost and ``d~`` cost per grid time and path, both shaped (G, n)."""
    dq = spec.metric.dist(res.X, res.Y) ** q
    diff = res.I != res.J
    bold = np.where(diff, 1.0, np.minimum(dq, 1.0))
    tilde = np.where(diff, 1.0, np.minimum(dq / delta, 1.0))
    return bold, tilde


@dataclass(frozen=True)
class RateFit:
    rate: float
    stderr: float
    intercept: float
    n_points: int

    @property
    def positive(self) -> bool:
        """Rate positive at 95% confidence."""
        return self.rate - 1.96 * self.stderr > 0


def fit_tail_rate(t: ArrayLike, mean: ArrayLike, stderr: ArrayLike) -> RateFit:
    """Weighted least-squares fit of ``log mean = c - rate * t`` over the tail half of the grid.

    Weights are ``(mean / stderr)^2`` (delta method for ``log``); points
    with non-positive means are dropped.
    """
    t = np.asarray(t, dtype=np.float64)
    m = np.asarray(mean, dtype=np.float64)
    s = np.asarray(stderr, dtype=np.float64)
    tail = t >= t[0] + (t[-1] - t[0]) / 2
    ok = tail & (m > 0) & np.isfinite(m)
    if ok.sum() < 2:
        return RateFit(rate=np.nan, stderr=np.nan, intercept=np.nan, n_points=int(ok.sum()))
    tt, y = t[ok], np.log(m[ok])
    rel = np.where(s[ok] > 0, s[ok] / m[ok], np.nan)
    if np.all(np.isfinite(rel)):
        w = 1.0 / rel**2
    else:
        w = np.ones_like(y)
    X = np.stack([np.ones_like(tt), tt], axis=1)
    WX = X * w[:, None]
    cov = np.linalg.inv(X.T @ WX)
    beta = cov @ (WX.T @ y)
    resid = y - X @ beta
    dof = max(len(y) - 2, 1)
    scale = max(float(resid @ (w * resid)) / dof, 1.0)
    return RateFit(rate=float(-beta[1]), stderr=float(np.sqrt(cov[1, 1] * scale)), intercept=float(beta[0]), n_points=len(y))


@dataclass(frozen=True, eq=False)
class DecayCurve:
    """Monte-Carlo curves of ``E[d(X_t, Y_t)]`` (truncated) and ``E[d~(X_t, Y_t)]``."""

    t: NDArray[np.float64]
    mean: NDArray[np.float64]
    stderr: NDArray[np.float64]
    mean_tilde: NDArray[np.float64]
    stderr_tilde: NDArray[np.float64]
    fit: RateFit
    theta_c: float
    n_paths: int
    q: float
    delta: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mean", "stderr", "mean_tilde", "stderr_tilde"])
        for row in zip(self.t, self.mean, self.stderr, self.mean_tilde, self.stderr_tilde):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "rate": self.fit.rate,
            "rate_stderr": self.fit.stderr,
            "rate_positive_95": self.fit.positive,
            "theta_c": self.theta_c,
            "n_paths": self.n_paths,
            "q": self.q,
            "delta": self.delta,
        }


def meeting_rate(t_meet: NDArray[np.float64], horizon: float) -> float:
    """Censored-exponential MLE of the meeting rate: meetings / total time at risk."""
    met = np.isfinite(t_meet)
    exposure = np.where(met, t_meet, horizon).sum()
    return float(met.sum() / exposure) if exposure > 0 else np.inf


def wasserstein_decay_curve(
    spec: SwitchingSpec,
    x: ArrayLike,
    y: ArrayLike,
    i: int,
    j: int,
    t_grid: ArrayLike,
    n_paths: int,
    q: float | None = None,
    seed: int = 0,
    mode: str = "constant",
    r: float | None = None,
    delta: float = 1.0,
    jobs: int = 1,
) -> DecayCurve:
    """Estimate ``t -> E[d(X_t, Y_t)]`` under a coupling and fit its tail decay rate.

    ``q`` defaults to the metric's exponent.  ``theta_c`` is the empirical
    meeting rate of the regimes (censored at the horizon).
    """
    if n_paths < 100:
        raise ValueError("decay curves need at least 100 paths")
    q = spec.metric.q if q is None else float(q)
    grid = np.asarray(t_grid, dtype=np.float64)
    res = coupled_batch(spec, mode, x, y, i, j, grid, n_paths, seed, r, jobs)
    bold, tilde = eval_pair_costs(spec, res, q, delta)
    root = np.sqrt(n_paths)
    mean, se = bold.mean(axis=1), bold.std(axis=1, ddof=1) / root
    mt, st = tilde.mean(axis=1), tilde.std(axis=1, ddof=1) / root
    return DecayCurve(
        t=grid,
        mean=mean,
        stderr=se,
        mean_tilde=mt,
        stderr_tilde=st,
        fit=fit_tail_rate(grid, mean, se),
        theta_c=meeting_rate(res.t_meet, float(grid[-1])),
        n_paths=n_paths,
        q=q,
        delta=delta,
    )


def expansion_constant(q: float, alpha: ArrayLike) -> float:
    """Worst-case expansion rate ``-min_k q alpha(k)`` used in diagnostics."""
    return float(-q * np.min(np.asarray(alpha, dtype=np.float64)))
