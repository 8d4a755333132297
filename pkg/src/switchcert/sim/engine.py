"""Vectorized uniformization engine shared by simulation and coupling.

A batch of paths is driven by a homogeneous Poisson clock of rate ``clock``;
at each tick a *kernel* decides the discrete moves (plain thinning for a
single process, one of the coupling rules for pairs).  Between ticks the
continuous components follow their regime flows.  Output is sampled on a
fixed time grid.

Randomness: a single path with ``SeedSpec(seed, stream)`` uses
``SeedSequence(seed, spawn_key=(0, stream))``.  Monte-Carlo batches are cut
into chunks of ``CHUNK`` paths, chunk ``c`` using ``spawn_key=(1, c)``, so
results do not depend on how chunks are distributed over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from switchcert.model import OrnsteinUhlenbeck, SwitchingSpec
from switchcert.sim.flow import OU_STEP, affine_flow

__all__ = [
    "SeedSpec",
    "BatchState",
    "BatchResult",
    "StackedDynamics",
    "pick",
    "run_batch",
    "run_chunked",
    "path_rng",
    "chunk_rng",
    "CHUNK",
    "BLOWUP_NORM",
    "MAX_SWITCHES",
]

CHUNK = 4096
BLOWUP_NORM = 1e12
MAX_SWITCHES = 10**8


@dataclass(frozen=True)
class SeedSpec:
    """Master seed and stream index of one path."""

    seed: int
    stream: int = 0


def path_rng(seed: SeedSpec) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed.seed, spawn_key=(0, seed.stream)))


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, chunk)))


class StackedDynamics:
    """Per-regime drift and noise coefficients stacked for fancy indexing."""

    def __init__(self, spec: SwitchingSpec):
        F, d = spec.n_regimes, spec.dim
        m = max([r.sigma.shape[1] for r in spec.regimes if isinstance(r, OrnsteinUhlenbeck)], default=0)
        self.A = np.stack([r.A for r in spec.regimes])
        self.c = np.stack([r.c for r in spec.regimes])
        self.S = np.zeros((F, d, max(m, 1)))
        self.is_ou = np.zeros(F, dtype=bool)
        for k, r in enumerate(spec.regimes):
            if isinstance(r, OrnsteinUhlenbeck):
                self.S[k, :, : r.sigma.shape[1]] = r.sigma
                self.is_ou[k] = True
        self.noise_dim = self.S.shape[2]
        self.any_ou = bool(self.is_ou.any())
        self.affine_regimes = [k for k in range(F) if not self.is_ou[k]]

    def flow_affine(self, x: NDArray, reg: NDArray, dt: NDArray) -> None:
        """In-place exact flow of the rows whose regime is affine."""
        for k in self.affine_regimes:
            sel = np.flatnonzero((reg == k) & (dt > 0))
            if sel.size:
                x[sel] = affine_flow(self.A[k], self.c[k], x[sel], dt[sel])

    def flow(self, rng, x, reg, dt, y=None, reg_y=None, sync=None) -> None:
        """Advance rows of ``x`` (and optionally ``y``) by ``dt`` in place.

        OU rows use Euler-Maruyama substeps; where ``sync`` is true the
        second component reuses the first component's Brownian increments.
        """
        self.flow_affine(x, reg, dt)
        if y is not None:
            self.flow_affine(y, reg_y, dt)
        if not self.any_ou:
            return
        ou_x = self.is_ou[reg] & (dt > 0)
        ou_y = self.is_ou[reg_y] & (dt > 0) if y is not None else np.zeros_like(ou_x)
        rows = np.flatnonzero(ou_x | ou_y)
        if rows.size == 0:
            return
        nsub = np.maximum(1, np.ceil(dt[rows] / OU_STEP - 1e-12)).astype(np.int64)
        h = dt[rows] / nsub
        sq = np.sqrt(h)
        m = self.noise_dim
        for s in range(int(nsub.max())):
            act = nsub > s
            r = rows[act]
            hk = h[act][:, None]
            dw = rng.standard_normal((r.size, m)) * sq[act][:, None]
            bx = ou_x[r]
            if bx.any():
                rx, ix = r[bx], reg[r[bx]]
                drift = np.einsum("nij,nj->ni", self.A[ix], x[rx]) + self.c[ix]
                x[rx] += drift * hk[bx] + np.einsum("nij,nj->ni", self.S[ix], dw[bx])
            if y is not None:
                fresh = rng.standard_normal((r.size, m)) * sq[act][:, None]
                dwy = np.where(sync[r][:, None], dw, fresh)
                by = ou_y[r]
                if by.any():
                    ry, iy = r[by], reg_y[r[by]]
                    drift = np.einsum("nij,nj->ni", self.A[iy], y[ry]) + self.c[iy]
                    y[ry] += drift * hk[by] + np.einsum("nij,nj->ni", self.S[iy], dwy[by])


def pick(probs: NDArray[np.float64], u: NDArray[np.float64]) -> NDArray[np.int64]:
    """Index of the sub-interval of [0, 1) containing ``u``.

    Rows of ``probs`` are laid end to end from 0; returns ``probs.shape[1]``
    when ``u`` falls past their total (the "no move" remainder).
    """
    cum = np.cumsum(probs, axis=1)
    return (u[:, None] >= cum).sum(axis=1)


@dataclass
class BatchState:
    t: NDArray[np.float64]
    x: NDArray[np.float64]
    i: NDArray[np.int64]
    y: NDArray[np.float64] | None = None
    j: NDArray[np.int64] | None = None
    l: NDArray[np.int64] | None = None

    @property
    def paired(self) -> bool:
        return self.y is not None


@dataclass
class BatchResult:
    """Grid samples of a batch of (possibly coupled) paths.

    Arrays are indexed ``[grid_index, path]`` (and a trailing state axis for
    ``X``, ``Y``).  ``t_meet`` is the first time ``I == J`` (0 if they start
    equal); ``t_sep`` the first time they differ after having been equal;
    ``inf`` when the event did not occur before the horizon.
    """

    grid: NDArray[np.float64]
    X: NDArray[np.float64]
    I: NDArray[np.int64]
    Y: NDArray[np.float64] | None = None
    J: NDArray[np.int64] | None = None
    L: NDArray[np.int64] | None = None
    switches: NDArray[np.int64] | None = None
    t_meet: NDArray[np.float64] | None = None
    t_sep: NDArray[np.float64] | None = None
    t_coincide: NDArray[np.float64] | None = None
    dominance_violations: NDArray[np.int64] | None = None
    first_exit: NDArray[np.float64] | None = None
    blown: NDArray[np.bool_] | None = None
    cap_hit: NDArray[np.bool_] | None = None
    log: list = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return self.X.shape[1]

    @staticmethod
    def concat(parts: list["BatchResult"]) -> "BatchResult":
        first = parts[0]
        out = {"grid": first.grid}
        for name in ("X", "I", "Y", "J", "L"):
            arrs = [getattr(p, name) for p in parts]
            out[name] = None if arrs[0] is None else np.concatenate(arrs, axis=1)
        for name in ("switches", "t_meet", "t_sep", "t_coincide", "dominance_violations", "first_exit", "blown", "cap_hit"):
            arrs = [getattr(p, name) for p in parts]
            out[name] = None if arrs[0] is None else np.concatenate(arrs)
        return BatchResult(**out)


def run_batch(
    spec: SwitchingSpec,
    kernel,
    state: BatchState,
    grid: NDArray[np.float64],
    rng: np.random.Generator,
    record: bool = False,
) -> BatchResult:
    """Run a batch from ``state`` (at time 0) and sample it on ``grid``.

    ``kernel`` supplies ``clock`` (the Poisson rate), ``jump(state, rows, rng)``
    which mutates the discrete components of the given rows, and optionally
    ``sync(state, rows)`` selecting rows whose continuous parts share noise
    (default: rows with ``I == J``).  With ``record`` every clock tick and
    grid time is appended to ``log`` (meant for single paths).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a non-empty increasing sequence of non-negative times")
    dyn = StackedDynamics(spec)
    n, d = state.x.shape
    G = grid.size
    paired = state.paired
    has_l = state.l is not None
    clock = float(kernel.clock)
    sync_fn: Callable = getattr(kernel, "sync", None) or (lambda st, rows: st.i[rows] == st.j[rows])

    X = np.full((G, n, d), np.nan)
    I = np.full((G, n), -1, dtype=np.int64)
    Y = np.full((G, n, d), np.nan) if paired else None
    J = np.full((G, n), -1, dtype=np.int64) if paired else None
    L = np.full((G, n), -1, dtype=np.int64) if has_l else None
    switches = np.zeros(n, dtype=np.int64)
    first_exit = np.full(n, np.inf)
    blown = np.zeros(n, dtype=bool)
    cap_hit = np.zeros(n, dtype=bool)
    t_meet = t_sep = t_coin = viol = None
    if paired:
        same = state.i == state.j
        t_meet = np.where(same, 0.0, np.inf)
        t_sep = np.full(n, np.inf)
    if has_l:
        t_coin = np.full(n, np.inf)
        t_coin[kernel.block_of[state.i] == state.l] = 0.0
        viol = np.zeros(n, dtype=np.int64)

    gidx = np.zeros(n, dtype=np.int64)
    t_next = rng.exponential(1.0 / clock, n) if clock > 0 else np.full(n, np.inf)
    log = []

    def snapshot(rows, tag):
        for r in rows:
            log.append(
                (
                    float(state.t[r]),
                    tag,
                    int(state.i[r]),
                    int(state.j[r]) if paired else None,
                    int(state.l[r]) if has_l else None,
                    state.x[r].copy(),
                    state.y[r].copy() if paired else None,
                )
            )

    while True:
        a = np.flatnonzero(gidx < G)
        if a.size == 0:
            break
        g = grid[gidx[a]]
        is_ev = t_next[a] < g
        target = np.where(is_ev, t_next[a], g)
        dt = target - state.t[a]
        if np.any(dt > 0):
            xa = state.x[a]
            if paired:
                ya = state.y[a]
                sync = np.zeros(n, dtype=bool)
                sync[a] = sync_fn(state, a)
                dyn.flow(rng, xa, state.i[a], dt, ya, state.j[a], sync[a])
                state.y[a] = ya
            else:
                dyn.flow(rng, xa, state.i[a], dt)
            state.x[a] = xa
        state.t[a] = target

        gr = a[~is_ev]
        if gr.size:
            X[gidx[gr], gr] = state.x[gr]
            I[gidx[gr], gr] = state.i[gr]
            if paired:
                Y[gidx[gr], gr] = state.y[gr]
                J[gidx[gr], gr] = state.j[gr]
            if has_l:
                L[gidx[gr], gr] = state.l[gr]
            gidx[gr] += 1
            if record:
                snapshot(gr, "grid")

        ev = a[is_ev]
        if ev.size:
            i_old = state.i[ev].copy()
            j_old = state.j[ev].copy() if paired else None
            kernel.jump(state, ev, rng)
            t_next[ev] += rng.exponential(1.0 / clock, ev.size)
            switches[ev] += state.i[ev] != i_old
            if paired:
                switches[ev] += state.j[ev] != j_old
                now_same = state.i[ev] == state.j[ev]
                was_same = i_old == j_old
                tm = t_meet[ev]
                t_meet[ev] = np.where(np.isinf(tm) & now_same, state.t[ev], tm)
                ts = t_sep[ev]
                t_sep[ev] = np.where(np.isinf(ts) & was_same & ~now_same, state.t[ev], ts)
            if has_l:
                coin = kernel.block_of[state.i[ev]] == state.l[ev]
                tc = t_coin[ev]
                t_coin[ev] = np.where(np.isinf(tc) & coin, state.t[ev], tc)
                after = np.isfinite(t_coin[ev])
                viol[ev] += after & (kernel.block_of[state.i[ev]] < state.l[ev])
            capped = ev[switches[ev] >= MAX_SWITCHES]
            if capped.size:
                cap_hit[capped] = True
                gidx[capped] = G
            if record:
                snapshot(ev, "event")

        norms = np.abs(state.x[a]).max(axis=1)
        if paired:
            norms = np.maximum(norms, np.abs(state.y[a]).max(axis=1))
        exited = a[(norms > BLOWUP_NORM) & np.isinf(first_exit[a])]
        first_exit[exited] = state.t[exited]
        bad = a[~np.isfinite(norms)]
        if bad.size:
            # non-finite state: the path stops, remaining grid samples stay NaN
            blown[bad] = True
            gidx[bad] = G

    return BatchResult(
        grid=grid,
        X=X,
        I=I,
        Y=Y,
        J=J,
        L=L,
        switches=switches,
        t_meet=t_meet,
        t_sep=t_sep,
        t_coincide=t_coin,
        dominance_violations=viol,
        first_exit=first_exit,
        blown=blown,
        cap_hit=cap_hit,
        log=log,
    )


def _run_chunk(args) -> BatchResult:
    spec, kernel, make_state, grid, seed, chunk, size = args
    rng = chunk_rng(seed, chunk)
    return run_batch(spec, kernel, make_state(size), grid, rng)


def run_chunked(
    spec: SwitchingSpec,
    kernel,
    make_state: Callable[[int], BatchState],
    n_paths: int,
    grid,
    seed: int,
    jobs: int = 1,
) -> BatchResult:
    """Monte-Carlo driver: fixed-size chunks, optional process fan-out, ordered reduction."""
    n_chunks = math.ceil(n_paths / CHUNK)
    tasks = [
        (spec, kernel, make_state, np.asarray(grid, dtype=np.float64), seed, c, min(CHUNK, n_paths - c * CHUNK))
        for c in range(n_chunks)
    ]
    if jobs > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, n_chunks)) as pool:
            parts = list(pool.map(_run_chunk, tasks))
    else:
        parts = [_run_chunk(t) for t in tasks]
    return BatchResult.concat(parts)
