"""Exact optimal transport between small empirical measures on ``E x F``.

Uniform equal-size clouds are solved as assignment problems with
:func:`scipy.optimize.linear_sum_assignment`; general weights go through
the dual simplex of HiGHS, whose vertex solution is then re-balanced on its
tree support so that the plan marginals reproduce the input weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix

__all__ = [
    "EmpiricalMeasure",
    "TransportCost",
    "eval_cost",
    "cost_matrix",
    "ot_exact",
    "w1_sorted_1d",
    "read_samples_csv",
    "MAX_ASSIGNMENT",
    "MAX_GENERAL",
]

MAX_ASSIGNMENT = 512
MAX_GENERAL = 128
_WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted point cloud ``sum_k w_k delta_{(x_k, i_k)}``."""

    points: NDArray[np.float64]
    regimes: NDArray[np.int64]
    weights: NDArray[np.float64] | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        n = pts.shape[0]
        reg = np.broadcast_to(np.asarray(self.regimes, dtype=np.int64), (n,)).copy()
        w = np.full(n, 1.0 / n) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if w.shape != (n,):
            raise ValueError("one weight per point is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "regimes", reg)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


@dataclass(frozen=True, eq=False)
class TransportCost:
    """Ground cost on ``E x F``.

    ``kind`` is one of

    * ``"power"``: ``d(x, y)^q + 1{i != j}``;
    * ``"trunc"``: ``1{i != j} + 1{i = j} (1 ∧ d(x, y)^q)``;
    * ``"tilde"``: ``sqrt((1{i = j} (d^q / delta ∧ 1) + 1{i != j}) (1 + V^q(x) + V^q(y)))``
      with ``V = d(., x0)``.  Not a metric.
    """

    kind: str
    q: float = 1.0
    M: NDArray[np.float64] | None = None
    delta: float = 1.0
    x0: NDArray[np.float64] | None = None

    def __post_init__(self):
        if self.kind not in ("power", "trunc", "tilde"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if not 0 < self.q <= 1:
            raise ValueError("q must lie in (0, 1]")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def is_metric(self) -> bool:
        return self.kind != "tilde"

    def _dist(self, x: NDArray, y: NDArray) -> NDArray:
        diff = x - y
        if self.M is None:
            return np.sqrt(np.einsum("...i,...i->...", diff, diff))
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", diff, np.asarray(self.M), diff), 0.0))


def eval_cost(cost: TransportCost, x: ArrayLike, i, y: ArrayLike, j) -> NDArray[np.float64]:
    """Cost between ``(x, i)`` and ``(y, j)``; broadcasts over leading axes of the states."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    same = np.asarray(i) == np.asarray(j)
    dq = cost._dist(x, y) ** cost.q
    if cost.kind == "power":
        return dq + (~same).astype(np.float64)
    if cost.kind == "trunc":
        return np.where(same, np.minimum(dq, 1.0), 1.0)
    ref = np.zeros(x.shape[-1]) if cost.x0 is None else np.asarray(cost.x0, dtype=np.float64)
    weight = 1.0 + cost._dist(x, ref) ** cost.q + cost._dist(y, ref) ** cost.q
    core = np.where(same, np.minimum(dq / cost.delta, 1.0), 1.0)
    return np.sqrt(core * weight)


def cost_matrix(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cost: TransportCost) -> NDArray[np.float64]:
    return eval_cost(
        cost, mu.points[:, None, :], mu.regimes[:, None], nu.points[None, :, :], nu.regimes[None, :]
    )


def _tree_balance(support: NDArray[np.bool_], a: NDArray, b: NDArray) -> NDArray | None:
    """Flows on a forest-shaped support with the given marginals (leaf elimination).

    Returns ``None`` if the support contains a cycle or the elimination
    produces negative flows.
    """
    n, m = support.shape
    edges = {(int(r), int(c)) for r, c in zip(*np.nonzero(support))}
    if len(edges) > n + m - 1:
        return None
    ra, cb = a.astype(np.float64).copy(), b.astype(np.float64).copy()
    row_deg = support.sum(axis=1).astype(int)
    col_deg = support.sum(axis=0).astype(int)
    plan = np.zeros((n, m))
    while edges:
        leaf = next(((r, c) for r, c in sorted(edges) if row_deg[r] == 1), None)
        if leaf is not None:
            r, c = leaf
            f = ra[r]
        else:
            leaf = next(((r, c) for r, c in sorted(edges) if col_deg[c] == 1), None)
            if leaf is None:
                return None
            r, c = leaf
            f = cb[c]
        if f < -1e-12:
            return None
        f = max(f, 0.0)
        plan[r, c] = f
        ra[r] -= f
        cb[c] -= f
        edges.discard((r, c))
        row_deg[r] -= 1
        col_deg[c] -= 1
    return plan


def ot_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cost: TransportCost) -> tuple[float, NDArray[np.float64]]:
    """Optimal transport value and plan between two empirical measures.

    Equal-size uniform clouds (``n <= 512``) are solved as assignment
    problems; anything else (``n, m <= 128``) as a transport linear program.
    """
    C = cost_matrix(mu, nu, cost)
    n, m = C.shape
    if n == m and mu.is_uniform and nu.is_uniform:
        if n > MAX_ASSIGNMENT:
            raise ValueError(f"assignment form limited to n <= {MAX_ASSIGNMENT}, got {n}")
        rows, cols = linear_sum_assignment(C)
        plan = np.zeros((n, n))
        plan[rows, cols] = 1.0 / n
        return float(C[rows, cols].sum() / n), plan
    if max(n, m) > MAX_GENERAL:
        raise ValueError(f"general transport form limited to n, m <= {MAX_GENERAL}, got {n} x {m}")
    a, b = mu.weights, nu.weights
    r_idx = np.repeat(np.arange(n), m)
    c_idx = np.tile(np.arange(m), n)
    k = np.arange(n * m)
    A_eq = coo_matrix(
        (np.ones(2 * n * m), (np.concatenate([r_idx, n + c_idx]), np.concatenate([k, k]))), shape=(n + m, n * m)
    )
    res = linprog(C.ravel(), A_eq=A_eq.tocsr(), b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    raw = res.x.reshape(n, m)
    plan = _tree_balance(raw > 1e-13, a, b)
    if plan is None:
        plan = np.maximum(raw, 0.0)
    return float((plan * C).sum()), plan


def w1_sorted_1d(samples_a: ArrayLike, samples_b: ArrayLike) -> float:
    """Mean absolute difference of order statistics of two equal-size scalar samples.

    Equals the optimal transport value for ``|x - y|`` (monotone coupling is
    optimal for convex costs; it is not for ``|x - y|^q`` with ``q < 1``).
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    for s in (a, b):
        if s.ndim > 2 or (s.ndim == 2 and s.shape[1] != 1):
            raise ValueError("w1_sorted_1d needs scalar states")
    a, b = a.reshape(-1), b.reshape(-1)
    if a.size != b.size:
        raise ValueError("w1_sorted_1d needs equal sample counts")
    return float(np.abs(np.sort(a) - np.sort(b)).mean())


def read_samples_csv(path: str | Path) -> EmpiricalMeasure:
    """Load a sample cloud from CSV with columns ``x_1..x_d`` and optional ``i`` and ``w``.

    Other columns (``t``, ``path``, ...) are ignored; missing weights mean
    uniform, a missing ``i`` column means regime 0.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no samples")
    xs = sorted((k for k in rows[0] if k.startswith("x_")), key=lambda k: int(k[2:]))
    if not xs:
        raise ValueError(f"{path}: no x_<k> columns")
    pts = np.array([[float(r[k]) for k in xs] for r in rows])
    reg = np.array([int(r["i"]) if r.get("i", "") != "" else 0 for r in rows], dtype=np.int64)
    w = None
    if "w" in rows[0]:
        w = np.array([float(r["w"]) for r in rows])
        w = w / w.sum()
    return EmpiricalMeasure(pts, reg, w)
