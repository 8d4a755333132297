"""Finite continuous-time Markov chains.

Stationary laws, birth-death invariant measures and the Perron eigenpair of
the tilted generator ``Q - q diag(alpha)``, whose decay rate ``eta`` controls
``E[exp(-q ∫ alpha(K_s) ds)]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "ReducibleChainError",
    "NoPositiveExponent",
    "BirthDeathRates",
    "TiltedSolution",
    "as_generator",
    "generator_from_rates",
    "irreducibility",
    "stationary_distribution",
    "birth_death_nu",
    "tilted_exponent",
    "optimize_q",
    "best_alpha",
]

GRID_POINTS = 64
GOLDEN_TOL = 1e-6


class ReducibleChainError(ValueError):
    """The generator has no unique stationary law."""


class NoPositiveExponent(ValueError):
    """``sum(nu * alpha) <= 0``: no tilted exponent is positive near q = 0."""

    def __init__(self, mean: float):
        self.mean = mean
        super().__init__(
            f"stationary mean of alpha is {mean:.6g} <= 0; "
            "eta(q) < 0 for small q, so no positive decay rate exists"
        )


def as_generator(Q: ArrayLike, tol: float = 1e-12) -> NDArray[np.float64]:
    """Validate a generator matrix (non-negative off-diagonal, zero row sums)."""
    Q = np.array(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"generator must be square, got shape {Q.shape}")
    off = Q - np.diag(np.diag(Q))
    if np.any(off < 0):
        raise ValueError("generator has negative off-diagonal entries")
    scale = max(1.0, float(np.abs(Q).max(initial=0.0)))
    if np.any(np.abs(Q.sum(axis=1)) > tol * scale):
        raise ValueError("generator rows do not sum to zero")
    return Q


def generator_from_rates(rates: ArrayLike) -> NDArray[np.float64]:
    """Generator whose off-diagonal part is ``rates`` (diagonal of ``rates`` ignored)."""
    R = np.array(rates, dtype=np.float64)
    np.fill_diagonal(R, 0.0)
    return R - np.diag(R.sum(axis=1))


def irreducibility(a: ArrayLike) -> tuple[bool, list[list[int]]]:
    """Strong connectivity of the graph of strictly positive off-diagonal entries.

    Returns the verdict and the strongly connected components, each sorted,
    listed in order of their smallest member.
    """
    A = np.array(a, dtype=np.float64)
    n = A.shape[0]
    adj = (A > 0) & ~np.eye(n, dtype=bool)
    ncomp, labels = connected_components(csr_matrix(adj.astype(np.int8)), directed=True, connection="strong")
    comps: dict[int, list[int]] = {}
    for node, lab in enumerate(labels):
        comps.setdefault(int(lab), []).append(node)
    ordered = sorted(comps.values(), key=lambda c: c[0])
    return ncomp == 1, ordered


def _require_irreducible(Q: NDArray[np.float64]) -> None:
    ok, comps = irreducibility(Q)
    if not ok:
        raise ReducibleChainError(f"generator is reducible; strongly connected components {comps}")


def stationary_distribution(Q: ArrayLike) -> NDArray[np.float64]:
    """Stationary law ``nu`` with ``nu Q = 0``.

    Uses the Grassmann-Taksar-Heyman state reduction, which involves no
    subtractions and keeps full relative accuracy on the entries of ``nu``.
    """
    Q = as_generator(Q)
    _require_irreducible(Q)
    n = Q.shape[0]
    P = Q.copy()
    np.fill_diagonal(P, 0.0)
    for k in range(n - 1, 0, -1):
        s = P[k, :k].sum()
        P[:k, k] /= s
        P[:k, :k] += np.outer(P[:k, k], P[k, :k])
        np.fill_diagonal(P[:k, :k], 0.0)
    nu = np.zeros(n)
    nu[0] = 1.0
    for j in range(1, n):
        nu[j] = nu[:j] @ P[:j, j]
    return nu / nu.sum()


@dataclass(frozen=True, eq=False)
class BirthDeathRates:
    """Birth rates ``b(0..nbar-1)`` and death rates ``d(1..nbar)`` of a chain on ``{0..nbar}``."""

    b: NDArray[np.float64]
    d: NDArray[np.float64]

    def __post_init__(self):
        b = np.atleast_1d(np.array(self.b, dtype=np.float64))
        d = np.atleast_1d(np.array(self.d, dtype=np.float64))
        if b.shape != d.shape:
            raise ValueError("need one death rate d(n) for every birth rate b(n-1)")
        if np.any(b <= 0):
            raise ValueError("birth rates must be strictly positive")
        if np.any(d <= 0):
            raise ValueError("death rates d(n), n >= 1, must be strictly positive")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", d)

    @property
    def nbar(self) -> int:
        return self.b.shape[0]

    def generator(self) -> NDArray[np.float64]:
        n = self.nbar + 1
        G = np.zeros((n, n))
        for k in range(self.nbar):
            G[k, k + 1] = self.b[k]
            G[k + 1, k] = self.d[k]
        return G - np.diag(G.sum(axis=1))


def birth_death_nu(rates: BirthDeathRates) -> NDArray[np.float64]:
    """Invariant law ``nu(n) = nu(0) prod_{k<=n} b(k-1)/d(k)``, ``nu(0) = 1/(1 + Xi)``."""
    ratios = np.cumprod(rates.b / rates.d)
    xi = ratios.sum()
    nu0 = 1.0 / (1.0 + xi)
    return np.concatenate(([nu0], nu0 * ratios))


@dataclass(frozen=True, eq=False)
class TiltedSolution:
    """Perron eigenpair of ``Q - q diag(alpha)``.

    ``(Q - q diag(alpha)) psi = -eta psi`` with ``psi > 0`` and ``min psi = 1``.
    Starting from any state, ``c e^{-eta t} <= E[exp(-q ∫ alpha)] <= C e^{-eta t}``
    with ``C = max psi / min psi`` and ``c = 1 / C``.
    """

    eta: float
    psi: NDArray[np.float64]
    q: float

    @property
    def C(self) -> float:
        return float(self.psi.max() / self.psi.min())

    @property
    def c(self) -> float:
        return 1.0 / self.C

    def residual(self, Q: ArrayLike, alpha: ArrayLike) -> float:
        M = np.asarray(Q, dtype=np.float64) - self.q * np.diag(np.asarray(alpha, dtype=np.float64))
        return float(np.abs(M @ self.psi + self.eta * self.psi).max())


def tilted_exponent(Q: ArrayLike, alpha: ArrayLike, q: float) -> TiltedSolution:
    """Decay rate ``eta`` of ``E[exp(-q ∫ alpha(K_s) ds)]`` for the chain with generator ``Q``."""
    Q = as_generator(Q)
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (Q.shape[0],):
        raise ValueError("alpha must have one entry per state")
    if not (0.0 < q <= 1.0):
        raise ValueError(f"q must lie in (0, 1], got {q}")
    _require_irreducible(Q)
    M = Q - q * np.diag(alpha)
    n = M.shape[0]
    if n == 1:
        return TiltedSolution(eta=float(-M[0, 0]), psi=np.ones(1), q=q)

    w, V = np.linalg.eig(M)
    k = int(np.argmax(w.real))
    lam = float(w[k].real)
    psi = np.abs(V[:, k].real)

    # inverse-iteration polish; M - shift is nonsingular because lam is simple
    scale = max(1.0, float(np.abs(M).max()))
    shift = lam + 1e-7 * scale
    A = M - shift * np.eye(n)
    for _ in range(2):
        z = np.linalg.solve(A, psi)
        z = np.abs(z)
        psi = z / z.max()
    lam = float(psi @ (M @ psi) / (psi @ psi))
    psi = psi / psi.min()
    return TiltedSolution(eta=-lam, psi=psi, q=float(q))


def _golden_max(f, lo: float, hi: float, tol: float) -> float:
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def optimize_q(Q: ArrayLike, alpha: ArrayLike) -> tuple[float, float]:
    """Exponent ``q* in (0, 1]`` maximizing the tilted decay rate, and ``eta(q*)``.

    A 64-point grid scan is refined by golden-section search to 1e-6.
    Raises :class:`NoPositiveExponent` when the stationary mean of ``alpha``
    is not positive.
    """
    Q = as_generator(Q)
    alpha = np.asarray(alpha, dtype=np.float64)
    nu = stationary_distribution(Q)
    mean = float(nu @ alpha)
    if mean <= 0:
        raise NoPositiveExponent(mean)

    def eta(q: float) -> float:
        return tilted_exponent(Q, alpha, q).eta

    grid = np.arange(1, GRID_POINTS + 1) / GRID_POINTS
    vals = np.array([eta(q) for q in grid])
    k = int(np.argmax(vals))
    lo = grid[k - 1] if k > 0 else grid[0] * 1e-3
    hi = grid[min(k + 1, GRID_POINTS - 1)]
    q_ref = _golden_max(eta, lo, hi, GOLDEN_TOL)
    candidates = [(eta(q_ref), q_ref), (vals[k], grid[k])]
    best_eta, best_q = max(candidates)
    if best_eta <= 0:
        raise NoPositiveExponent(mean)
    return float(best_q), float(best_eta)


def best_alpha(rho: ArrayLike, partition: Sequence[Sequence[int]]) -> NDArray[np.float64]:
    """Largest non-decreasing sequence with ``alpha(n) <= min_{i in F_n} rho(i)``.

    This is the running minimum from the right of the block infima; it is
    pointwise maximal, so it also maximizes ``sum nu(n) alpha(n)``.
    """
    rho = np.asarray(rho, dtype=np.float64)
    flat = sorted(i for blk in partition for i in blk)
    if flat != list(range(rho.shape[0])):
        raise ValueError("partition must cover every regime exactly once")
    block_inf = np.array([rho[list(blk)].min() for blk in partition])
    return np.minimum.accumulate(block_inf[::-1])[::-1]
