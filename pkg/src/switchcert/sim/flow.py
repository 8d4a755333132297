"""Regime flows: exact affine solutions and Euler-Maruyama for OU regimes."""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

from switchcert.model import AffineFlow, OrnsteinUhlenbeck

__all__ = ["expm_batch", "affine_flow", "ou_substeps", "flow_step", "OU_STEP"]

OU_STEP = 0.01

# degree-13 Padé coefficients and scaling threshold (Higham 2005)
_B13 = np.array(
    [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ]
)
_THETA13 = 5.371920351148152


def expm_batch(M: NDArray[np.float64]) -> NDArray[np.float64]:
    """Matrix exponential of a stack of square matrices, shape (n, k, k).

    Scaling and squaring with a fixed degree-13 Padé approximant; each matrix
    gets its own scaling power.
    """
    M = np.asarray(M, dtype=np.float64)
    n, k, _ = M.shape
    norms = np.abs(M).sum(axis=1).max(axis=1)
    with np.errstate(divide="ignore"):
        s = np.where(norms > _THETA13, np.ceil(np.log2(norms / _THETA13)), 0).astype(np.int64)
    A = M / np.ldexp(1.0, s)[:, None, None]
    eye = np.broadcast_to(np.eye(k), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    b = _B13
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * eye)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * eye
    R = np.linalg.solve(V - U, V + U)
    for level in range(int(s.max(initial=0))):
        sel = s > level
        R[sel] = R[sel] @ R[sel]
    return R


def affine_flow(A: NDArray[np.float64], c: NDArray[np.float64], x: NDArray[np.float64], dt: NDArray[np.float64]):
    """Exact solution of ``x' = A x + c`` after times ``dt`` for a batch of states.

    ``x`` has shape (n, d) and ``dt`` shape (n,).  Uses the augmented matrix
    ``[[A, c], [0, 0]] * dt`` whose exponential carries ``e^{A dt}`` and
    ``∫_0^dt e^{As} ds c`` in its last column.
    """
    x = np.asarray(x, dtype=np.float64)
    dt = np.asarray(dt, dtype=np.float64)
    n, d = x.shape
    if d == 1:
        a = float(A[0, 0])
        with np.errstate(over="ignore", invalid="ignore"):
            phi = dt if a == 0.0 else np.expm1(a * dt) / a
            return (np.exp(a * dt) * x[:, 0] + phi * c[0])[:, None]
    aug = np.zeros((n, d + 1, d + 1))
    aug[:, :d, :d] = A[None] * dt[:, None, None]
    aug[:, :d, d] = c[None] * dt[:, None]
    E = expm_batch(aug)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.einsum("nij,nj->ni", E[:, :d, :d], x) + E[:, :d, d]


def ou_substeps(dt: float) -> tuple[int, float]:
    """Number and size of Euler-Maruyama substeps covering ``dt``."""
    if dt <= 0:
        return 0, 0.0
    k = max(1, math.ceil(dt / OU_STEP - 1e-12))
    return k, dt / k


def flow_step(dyn, x: ArrayLike, dt: float, rng: np.random.Generator | None = None) -> NDArray[np.float64]:
    """Advance one state by ``dt`` under a single regime.

    Affine regimes are integrated exactly; OU regimes use Euler-Maruyama
    substeps of size at most 0.01 drawing noise from ``rng``.
    """
    if dt < 0:
        raise ValueError(f"negative time step {dt}")
    x = np.asarray(x, dtype=np.float64)
    if isinstance(dyn, AffineFlow):
        return affine_flow(dyn.A, dyn.c, x[None], np.array([dt]))[0]
    if isinstance(dyn, OrnsteinUhlenbeck):
        if rng is None:
            raise ValueError("an OU step needs a random generator")
        k, h = ou_substeps(dt)
        sq = math.sqrt(h)
        for _ in range(k):
            dw = rng.standard_normal(dyn.sigma.shape[1]) * sq
            x = x + (dyn.A @ x + dyn.c) * h + dyn.sigma @ dw
        return x
    raise TypeError(f"unsupported dynamics {type(dyn).__name__}")
