"""Lie-bracket rank test for affine vector fields."""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from switchcert.model import SwitchingSpec

__all__ = ["bracket", "hormander_rank", "RANK_TOL"]

RANK_TOL = 1e-9


def bracket(F: tuple, H: tuple) -> tuple:
    """Lie bracket ``[F, H] = DH F - DF H`` of affine fields given as ``(matrix, offset)``.

    For ``F = A x + a`` and ``H = B x + b`` this is ``(BA - AB) x + (Ba - Ab)``.
    """
    A, a = F
    B, b = H
    return B @ A - A @ B, B @ a - A @ b


def hormander_rank(spec: SwitchingSpec, x: ArrayLike, depth: int = 3) -> tuple[int, NDArray[np.float64]]:
    """Rank of the span of the bracket generations ``G_0, ..., G_depth`` at ``x``.

    ``G_0`` holds the differences ``G_i - G_j`` of the regime fields and
    ``G_{k+1} = {[G_i, G] : G in G_k}``.  Returns the rank (singular values
    above ``1e-9`` times the largest) and an orthonormal basis of the span.
    """
    if not spec.all_affine():
        raise ValueError("bracket test requires every regime to be an affine flow")
    x = np.asarray(x, dtype=np.float64)
    fields = [(r.A, r.c) for r in spec.regimes]
    gen = [
        (fields[i][0] - fields[j][0], fields[i][1] - fields[j][1])
        for i in range(len(fields))
        for j in range(i + 1, len(fields))
    ]
    values = [B @ x + b for B, b in gen]
    for _ in range(depth):
        gen = [bracket(Fi, G) for G in gen for Fi in fields]
        values += [B @ x + b for B, b in gen]
    if not values:
        return 0, np.zeros((spec.dim, 0))
    U, s, _ = np.linalg.svd(np.stack(values, axis=1), full_matrices=False)
    if s[0] == 0:
        return 0, np.zeros((spec.dim, 0))
    rank = int((s > RANK_TOL * s[0]).sum())
    return rank, U[:, :rank]
