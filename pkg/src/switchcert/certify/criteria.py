"""Ergodicity criteria and their certificates.

Three criteria, each in a Wasserstein form (curvatures ``rho``) and a
total-variation form (Lyapunov rates ``lambda`` plus a small-set witness):

* average: ``sum_i nu(i) rho(i) > 0`` for x-independent rates;
* on-off: ``rho0 a1 + rho1 a0 > 0`` with contracting/non-contracting blocks;
* birth-death: ``sum_n nu(n) alpha(n) > 0`` for a user-supplied partition.

Strict inequalities are decided in exact rational arithmetic when every
input is a float with a small-denominator rational value, and with a 1e-12
margin otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from switchcert.certify.curvature import CurvatureReport, curvatures
from switchcert.certify.hormander import hormander_rank
from switchcert.chain import (
    BirthDeathRates,
    NoPositiveExponent,
    ReducibleChainError,
    best_alpha,
    birth_death_nu,
    generator_from_rates,
    irreducibility,
    optimize_q,
    stationary_distribution,
    tilted_exponent,
)
from switchcert.coupling import AdjacencyError, check_adjacency, dominating_rates, expansion_constant
from switchcert.model import OrnsteinUhlenbeck, SwitchingSpec

__all__ = [
    "CriterionError",
    "Certificate",
    "check_average_criterion",
    "check_onoff",
    "check_birth_death",
    "certify_all",
    "small_set_witness",
    "SLACK",
]

SLACK = 1e-12
_MAX_DEN = 10**6


class CriterionError(ValueError):
    """The criterion does not apply to this specification."""


# ---------------------------------------------------------------------------
# exact arithmetic helpers
# ---------------------------------------------------------------------------


def _frac(x: float) -> Fraction | None:
    x = float(x)
    if not np.isfinite(x):
        return None
    f = Fraction(x).limit_denominator(_MAX_DEN)
    return f if float(f) == x else None


def _fracs(xs) -> list[Fraction] | None:
    out = [_frac(v) for v in np.ravel(xs)]
    return None if any(f is None for f in out) else out


def _exact_stationary(rates: NDArray[np.float64]) -> list[Fraction] | None:
    """Stationary law of the chain with off-diagonal rates ``rates``, in rationals."""
    n = rates.shape[0]
    flat = _fracs(rates)
    if flat is None:
        return None
    R = [flat[k * n : (k + 1) * n] for k in range(n)]
    # nu Q = 0 with Q^T rows; replace the last equation by sum(nu) = 1
    A = [[(R[j][i] if j != i else -sum(R[i][k] for k in range(n) if k != i)) for j in range(n)] for i in range(n)]
    A[-1] = [Fraction(1)] * n
    b = [Fraction(0)] * (n - 1) + [Fraction(1)]
    for col in range(n):
        piv = next((r for r in range(col, n) if A[r][col] != 0), None)
        if piv is None:
            return None
        A[col], A[piv] = A[piv], A[col]
        b[col], b[piv] = b[piv], b[col]
        for r in range(n):
            if r != col and A[r][col] != 0:
                f = A[r][col] / A[col][col]
                A[r] = [a - f * p for a, p in zip(A[r], A[col])]
                b[r] -= f * b[col]
    return [b[k] / A[k][k] for k in range(n)]


def _positive(exact: Fraction | None, approx: float | None) -> bool:
    if exact is not None:
        return exact > 0
    return approx is not None and np.isfinite(approx) and approx > SLACK


# ---------------------------------------------------------------------------
# certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Certificate:
    """Outcome of one criterion.

    ``verdict`` is true iff the criterion value is strictly positive and
    every assumption in ``assumptions`` passes.
    """

    theorem: str
    value: float | None
    verdict: bool
    constants: dict
    assumptions: dict
    exact_value: str | None = None
    notes: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "verdict": "pass" if self.verdict else "fail",
            "value": self.value,
            "exact_value": self.exact_value,
            "constants": self.constants,
            "assumptions": self.assumptions,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        val = "n/a" if self.value is None else f"{self.value:.10g}"
        lines = [f"{self.theorem}: {'PASS' if self.verdict else 'FAIL'} (criterion value {val})"]
        for name, a in self.assumptions.items():
            lines.append(f"  assumption {name}: {'pass' if a['pass'] else 'fail'}")
        for key in ("q_star", "eta_star"):
            if self.constants.get(key) is not None:
                lines.append(f"  {key} = {self.constants[key]:.10g}")
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


def _listify(v):
    if v is None:
        return None
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# assumptions
# ---------------------------------------------------------------------------


def _assumption_rates(spec: SwitchingSpec) -> dict:
    a_bar = spec.rate_bound()
    kappa = spec.rates.lipschitz(spec.metric)
    return {"pass": bool(np.isfinite(a_bar) and np.isfinite(kappa)), "witness": {"a_bar": a_bar, "kappa": kappa}}


def _assumption_recurrence(spec: SwitchingSpec) -> dict:
    low = spec.rates.lower()
    ok, comps = irreducibility(low)
    if spec.n_regimes == 1:
        ok = True
    return {"pass": bool(ok), "witness": {"a_lower": low.tolist(), "components": comps}}


def _assumption_curvature(curv: CurvatureReport) -> dict:
    return {
        "pass": bool(np.all(np.isfinite(curv.rho))),
        "witness": {"rho": curv.rho.tolist(), "source": list(curv.source)},
    }


def _lyapunov_rates(spec: SwitchingSpec, curv: CurvatureReport) -> tuple[NDArray, str]:
    if spec.lyapunov_rates is not None:
        return np.asarray(spec.lyapunov_rates, dtype=np.float64), "user"
    return curv.rho.copy(), "curvature"


def _assumption_lyapunov(lam: NDArray, source: str) -> dict:
    return {"pass": bool(np.all(np.isfinite(lam))), "witness": {"lambda": lam.tolist(), "source": source}}


def small_set_witness(spec: SwitchingSpec) -> dict:
    """Evidence that sublevel sets of ``V`` are small for some regime.

    An OU regime with non-degenerate diffusion is accepted directly; for
    all-affine specs the bracket rank must reach ``d`` at ``x0`` or at one of
    the probes ``x0 + e_k`` (linear fields vanish at the origin).
    """
    for k, reg in enumerate(spec.regimes):
        if isinstance(reg, OrnsteinUhlenbeck):
            cov = reg.sigma @ reg.sigma.T
            if np.linalg.eigvalsh(cov)[0] > 1e-12 * max(1.0, np.abs(cov).max()):
                return {"pass": True, "witness": {"elliptic_regime": k}}
    if not spec.all_affine():
        return {"pass": False, "witness": {"reason": "no elliptic regime and bracket test needs affine regimes"}}
    x0 = spec.metric.x0
    probes = [x0] + [x0 + e for e in np.eye(spec.dim)]
    ranks = [hormander_rank(spec, p)[0] for p in probes]
    best = int(np.argmax(ranks))
    return {
        "pass": bool(ranks[best] == spec.dim),
        "witness": {"bracket_rank": int(ranks[best]), "dim": spec.dim, "point": np.asarray(probes[best]).tolist()},
    }


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def _stability_note(spec: SwitchingSpec, vals: NDArray) -> list[str]:
    if not spec.all_affine() or np.any(vals > 0):
        return []
    hurwitz = all(np.linalg.eigvals(r.A).real.max() < 0 for r in spec.regimes)
    if not hurwitz:
        return []
    return [
        "every regime is stable on its own (Hurwitz drift) but none contracts in the shared metric; "
        "contraction in regime-specific norms does not combine and switching can still blow up "
        "(see the 'spiral' example)"
    ]


_NO_SPECTRAL = {"q_star": None, "eta_star": None, "C_spectral": None, "c_spectral": None, "varrho": None}


def _spectral(Q: NDArray, alpha: NDArray) -> dict:
    """q*, eta* and the eigenvector constants; empty values if unavailable."""
    try:
        q, eta = optimize_q(Q, alpha)
    except (NoPositiveExponent, ReducibleChainError):
        return dict(_NO_SPECTRAL)
    sol = tilted_exponent(Q, alpha, q)
    return {"q_star": q, "eta_star": eta, "C_spectral": sol.C, "c_spectral": sol.c, "varrho": expansion_constant(q, alpha)}


def _values(spec, curv, kind):
    if kind == "W":
        return curv.rho, {"3": _assumption_curvature(curv)}, "rho"
    lam, src = _lyapunov_rates(spec, curv)
    return lam, {"4": _assumption_lyapunov(lam, src), "small-set": small_set_witness(spec)}, "lambda"


def _finish(theorem, value, exact, constants, assumptions, notes) -> Certificate:
    ok = _positive(exact, value) and all(a["pass"] for a in assumptions.values())
    return Certificate(
        theorem=theorem,
        value=None if value is None else float(value),
        verdict=bool(ok),
        constants={k: _listify(v) for k, v in constants.items()},
        assumptions=assumptions,
        exact_value=None if exact is None else str(exact),
        notes=tuple(notes),
    )


def check_average_criterion(spec: SwitchingSpec, curv: CurvatureReport | None = None, kind: str = "W") -> Certificate:
    """``sum_i nu(i) rho(i) > 0`` (``kind="W"``) or with ``lambda`` (``kind="TV"``).

    Only for x-independent rates; ``nu`` is the stationary law of the
    regime chain and ``(q*, eta*)`` the optimal tilted exponent.
    """
    if not spec.rates.is_constant():
        raise CriterionError("the average criterion needs x-independent rates; use the on-off or birth-death criterion")
    curv = curv or curvatures(spec)
    vals, extra, name = _values(spec, curv, kind)
    assumptions = {"1": _assumption_rates(spec), "2": _assumption_recurrence(spec), **extra}
    rates = spec.rates.lower()
    Q = generator_from_rates(rates)
    notes = _stability_note(spec, vals)
    try:
        nu = stationary_distribution(Q)
    except ReducibleChainError as err:
        return _finish(f"{kind}-constant", None, None, {"nu": None, name: vals}, assumptions, notes + [str(err)])
    value = float(nu @ vals)
    exact = None
    nu_x, v_x = _exact_stationary(rates), _fracs(vals)
    if nu_x is not None and v_x is not None:
        exact = sum(a * b for a, b in zip(nu_x, v_x))
    constants = {"nu": nu, name: vals, "criterion": value}
    constants.update(_spectral(Q, vals) if _positive(exact, value) else dict(_NO_SPECTRAL))
    return _finish(f"{kind}-constant", value, exact, constants, assumptions, notes)


def check_onoff(spec: SwitchingSpec, curv: CurvatureReport | None = None, kind: str = "W") -> Certificate:
    """``rho0 a1 + rho1 a0 > 0`` with ``F0 = {rho > 0}`` and ``F1 = {rho <= 0}``.

    ``a0`` is the largest escape rate from a contracting regime into ``F1``
    and ``a1`` the smallest return rate from ``F1`` into ``F0``.  An empty
    ``F1`` passes by convention (every regime contracts).
    """
    curv = curv or curvatures(spec)
    vals, extra, name = _values(spec, curv, kind)
    assumptions = {"1": _assumption_rates(spec), "2": _assumption_recurrence(spec), **extra}
    F = range(spec.n_regimes)
    F0 = [i for i in F if vals[i] > 0]
    F1 = [i for i in F if vals[i] <= 0]
    notes = _stability_note(spec, vals)
    if not F0:
        raise CriterionError(f"no regime has positive {name}; the on-off criterion needs F0 non-empty")
    rho0 = float(vals[F0].min())
    if not F1:
        constants = {"F0": F0, "F1": F1, f"{name}0": rho0, f"{name}1": None, "a0": 0.0, "a1": None, "criterion": rho0}
        constants.update(_spectral(np.zeros((1, 1)), np.array([rho0])))
        notes.append("F1 is empty: every regime contracts, pass by convention")
        return _finish(f"{kind}-onoff", rho0, _frac(rho0), constants, assumptions, notes)
    rho1 = float(vals[F1].min())
    a0 = max(spec.rates.sum_range(i, F1)[1] for i in F0)
    a1 = min(spec.rates.sum_range(i, F0)[0] for i in F1)
    value = rho0 * a1 + rho1 * a0
    parts = _fracs([rho0, rho1, a0, a1])
    exact = None if parts is None else parts[0] * parts[3] + parts[1] * parts[2]
    constants = {"F0": F0, "F1": F1, f"{name}0": rho0, f"{name}1": rho1, "a0": a0, "a1": a1, "criterion": value}
    if _positive(exact, value) and a0 > 0 and a1 > 0:
        # two-state dominating chain: state 0 = F1 (rate a1 up), state 1 = F0 (rate a0 down)
        Q = np.array([[-a1, a1], [a0, -a0]])
        constants["nu"] = [a0 / (a0 + a1), a1 / (a0 + a1)]
        constants.update(_spectral(Q, np.array([rho1, rho0])))
    else:
        constants["nu"] = None
        constants.update(dict(_NO_SPECTRAL))
    return _finish(f"{kind}-onoff", value, exact, constants, assumptions, notes)


def check_birth_death(
    spec: SwitchingSpec,
    curv: CurvatureReport | None = None,
    partition: Sequence[Sequence[int]] | None = None,
    kind: str = "W",
) -> Certificate:
    """``sum_n nu(n) alpha(n) > 0`` for the dominating birth-death chain of a partition.

    ``b(n)``/``d(n)`` are block-wise infima/suprema of the rates into the
    next/previous block, ``nu`` the product-form invariant law and ``alpha``
    the largest non-decreasing minorant of the block infima of ``rho``.
    """
    partition = partition if partition is not None else spec.partition
    if partition is None:
        raise CriterionError("the birth-death criterion needs a partition of the regimes")
    partition = [list(b) for b in partition]
    curv = curv or curvatures(spec)
    vals, extra, name = _values(spec, curv, kind)
    check_adjacency(spec, partition)
    b, d = dominating_rates(spec, partition)
    if np.any(b <= 0) or np.any(d <= 0):
        raise CriterionError(f"birth rates {b.tolist()} and death rates {d.tolist()} must all be positive")
    bd = BirthDeathRates(b, d)
    assumptions = {
        "1": _assumption_rates(spec),
        "2": _assumption_recurrence(spec),
        **extra,
        "5": {"pass": True, "witness": {"partition": partition, "b": b.tolist(), "d": d.tolist()}},
    }
    nu = birth_death_nu(bd)
    alpha = best_alpha(vals, partition)
    value = float(nu @ alpha)
    exact = None
    bx, dx, ax = _fracs(b), _fracs(d), _fracs(alpha)
    if bx is not None and dx is not None and ax is not None:
        w = [Fraction(1)]
        for k in range(len(bx)):
            w.append(w[-1] * bx[k] / dx[k])
        exact = sum(wk * ak for wk, ak in zip(w, ax)) / sum(w)
    constants = {"partition": partition, "b": b, "d": d, "nu": nu, "alpha": alpha, name: vals, "criterion": value}
    if _positive(exact, value):
        constants.update(_spectral(bd.generator(), alpha))
    else:
        constants.update(dict(_NO_SPECTRAL))
    return _finish(f"{kind}-birthdeath", value, exact, constants, assumptions, _stability_note(spec, vals))


def _failed(theorem: str, err: Exception) -> Certificate:
    return Certificate(theorem=theorem, value=None, verdict=False, constants={}, assumptions={}, notes=(str(err),))


def certify_all(spec: SwitchingSpec, partition: Sequence[Sequence[int]] | None = None) -> list[Certificate]:
    """Every criterion in a fixed order; inapplicable ones come back as failed certificates with a note."""
    curv = curvatures(spec)
    out = []
    for kind in ("W", "TV"):
        for theorem, fn in (
            ("constant", lambda k: check_average_criterion(spec, curv, k)),
            ("onoff", lambda k: check_onoff(spec, curv, k)),
            ("birthdeath", lambda k: check_birth_death(spec, curv, partition, k)),
        ):
            try:
                out.append(fn(kind))
            except (CriterionError, AdjacencyError) as err:
                out.append(_failed(f"{kind}-{theorem}", err))
    return out
