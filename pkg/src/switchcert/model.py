"""Problem description for Markov processes with random switching.

A :class:`SwitchingSpec` bundles a finite regime set, the continuous dynamics
attached to each regime, a parametric model for the state-dependent switching
rates ``a(x, i, j)`` and the quadratic-form metric used for every regime.

The two rate families are deliberately small so that the rate bounds
(``a_bar``, the Lipschitz constant ``kappa`` and the infimum matrix
``a_lower``) have closed forms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import jsonschema
import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

__all__ = [
    "SpecError",
    "AffineFlow",
    "OrnsteinUhlenbeck",
    "ConstantRates",
    "SigmoidRates",
    "Metric",
    "SwitchingSpec",
    "ValidationReport",
    "validate_spec",
    "eval_rate",
    "spec_from_dict",
    "spec_to_dict",
    "load_spec",
    "dump_spec",
    "logistic",
]

_PD_TOL = 1e-12


class SpecError(ValueError):
    """Raised for malformed or inconsistent switching specifications."""


def _frozen(a: ArrayLike, ndim: int, name: str) -> NDArray[np.float64]:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise SpecError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SpecError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


def logistic(z):
    """Standard logistic function."""
    return expit(np.asarray(z, dtype=np.float64))


# ---------------------------------------------------------------------------
# Regime dynamics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AffineFlow:
    """Deterministic flow ``x' = A x + c``."""

    A: NDArray[np.float64]
    c: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A, 2, "A"))
        object.__setattr__(self, "c", _frozen(self.c, 1, "c"))
        d = self.c.shape[0]
        if self.A.shape != (d, d):
            raise SpecError(f"A has shape {self.A.shape}, expected {(d, d)}")

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def kind(self) -> str:
        return "affine"


@dataclass(frozen=True, eq=False)
class OrnsteinUhlenbeck:
    """Diffusion ``dX = (A X + c) dt + sigma dW`` with ``W`` an m-dimensional Brownian motion."""

    A: NDArray[np.float64]
    c: NDArray[np.float64]
    sigma: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A, 2, "A"))
        object.__setattr__(self, "c", _frozen(self.c, 1, "c"))
        object.__setattr__(self, "sigma", _frozen(self.sigma, 2, "sigma"))
        d = self.c.shape[0]
        if self.A.shape != (d, d):
            raise SpecError(f"A has shape {self.A.shape}, expected {(d, d)}")
        if self.sigma.shape[0] != d:
            raise SpecError(f"sigma must have {d} rows, got shape {self.sigma.shape}")

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def kind(self) -> str:
        return "ou"


RegimeDynamics = Union[AffineFlow, OrnsteinUhlenbeck]


# ---------------------------------------------------------------------------
# Rate models
# ---------------------------------------------------------------------------


def _check_rate_matrix(m: NDArray[np.float64], name: str) -> None:
    if m.shape[0] != m.shape[1]:
        raise SpecError(f"{name} must be square, got {m.shape}")
    if np.any(m < 0):
        raise SpecError(f"{name} has negative entries")
    if np.any(np.diag(m) != 0):
        raise SpecError(f"{name} must have a zero diagonal (self-jumps are forbidden)")


@dataclass(frozen=True, eq=False)
class ConstantRates:
    """State-independent jump rates ``a(x, i, j) = c[i, j]``."""

    c: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen(self.c, 2, "rates.c"))
        _check_rate_matrix(self.c, "rates.c")

    @property
    def n_regimes(self) -> int:
        return self.c.shape[0]

    @property
    def kind(self) -> str:
        return "constant"

    def is_constant(self) -> bool:
        return True

    def rates(self, x: NDArray[np.float64], i: NDArray[np.int64]) -> NDArray[np.float64]:
        """Rows ``a(x_k, i_k, .)`` for a batch; ``x`` has shape (n, d), ``i`` shape (n,)."""
        return self.c[np.asarray(i)]

    def _z_range(self) -> tuple[float, float]:
        return 0.0, 0.0

    def sum_range(self, i: int, targets: Sequence[int]) -> tuple[float, float]:
        """(inf_x, sup_x) of ``sum_{j in targets} a(x, i, j)``."""
        s = float(self.c[i, list(targets)].sum()) if len(targets) else 0.0
        return s, s

    def lower(self) -> NDArray[np.float64]:
        return np.array(self.c)

    def lipschitz(self, metric: "Metric") -> float:
        return 0.0


@dataclass(frozen=True, eq=False)
class SigmoidRates:
    """Logistic modulation ``a(x, i, j) = base[i, j] + amplitude[i, j] * s(<w, x> + b)``.

    All pairs share the direction ``w`` and offset ``b``, so every row sum is
    a monotone function of the single scalar ``<w, x> + b``.
    """

    base: NDArray[np.float64]
    amplitude: NDArray[np.float64]
    w: NDArray[np.float64]
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "base", _frozen(self.base, 2, "rates.base"))
        object.__setattr__(self, "amplitude", _frozen(self.amplitude, 2, "rates.amplitude"))
        object.__setattr__(self, "w", _frozen(self.w, 1, "rates.w"))
        b = float(self.b)
        if not np.isfinite(b):
            raise SpecError("rates.b must be finite")
        object.__setattr__(self, "b", b)
        _check_rate_matrix(self.base, "rates.base")
        _check_rate_matrix(self.amplitude, "rates.amplitude")
        if self.base.shape != self.amplitude.shape:
            raise SpecError("rates.base and rates.amplitude must have the same shape")

    @property
    def n_regimes(self) -> int:
        return self.base.shape[0]

    @property
    def kind(self) -> str:
        return "sigmoid"

    def is_constant(self) -> bool:
        return bool(np.all(self.amplitude == 0) or np.all(self.w == 0))

    def rates(self, x: NDArray[np.float64], i: NDArray[np.int64]) -> NDArray[np.float64]:
        i = np.asarray(i)
        s = logistic(np.asarray(x, dtype=np.float64) @ self.w + self.b)
        return self.base[i] + self.amplitude[i] * s[:, None]

    def _z_range(self) -> tuple[float, float]:
        # range of the logistic factor over x in R^d (open interval when w != 0)
        if np.all(self.w == 0):
            s = float(logistic(self.b))
            return s, s
        return 0.0, 1.0

    def sum_range(self, i: int, targets: Sequence[int]) -> tuple[float, float]:
        if not len(targets):
            return 0.0, 0.0
        t = list(targets)
        lo, hi = self._z_range()
        c = float(self.base[i, t].sum())
        m = float(self.amplitude[i, t].sum())
        return c + m * lo, c + m * hi

    def lower(self) -> NDArray[np.float64]:
        lo, _ = self._z_range()
        return self.base + self.amplitude * lo

    def lipschitz(self, metric: "Metric") -> float:
        # s is 1/4-Lipschitz and |<w, x - y>| <= ||w||_* d(x, y)
        if self.is_constant():
            return 0.0
        return 0.25 * metric.dual_norm(self.w) * float(self.amplitude.sum(axis=1).max())


RateModel = Union[ConstantRates, SigmoidRates]


# ---------------------------------------------------------------------------
# Metric
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Metric:
    """Quadratic-form distance ``d(x, y) = sqrt((x - y)^T M (x - y))``.

    ``q`` is the exponent of the truncated cost ``1 ∧ d^q`` and ``x0`` the
    reference point used by Lyapunov functions ``V(x) = d(x, x0)``.
    """

    M: NDArray[np.float64]
    q: float = 1.0
    x0: NDArray[np.float64] | None = None
    trunc: bool = True

    def __post_init__(self):
        M = _frozen(self.M, 2, "metric.M")
        if M.shape[0] != M.shape[1]:
            raise SpecError(f"metric.M must be square, got {M.shape}")
        if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise SpecError("metric.M must be symmetric")
        M = (M + M.T) / 2
        M.flags.writeable = False
        eig = np.linalg.eigvalsh(M)
        if eig[0] <= _PD_TOL * max(1.0, eig[-1]):
            raise SpecError(f"metric.M is not positive-definite (smallest eigenvalue {eig[0]:.3g})")
        object.__setattr__(self, "M", M)
        q = float(self.q)
        if not (0.0 < q <= 1.0):
            raise SpecError(f"metric.q must lie in (0, 1], got {q}")
        object.__setattr__(self, "q", q)
        x0 = np.zeros(M.shape[0]) if self.x0 is None else self.x0
        x0 = _frozen(x0, 1, "metric.x0")
        if x0.shape[0] != M.shape[0]:
            raise SpecError("metric.x0 has the wrong dimension")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "trunc", bool(self.trunc))

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def dist(self, x, y) -> NDArray[np.float64]:
        """Distance between (batches of) points; broadcasts over leading axes."""
        diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
        sq = np.einsum("...i,ij,...j->...", diff, self.M, diff)
        return np.sqrt(np.maximum(sq, 0.0))

    def norm(self, x) -> NDArray[np.float64]:
        return self.dist(x, np.zeros(self.dim))

    def dual_norm(self, w) -> float:
        w = np.asarray(w, dtype=np.float64)
        return float(np.sqrt(w @ np.linalg.solve(self.M, w)))


# ---------------------------------------------------------------------------
# Full specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SwitchingSpec:
    dim: int
    regimes: tuple
    rates: RateModel
    metric: Metric
    rho: NDArray[np.float64] | None = None
    partition: tuple | None = None
    lyapunov_rates: NDArray[np.float64] | None = None
    labels: tuple | None = None
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(self.regimes))
        dim = int(self.dim)
        object.__setattr__(self, "dim", dim)
        n = len(self.regimes)
        if n < 1:
            raise SpecError("at least one regime is required")
        for k, reg in enumerate(self.regimes):
            if not isinstance(reg, (AffineFlow, OrnsteinUhlenbeck)):
                raise SpecError(f"regime {k} has unsupported type {type(reg).__name__}")
            if reg.dim != dim:
                raise SpecError(f"regime {k} has dimension {reg.dim}, expected {dim}")
        if self.rates.n_regimes != n:
            raise SpecError(f"rate model covers {self.rates.n_regimes} regimes, spec has {n}")
        if isinstance(self.rates, SigmoidRates) and self.rates.w.shape[0] != dim:
            raise SpecError("rates.w has the wrong dimension")
        if self.metric.dim != dim:
            raise SpecError(f"metric has dimension {self.metric.dim}, expected {dim}")
        for attr in ("rho", "lyapunov_rates"):
            val = getattr(self, attr)
            if val is not None:
                arr = _frozen(val, 1, attr)
                if arr.shape[0] != n:
                    raise SpecError(f"{attr} must have one entry per regime")
                object.__setattr__(self, attr, arr)
        if self.partition is not None:
            blocks = tuple(tuple(int(i) for i in blk) for blk in self.partition)
            flat = [i for blk in blocks for i in blk]
            if any(len(blk) == 0 for blk in blocks):
                raise SpecError("partition blocks must be non-empty")
            if sorted(flat) != list(range(n)):
                raise SpecError("partition blocks must be disjoint and cover every regime")
            object.__setattr__(self, "partition", blocks)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != n:
                raise SpecError("labels must have one entry per regime")
            object.__setattr__(self, "labels", labels)

    @property
    def n_regimes(self) -> int:
        return len(self.regimes)

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else str(i)

    def all_affine(self) -> bool:
        return all(isinstance(r, AffineFlow) for r in self.regimes)

    def rate_bound(self) -> float:
        """``a_bar = sup_x max_i sum_j a(x, i, j)``."""
        F = range(self.n_regimes)
        return max(self.rates.sum_range(i, [j for j in F if j != i])[1] for i in F)

    def replace(self, **changes) -> "SwitchingSpec":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return SwitchingSpec(**kw)


@dataclass(frozen=True, eq=False)
class ValidationReport:
    a_bar: float
    kappa: float
    a_lower: NDArray[np.float64]
    irreducible: bool
    components: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "a_bar": self.a_bar,
            "kappa": self.kappa,
            "a_lower": self.a_lower.tolist(),
            "irreducible": self.irreducible,
            "components": [list(c) for c in self.components],
        }


def validate_spec(spec: SwitchingSpec | Mapping[str, Any]) -> ValidationReport:
    """Check a specification and compute the rate bounds.

    Accepts either a constructed spec or its JSON mapping.  Raises
    :class:`SpecError` on dimension mismatches, a metric that is not
    positive-definite, ``q`` outside (0, 1] and negative or non-finite rates.
    """
    from switchcert.chain import irreducibility

    if not isinstance(spec, SwitchingSpec):
        spec = spec_from_dict(spec)
    a_lower = spec.rates.lower()
    ok, comps = irreducibility(a_lower)
    return ValidationReport(
        a_bar=spec.rate_bound(),
        kappa=spec.rates.lipschitz(spec.metric),
        a_lower=a_lower,
        irreducible=ok,
        components=comps,
    )


def eval_rate(spec: SwitchingSpec, x: ArrayLike, i: int, j: int) -> float:
    """Jump rate ``a(x, i, j)`` for a single state."""
    if i == j:
        raise ValueError("self-jump rate requested (i == j)")
    n = spec.n_regimes
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"regime index out of range for {n} regimes")
    x = np.asarray(x, dtype=np.float64).reshape(1, spec.dim)
    return float(spec.rates.rates(x, np.array([i]))[0, j])


# ---------------------------------------------------------------------------
# JSON round-trip
# ---------------------------------------------------------------------------


def _schema() -> dict:
    text = resources.files("switchcert.data").joinpath("switching_spec.schema.json").read_text()
    return json.loads(text)


def spec_from_dict(doc: Mapping[str, Any]) -> SwitchingSpec:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        raise SpecError(f"spec document does not match the schema: {exc.message}") from None
    regimes = []
    for reg in doc["regimes"]:
        if reg["type"] == "affine":
            regimes.append(AffineFlow(reg["A"], reg["c"]))
        else:
            regimes.append(OrnsteinUhlenbeck(reg["A"], reg["c"], reg["sigma"]))
    r = doc["rates"]
    if r["type"] == "constant":
        rates = ConstantRates(r["c"])
    else:
        rates = SigmoidRates(r["base"], r["amplitude"], r["w"], r.get("b", 0.0))
    m = doc["metric"]
    metric = Metric(m["M"], m.get("q", 1.0), m.get("x0"), m.get("trunc", True))
    return SwitchingSpec(
        dim=doc["dim"],
        regimes=regimes,
        rates=rates,
        metric=metric,
        rho=doc.get("rho"),
        partition=doc.get("partition"),
        lyapunov_rates=doc.get("lyapunov_rates"),
        labels=doc.get("labels"),
        name=doc.get("name"),
    )


def spec_to_dict(spec: SwitchingSpec) -> dict:
    regimes = []
    for reg in spec.regimes:
        d = {"type": reg.kind, "A": reg.A.tolist(), "c": reg.c.tolist()}
        if isinstance(reg, OrnsteinUhlenbeck):
            d["sigma"] = reg.sigma.tolist()
        regimes.append(d)
    if isinstance(spec.rates, ConstantRates):
        rates = {"type": "constant", "c": spec.rates.c.tolist()}
    else:
        rates = {
            "type": "sigmoid",
            "base": spec.rates.base.tolist(),
            "amplitude": spec.rates.amplitude.tolist(),
            "w": spec.rates.w.tolist(),
            "b": spec.rates.b,
        }
    doc: dict[str, Any] = {}
    if spec.name is not None:
        doc["name"] = spec.name
    doc["dim"] = spec.dim
    if spec.labels is not None:
        doc["labels"] = list(spec.labels)
    doc["regimes"] = regimes
    doc["rates"] = rates
    doc["metric"] = {
        "M": spec.metric.M.tolist(),
        "q": spec.metric.q,
        "x0": spec.metric.x0.tolist(),
        "trunc": spec.metric.trunc,
    }
    if spec.rho is not None:
        doc["rho"] = spec.rho.tolist()
    if spec.lyapunov_rates is not None:
        doc["lyapunov_rates"] = spec.lyapunov_rates.tolist()
    if spec.partition is not None:
        doc["partition"] = [list(b) for b in spec.partition]
    return doc


def load_spec(path: str | Path) -> SwitchingSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from None
    return spec_from_dict(doc)


def dump_spec(spec: SwitchingSpec, path: str | Path | None = None) -> str:
    text = json.dumps(spec_to_dict(spec), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
