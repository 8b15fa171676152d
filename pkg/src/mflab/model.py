"""State spaces, N-object model families and their deterministic limits.

Two model kinds are supported:

* :class:`CtModel` -- a density-dependent jump process. With ``N`` objects,
  jump ``k`` fires at total rate ``N * rate_k(y)`` and moves the state by
  ``l_k / N``. Its limit is the ODE ``dy/dt = sum_k rate_k(y) * l_k``.
* :class:`DtModel` -- a synchronous occupancy chain on the probability simplex.
  Each object in state ``i`` moves to ``j`` with probability ``K_ij(m)``; the
  limit is the map ``g(m)_j = sum_i m_i K_ij(m)``.
"""
from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .expr import RateExpr, compile_program, parse_rate_expression

__all__ = [
    "ModelError",
    "Domain",
    "GridPoint",
    "Jump",
    "CtModel",
    "DtModel",
    "ZooSpec",
    "ZOO",
    "ValidationReport",
    "drift",
    "limit_map",
    "make_zoo_model",
    "validate_model",
    "model_from_dict",
    "model_to_dict",
    "load_model",
    "save_model",
    "coerce_point",
]

SIMPLEX_TOL = 1e-12
ROW_SUM_TOL = 1e-9
RATE_TOL = 1e-12


class ModelError(ValueError):
    """Invalid model definition or a model used outside its contract."""


@dataclass(frozen=True)
class Domain:
    """Compact state space: an axis-aligned box or the probability simplex."""

    kind: str
    dim: int
    lo: tuple | None = None
    hi: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("box", "simplex"):
            raise ModelError(f"unknown domain kind {self.kind!r}")
        if self.dim < 1:
            raise ModelError("domain dimension must be positive")
        if self.kind == "box":
            if self.lo is None or self.hi is None:
                raise ModelError("box domain needs lo and hi")
            lo = tuple(float(v) for v in self.lo)
            hi = tuple(float(v) for v in self.hi)
            if len(lo) != self.dim or len(hi) != self.dim:
                raise ModelError("lo/hi length must equal dim")
            if any(a >= b for a, b in zip(lo, hi)):
                raise ModelError("box needs lo < hi in every coordinate")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        else:
            object.__setattr__(self, "lo", None)
            object.__setattr__(self, "hi", None)

    @classmethod
    def box(cls, lo, hi) -> "Domain":
        lo = tuple(np.atleast_1d(np.asarray(lo, dtype=float)))
        hi = tuple(np.atleast_1d(np.asarray(hi, dtype=float)))
        return cls("box", len(lo), lo, hi)

    @classmethod
    def simplex(cls, dim: int) -> "Domain":
        return cls("simplex", dim)

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo) if self.kind == "box" else np.zeros(self.dim)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi) if self.kind == "box" else np.ones(self.dim)

    def contains(self, y, tol: float = SIMPLEX_TOL) -> bool:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,) or not np.all(np.isfinite(y)):
            return False
        if self.kind == "box":
            return bool(np.all(y >= self.lo_array - tol) and np.all(y <= self.hi_array + tol))
        return bool(np.all(y >= -tol) and abs(y.sum() - 1.0) <= tol)

    @property
    def centroid(self) -> np.ndarray:
        if self.kind == "box":
            return 0.5 * (self.lo_array + self.hi_array)
        return np.full(self.dim, 1.0 / self.dim)

    @property
    def diameter(self) -> float:
        if self.kind == "box":
            return float(np.linalg.norm(self.hi_array - self.lo_array))
        return math.sqrt(2.0) if self.dim > 1 else 0.0

    def boundary_distance(self, y) -> float:
        """Euclidean distance from an interior point to the boundary (relative boundary on the simplex)."""
        y = np.asarray(y, dtype=float)
        if self.kind == "box":
            return float(min(np.min(y - self.lo_array), np.min(self.hi_array - y)))
        # distance to the face {y_i = 0} within the affine hull
        d = self.dim
        return float(np.min(y) * math.sqrt(d / (d - 1))) if d > 1 else math.inf

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "box":
            return rng.uniform(self.lo_array, self.hi_array, size=(n, self.dim))
        return rng.dirichlet(np.ones(self.dim), size=n)

    def project(self, y, tol: float) -> np.ndarray | None:
        """Snap a point within ``tol`` of the domain back onto it; ``None`` if farther."""
        y = np.asarray(y, dtype=float)
        if self.kind == "box":
            lo, hi = self.lo_array, self.hi_array
            if np.any(y < lo - tol) or np.any(y > hi + tol):
                return None
            return np.clip(y, lo, hi)
        if np.any(y < -tol) or abs(y.sum() - 1.0) > tol:
            return None
        y = np.clip(y, 0.0, None)
        return y / y.sum()

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "box":
            out["lo"] = list(self.lo)
            out["hi"] = list(self.hi)
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "Domain":
        if d["kind"] == "box":
            return cls("box", int(d["dim"]), tuple(d["lo"]), tuple(d["hi"]))
        return cls("simplex", int(d["dim"]))

    def grid_extent(self, N: int) -> np.ndarray:
        """Largest admissible lattice coordinate per axis (box) or ``N`` (simplex)."""
        if self.kind == "box":
            return np.floor((self.hi_array - self.lo_array) * N + 1e-9).astype(np.int64)
        return np.full(self.dim, N, dtype=np.int64)


@dataclass(frozen=True)
class GridPoint:
    """A point of the lattice ``E^N``: ``lo + k/N`` (box) or ``k/N`` with ``sum k = N`` (simplex)."""

    domain: Domain
    N: int
    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    @property
    def y(self) -> np.ndarray:
        return embed(self.domain, self.N, np.asarray(self.coords))

    def is_valid(self) -> bool:
        k = np.asarray(self.coords)
        if k.shape != (self.domain.dim,) or np.any(k < 0):
            return False
        if self.domain.kind == "box":
            return bool(np.all(k <= self.domain.grid_extent(self.N)))
        return int(k.sum()) == self.N


def embed(domain: Domain, N: int, k) -> np.ndarray:
    """Real embedding of lattice coordinates (works row-wise on 2-D arrays)."""
    k = np.asarray(k, dtype=float)
    if domain.kind == "box":
        return domain.lo_array + k / N
    return k / N


@dataclass(frozen=True)
class Jump:
    l: tuple
    rate: RateExpr


@dataclass(frozen=True, eq=False)
class CtModel:
    """Continuous-time density-dependent jump model."""

    domain: Domain
    jumps: tuple
    name: str = "custom"
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        jumps = tuple(self.jumps)
        if not jumps:
            raise ModelError("a CtModel needs at least one jump")
        for j in jumps:
            if len(j.l) != self.domain.dim:
                raise ModelError(f"jump vector {j.l} does not match dimension {self.domain.dim}")
            if j.rate.max_var >= self.domain.dim:
                raise ModelError(f"rate {j.rate} uses a variable outside dimension {self.domain.dim}")
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "params", dict(self.params))

    kind = "ct"

    @cached_property
    def jump_matrix(self) -> np.ndarray:
        return np.array([j.l for j in self.jumps], dtype=np.int64)

    @cached_property
    def program(self):
        return compile_program([j.rate for j in self.jumps])

    def rates(self, y) -> np.ndarray:
        return np.array([j.rate(y) for j in self.jumps])

    def rates_many(self, Y) -> np.ndarray:
        """``(n, K)`` array of raw rates at the rows of ``Y``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return np.column_stack([j.rate.evaluate_many(Y) for j in self.jumps])


@dataclass(frozen=True, eq=False)
class DtModel:
    """Discrete-time synchronous occupancy chain on the simplex."""

    domain: Domain
    kernel: tuple
    name: str = "custom"
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.domain.kind != "simplex":
            raise ModelError("a DtModel lives on the simplex")
        d = self.domain.dim
        kernel = tuple(tuple(row) for row in self.kernel)
        if len(kernel) != d or any(len(row) != d for row in kernel):
            raise ModelError(f"kernel must be {d}x{d}")
        for row in kernel:
            for e in row:
                if e.max_var >= d:
                    raise ModelError(f"kernel entry {e} uses a variable outside dimension {d}")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "params", dict(self.params))

    kind = "dt"

    def kernel_at(self, m) -> np.ndarray:
        return np.array([[e(m) for e in row] for row in self.kernel])

    def kernel_many(self, M) -> np.ndarray:
        """``(n, d, d)`` kernels at the rows of ``M``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        d = self.domain.dim
        out = np.empty((M.shape[0], d, d))
        for i in range(d):
            for j in range(d):
                out[:, i, j] = self.kernel[i][j].evaluate_many(M)
        return out


def drift(model: CtModel, y) -> np.ndarray:
    """Mean-field vector field ``F(y) = sum_k rate_k(y) * l_k``."""
    return drift_many(model, np.asarray(y, dtype=float)[None, :])[0]


def drift_many(model: CtModel, Y) -> np.ndarray:
    R = model.rates_many(Y)
    L = model.jump_matrix.astype(float)
    F = np.zeros((R.shape[0], L.shape[1]))
    # fixed summation order over jumps
    for k in range(L.shape[0]):
        F = F + R[:, k : k + 1] * L[k]
    return F


def limit_map(model: DtModel, m) -> np.ndarray:
    """Deterministic limit ``g(m)_j = sum_i m_i K_ij(m)``, renormalized onto the simplex."""
    return limit_map_many(model, np.asarray(m, dtype=float)[None, :])[0]


def limit_map_many(model: DtModel, M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    K = model.kernel_many(M)
    dev = np.abs(K.sum(axis=2) - 1.0)
    if np.any(dev > ROW_SUM_TOL):
        raise ModelError(f"kernel of {model.name!r} is not row-stochastic (row-sum deviation {dev.max():.3g})")
    G = np.einsum("ni,nij->nj", M, K)
    return G / G.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# model zoo


@dataclass(frozen=True)
class ZooSpec:
    name: str
    params: Mapping = field(default_factory=dict)


def _num(v: float) -> str:
    v = float(v)
    return repr(v) if v >= 0 else f"(0 - {-v!r})"


ZOO = {
    "sis": {
        "kind": "ct",
        "doc": "SIS epidemic on [0,1]: infection beta*x(1-x) + lambda0*(1-x), recovery gamma*x",
        "params": {"beta": 2.0, "gamma": 1.0, "lambda0": 0.01},
        "ranges": {"beta": (0.0, 100.0), "gamma": (1e-9, 100.0), "lambda0": (0.0, 100.0)},
    },
    "sirs": {
        "kind": "ct",
        "doc": "SIRS epidemic on the 3-simplex (S, I, R) with external infection floor lambda0",
        "params": {"beta": 2.0, "gamma": 1.0, "alpha": 0.5, "lambda0": 0.01},
        "ranges": {"beta": (0.0, 100.0), "gamma": (1e-9, 100.0), "alpha": (1e-9, 100.0), "lambda0": (0.0, 100.0)},
    },
    "hopf": {
        "kind": "ct",
        "doc": "Hopf normal form on [-2,2]^2, limit cycle of radius sqrt(mu) and period 2*pi/omega; eta is a rate floor",
        "params": {"mu": 0.25, "omega": 1.0, "eta": 0.05},
        "ranges": {"mu": (1e-9, 1.0), "omega": (1e-9, 100.0), "eta": (0.0, 10.0)},
    },
    "logistic": {
        "kind": "dt",
        "doc": "two-state occupancy chain whose limit is the logistic map clamped to [eps, 1-eps]",
        "params": {"r": 2.5, "eps": 1e-3},
        "ranges": {"r": (1e-9, 4.0), "eps": (1e-12, 0.1 - 1e-12)},
    },
}

_ALIASES = {"β": "beta", "γ": "gamma", "λ0": "lambda0", "α": "alpha", "μ": "mu", "ω": "omega", "η": "eta", "ε": "eps"}


def make_zoo_model(spec: ZooSpec | str, **params) -> CtModel | DtModel:
    """Build a zoo model; unspecified parameters take their defaults.

    >>> make_zoo_model("sis", beta=2, gamma=1, lambda0=0).name
    'sis'
    """
    if isinstance(spec, ZooSpec):
        name, given = spec.name, {**spec.params, **params}
    else:
        name, given = spec, params
    if name not in ZOO:
        raise ModelError(f"unknown zoo model {name!r}; choose from {sorted(ZOO)}")
    entry = ZOO[name]
    p = dict(entry["params"])
    for key, val in given.items():
        key = _ALIASES.get(key, key)
        if key not in p:
            raise ModelError(f"{name} has no parameter {key!r}")
        p[key] = float(val)
    for key, (lo, hi) in entry["ranges"].items():
        if not lo <= p[key] <= hi:
            raise ModelError(f"{name}: {key}={p[key]} outside [{lo}, {hi}]")
    return _ZOO_BUILDERS[name](p)


def _sis(p):
    b, g, l0 = _num(p["beta"]), _num(p["gamma"]), _num(p["lambda0"])
    dom = Domain.box([0.0], [1.0])
    jumps = [
        Jump((1,), parse_rate_expression(f"max0({b}*x0*(1 - x0) + {l0}*(1 - x0))", 1)),
        Jump((-1,), parse_rate_expression(f"{g}*x0", 1)),
    ]
    return CtModel(dom, jumps, "sis", p)


def _sirs(p):
    b, g, a, l0 = (_num(p[k]) for k in ("beta", "gamma", "alpha", "lambda0"))
    dom = Domain.simplex(3)
    jumps = [
        Jump((-1, 1, 0), parse_rate_expression(f"{b}*x0*x1 + {l0}*x0", 3)),
        Jump((0, -1, 1), parse_rate_expression(f"{g}*x1", 3)),
        Jump((1, 0, -1), parse_rate_expression(f"{a}*x2", 3)),
    ]
    return CtModel(dom, jumps, "sirs", p)


def _hopf(p):
    mu, w, eta = _num(p["mu"]), _num(p["omega"]), _num(p["eta"])
    f1 = f"{mu}*x0 - {w}*x1 - x0*(x0^2 + x1^2)"
    f2 = f"{w}*x0 + {mu}*x1 - x1*(x0^2 + x1^2)"
    dom = Domain.box([-2.0, -2.0], [2.0, 2.0])
    jumps = [
        Jump((1, 0), parse_rate_expression(f"max0({f1}) + {eta}", 2)),
        Jump((-1, 0), parse_rate_expression(f"max0(0 - ({f1})) + {eta}", 2)),
        Jump((0, 1), parse_rate_expression(f"max0({f2}) + {eta}", 2)),
        Jump((0, -1), parse_rate_expression(f"max0(0 - ({f2})) + {eta}", 2)),
    ]
    return CtModel(dom, jumps, "hopf", p)


def _logistic(p):
    r, eps = p["r"], p["eps"]
    q = f"{_num(r)}*x1*(1 - x1)"
    up = f"{_num(eps)} + max0({q} - {_num(eps)}) - max0({q} - {_num(1.0 - eps)})"
    down = f"1 - ({up})"
    row = (parse_rate_expression(down, 2), parse_rate_expression(up, 2))
    return DtModel(Domain.simplex(2), (row, row), "logistic", p)


_ZOO_BUILDERS = {"sis": _sis, "sirs": _sirs, "hopf": _hopf, "logistic": _logistic}


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    passed: bool
    n_samples: int
    min_rate: float | None = None
    max_row_deviation: float | None = None
    min_kernel_entry: float | None = None
    mass_conserving: bool | None = None
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _vertices(domain: Domain) -> np.ndarray:
    if domain.kind == "simplex":
        return np.eye(domain.dim)
    corners = itertools.product(*zip(domain.lo_array, domain.hi_array))
    return np.array(list(corners), dtype=float)


def validate_model(model: CtModel | DtModel, n_samples: int = 1000, seed: int = 0) -> ValidationReport:
    """Audit rate nonnegativity, kernel stochasticity and mass conservation on random points.

    Failures are reported in the returned object, never raised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    pts = model.domain.sample_uniform(n_samples, rng)
    pts = np.vstack([pts, model.domain.centroid, _vertices(model.domain)])
    rep = ValidationReport(passed=True, n_samples=n_samples)
    if isinstance(model, CtModel):
        rep.min_rate = float(model.rates_many(pts).min())
        if rep.min_rate < -RATE_TOL:
            rep.failures.append(f"negative rate: min {rep.min_rate:.3g}")
        if model.domain.kind == "simplex":
            sums = model.jump_matrix.sum(axis=1)
            rep.mass_conserving = bool(np.all(sums == 0))
            if not rep.mass_conserving:
                bad = [tuple(j.l) for j, s in zip(model.jumps, sums) if s != 0]
                rep.failures.append(f"mass conservation: jumps {bad} do not sum to zero")
    else:
        K = model.kernel_many(pts)
        rep.min_kernel_entry = float(K.min())
        rep.max_row_deviation = float(np.abs(K.sum(axis=2) - 1.0).max())
        if rep.min_kernel_entry < -RATE_TOL:
            rep.failures.append(f"negative kernel entry: min {rep.min_kernel_entry:.3g}")
        if rep.max_row_deviation > ROW_SUM_TOL:
            rep.failures.append(f"row-stochasticity: max row-sum deviation {rep.max_row_deviation:.3g}")
    rep.passed = not rep.failures
    return rep


# ---------------------------------------------------------------------------
# JSON model files


def model_to_dict(model: CtModel | DtModel) -> dict:
    out = {"name": model.name, "kind": model.kind, "domain": model.domain.to_dict()}
    if isinstance(model, CtModel):
        out["jumps"] = [{"l": list(j.l), "rate": j.rate.text} for j in model.jumps]
    else:
        out["kernel"] = [[e.text for e in row] for row in model.kernel]
    out["params"] = dict(model.params)
    return out


def model_from_dict(d: Mapping, params: Mapping | None = None) -> CtModel | DtModel:
    """Build a model from its JSON form.

    A dict without ``kind`` but with a zoo ``name`` is a zoo reference; ``params``
    from the file take precedence over the ``params`` argument.
    """
    if "kind" not in d:
        merged = {**(params or {}), **d.get("params", {})}
        return make_zoo_model(d["name"], **merged)
    domain = Domain.from_dict(d["domain"])
    name = d.get("name", "custom")
    if d["kind"] == "ct":
        jumps = [Jump(tuple(int(v) for v in j["l"]), parse_rate_expression(j["rate"], domain.dim)) for j in d["jumps"]]
        return CtModel(domain, jumps, name, d.get("params", {}))
    if d["kind"] == "dt":
        kernel = [[parse_rate_expression(t, domain.dim) for t in row] for row in d["kernel"]]
        return DtModel(domain, kernel, name, d.get("params", {}))
    raise ModelError(f"unknown model kind {d['kind']!r}")


def load_model(path: str | os.PathLike, params: Mapping | None = None) -> CtModel | DtModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh), params)


def save_model(model: CtModel | DtModel, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def coerce_point(domain: Domain, y: float | Sequence[float]) -> np.ndarray:
    """Accept a full point, or on the simplex the trailing ``d - 1`` coordinates.

    ``coerce_point(Domain.simplex(2), 0.2)`` gives ``(0.8, 0.2)``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if domain.kind == "simplex" and y.shape == (domain.dim - 1,):
        y = np.concatenate([[1.0 - y.sum()], y])
    if y.shape != (domain.dim,):
        raise ModelError(f"point of shape {y.shape} does not fit a {domain.kind} of dimension {domain.dim}")
    return y
