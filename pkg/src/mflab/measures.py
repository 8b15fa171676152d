"""Finitely supported probability measures, Wasserstein-1 and invariance functionals."""
from __future__ import annotations

import csv
import itertools
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .model import Domain
from .ode import DEFAULT_FLOW, FlowConfig, LimitSet, flow_many

__all__ = [
    "PointCloudMeasure",
    "TestFunction",
    "TestFunctionSet",
    "dirac",
    "cycle_measure",
    "pushforward",
    "systematic_resample",
    "w1",
    "w1_assignment",
    "w1_bruteforce",
    "invariance_residual",
    "test_function_gap",
    "support_distance",
    "write_cloud_csv",
    "read_cloud_csv",
]

W1_CAP = 2048
WEIGHT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PointCloudMeasure:
    """``sum_i weights[i] * delta(points[i])``."""

    points: np.ndarray
    weights: np.ndarray
    domain: Domain | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] < 1:
            raise ValueError("a measure needs at least one atom")
        if w.shape[0] != pts.shape[0]:
            raise ValueError("one weight per atom")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must be nonnegative and sum to 1 (sum {w.sum()!r})")
        if self.domain is not None:
            for p in pts:
                if not self.domain.contains(p, 1e-9):
                    raise ValueError(f"atom {p.tolist()} outside the domain")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points, domain: Domain | None = None) -> "PointCloudMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]), domain)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


def dirac(point, domain: Domain | None = None) -> PointCloudMeasure:
    return PointCloudMeasure(np.atleast_1d(np.asarray(point, dtype=float))[None, :], np.ones(1), domain)


def cycle_measure(limit_set: LimitSet) -> PointCloudMeasure:
    """Equal weights on the equal-time cycle samples (the time-average measure)."""
    if limit_set.kind != "cycle":
        raise ValueError(f"cycle_measure needs a cycle, got {limit_set.kind}")
    return PointCloudMeasure.uniform(limit_set.points)


def pushforward(mu: PointCloudMeasure, model, t: float, cfg: FlowConfig = DEFAULT_FLOW) -> PointCloudMeasure:
    """Image of ``mu`` under ``phi_t``; weights are kept."""
    return PointCloudMeasure(flow_many(model, mu.points, t, cfg), mu.weights, mu.domain)


# ---------------------------------------------------------------------------
# Wasserstein-1


def systematic_resample(mu: PointCloudMeasure, n: int, u0: float) -> np.ndarray:
    """Atoms of an ``n``-point equal-weight approximation of ``mu``; ``u0`` in [0, 1)."""
    cdf = np.cumsum(mu.weights)
    cdf[-1] = 1.0
    pos = (u0 + np.arange(n)) / n
    idx = np.searchsorted(cdf, pos, side="right")
    return mu.points[np.minimum(idx, mu.n - 1)]


def _w1_1d(x, wx, y, wy) -> float:
    grid = np.union1d(x, y)
    Fx = np.cumsum(np.bincount(np.searchsorted(grid, x), weights=wx, minlength=grid.size))
    Fy = np.cumsum(np.bincount(np.searchsorted(grid, y), weights=wy, minlength=grid.size))
    return float(np.sum(np.abs(Fx[:-1] - Fy[:-1]) * np.diff(grid)))


def _line_coordinates(X, Y, tol: float = 1e-12):
    """Arc-length coordinates when all atoms lie on one line (e.g. the 2-simplex), else None."""
    P = np.vstack([X, Y])
    D = P - P[0]
    far = int(np.argmax(np.einsum("ij,ij->i", D, D)))
    length = float(np.linalg.norm(D[far]))
    if length == 0.0:
        return np.zeros(P.shape[0])
    u = D[far] / length
    s = D @ u
    if np.max(np.linalg.norm(D - np.outer(s, u), axis=1)) > tol * max(1.0, length):
        return None
    return s


def _assignment_cost(X, Y) -> float:
    C = cdist(X, Y)
    r, c = linear_sum_assignment(C)
    return float(C[r, c].sum() / X.shape[0])


def w1_assignment(mu: PointCloudMeasure, nu: PointCloudMeasure) -> float:
    """W1 between two equal-weight clouds of the same size as an optimal assignment."""
    if mu.n != nu.n or not (mu.is_uniform and nu.is_uniform):
        raise ValueError("assignment needs two equal-weight clouds of the same size")
    return _assignment_cost(mu.points, nu.points)


def w1(mu: PointCloudMeasure, nu: PointCloudMeasure, resample_n: int = 512, seed: int = 0) -> float:
    """Wasserstein-1 distance under the Euclidean metric.

    In one dimension, or when every atom lies on a common line, the quantile
    coupling gives the exact value. Otherwise equal-weight clouds whose sizes
    have a common multiple within the cap are solved exactly by assignment; anything else is first reduced to
    ``resample_n`` equal-weight atoms by systematic resampling.
    """
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if not 1 <= resample_n <= W1_CAP:
        raise ValueError(f"resample_n must be in [1, {W1_CAP}]")
    if mu.n == 1 or nu.n == 1:
        one, other = (mu, nu) if mu.n == 1 else (nu, mu)
        return float(other.weights @ np.linalg.norm(other.points - one.points[0], axis=1))
    if mu.dim == 1:
        return _w1_1d(mu.points[:, 0], mu.weights, nu.points[:, 0], nu.weights)
    line = _line_coordinates(mu.points, nu.points)
    if line is not None:
        return _w1_1d(line[: mu.n], mu.weights, line[mu.n:], nu.weights)
    if mu.is_uniform and nu.is_uniform:
        L = math.lcm(mu.n, nu.n)
        if L <= W1_CAP:
            return _assignment_cost(np.repeat(mu.points, L // mu.n, axis=0), np.repeat(nu.points, L // nu.n, axis=0))
    u0 = np.random.default_rng(seed).random()
    return _assignment_cost(systematic_resample(mu, resample_n, u0), systematic_resample(nu, resample_n, u0))


def w1_bruteforce(mu: PointCloudMeasure, nu: PointCloudMeasure) -> float:
    """Minimum average matched distance over all permutations (equal-weight clouds, n <= 8)."""
    if mu.n != nu.n or mu.n > 8 or not (mu.is_uniform and nu.is_uniform):
        raise ValueError("brute force needs two equal-weight clouds of the same size n <= 8")
    C = cdist(mu.points, nu.points)
    idx = np.arange(mu.n)
    return float(min(C[idx, list(p)].sum() for p in itertools.permutations(range(mu.n))) / mu.n)


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    __test__ = False

    name: str
    kind: str  # coordinate | product | bump
    indices: tuple = ()
    center: tuple = ()
    scale: float = 1.0
    lipschitz: float = 1.0

    def __call__(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.kind == "coordinate":
            return Y[:, self.indices[0]].copy()
        if self.kind == "product":
            i, j = self.indices
            return Y[:, i] * Y[:, j]
        r2 = np.sum((Y - np.asarray(self.center)) ** 2, axis=1)
        return np.exp(-r2 / self.scale**2)

    def gradient(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        G = np.zeros_like(Y)
        if self.kind == "coordinate":
            G[:, self.indices[0]] = 1.0
        elif self.kind == "product":
            i, j = self.indices
            G[:, i] += Y[:, j]
            G[:, j] += Y[:, i]
        else:
            G = -2.0 * (Y - np.asarray(self.center)) / self.scale**2 * self(Y)[:, None]
        return G


class TestFunctionSet:
    """Finite family of bounded Lipschitz functions standing in for ``C_b(E)``.

    Coordinates ``x_i``, products ``x_i x_j`` (``i <= j``) and Gaussian bumps
    ``exp(-|x - c|^2 / s^2)`` centred on a ``3^min(d, 2)`` grid with
    ``s = diameter / 4``.
    """

    __test__ = False  # not a pytest class

    def __init__(self, functions):
        self.functions = tuple(functions)

    @classmethod
    def for_domain(cls, domain: Domain) -> "TestFunctionSet":
        d = domain.dim
        lo, hi = domain.lo_array, domain.hi_array
        mag = np.maximum(np.abs(lo), np.abs(hi))
        fns = [TestFunction(f"x{i}", "coordinate", (i,)) for i in range(d)]
        for i in range(d):
            for j in range(i, d):
                if i == j:
                    L = 2.0 * mag[i]
                elif domain.kind == "simplex":
                    L = 1.0  # x_i^2 + x_j^2 <= (x_i + x_j)^2 <= 1
                else:
                    L = math.hypot(mag[i], mag[j])
                fns.append(TestFunction(f"x{i}*x{j}", "product", (i, j), lipschitz=float(L)))
        s = (domain.diameter or 1.0) / 4.0
        axes = min(d, 2)
        base = domain.centroid
        for k, combo in enumerate(itertools.product((0.0, 0.5, 1.0), repeat=axes)):
            c = base.copy()
            for a, frac in enumerate(combo):
                c[a] = lo[a] + frac * (hi[a] - lo[a])
            fns.append(
                TestFunction(f"bump{k}", "bump", center=tuple(c), scale=s,
                             lipschitz=math.sqrt(2.0) / s * math.exp(-0.5))
            )
        return cls(fns)

    def subset(self, kinds) -> "TestFunctionSet":
        return TestFunctionSet(f for f in self.functions if f.kind in kinds)

    @property
    def names(self) -> list:
        return [f.name for f in self.functions]

    @property
    def lipschitz(self) -> np.ndarray:
        return np.array([f.lipschitz for f in self.functions])

    def evaluate(self, Y) -> np.ndarray:
        """``(n, H)`` matrix of every function at every row of ``Y``."""
        return np.column_stack([f(Y) for f in self.functions])

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)


# ---------------------------------------------------------------------------
# invariance functionals


def invariance_residual(mu: PointCloudMeasure, model, t: float, cfg: FlowConfig = DEFAULT_FLOW,
                        resample_n: int = 512, seed: int = 0) -> float:
    """``W1(phi_t # mu, mu)``: zero exactly when ``mu`` is invariant at time ``t``."""
    return w1(pushforward(mu, model, t, cfg), mu, resample_n, seed)


def test_function_gap(mu: PointCloudMeasure, model, t: float, h_set: TestFunctionSet,
                      cfg: FlowConfig = DEFAULT_FLOW) -> float:
    """``max_h |int h o phi_t dmu - int h dmu|`` over the test family."""
    moved = pushforward(mu, model, t, cfg)
    before = mu.weights @ h_set.evaluate(mu.points)
    after = mu.weights @ h_set.evaluate(moved.points)
    return float(np.max(np.abs(after - before)))


test_function_gap.__test__ = False


def support_distance(mu: PointCloudMeasure, point_set) -> tuple[float, float]:
    """Weighted mean and max distance from the atoms of ``mu`` to the nearest point of ``point_set``."""
    P = np.atleast_2d(np.asarray(point_set, dtype=float))
    if P.shape[0] == 0:
        raise ValueError("point_set is empty")
    dist, _ = cKDTree(P).query(mu.points)
    return float(mu.weights @ dist), float(dist.max())


# ---------------------------------------------------------------------------
# CSV clouds


def write_cloud_csv(mu: PointCloudMeasure, path: str | os.PathLike) -> None:
    """Write ``x0,...,x{d-1},weight`` rows; floats are written round-trip exact."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(mu.dim)] + ["weight"])
        for p, wt in zip(mu.points, mu.weights):
            w.writerow([repr(float(v)) for v in p] + [repr(float(wt))])


def read_cloud_csv(path: str | os.PathLike, domain: Domain | None = None) -> PointCloudMeasure:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[-1] != "weight" or header[:-1] != [f"x{i}" for i in range(len(header) - 1)]:
        raise ValueError(f"{path}: unexpected header {header}")
    data = np.array([[float(v) for v in r] for r in body])
    return PointCloudMeasure(data[:, :-1], data[:, -1], domain)
