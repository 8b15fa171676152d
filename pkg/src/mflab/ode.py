"""The deterministic limit: flow map, semi-flow diagnostics and limit-set detection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import CtModel, DtModel, drift_many, limit_map_many

__all__ = [
    "FlowConfig",
    "IntegrationError",
    "FixedPointError",
    "SingularJacobianError",
    "FixedPoint",
    "LimitSet",
    "RecurrentSet",
    "flow",
    "flow_many",
    "trajectory",
    "semiflow_defect",
    "find_fixed_point",
    "detect_limit_set",
    "recurrent_set_estimate",
    "hausdorff",
]


@dataclass(frozen=True)
class FlowConfig:
    """Fixed-step classical RK4 settings."""

    dt: float = 1e-3
    projection_tol: float = 1e-9

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")


DEFAULT_FLOW = FlowConfig()


class IntegrationError(RuntimeError):
    """A step left the domain by more than the projection tolerance."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class FixedPointError(RuntimeError):
    pass


class SingularJacobianError(FixedPointError):
    pass


def _split(t: float, dt: float) -> tuple[int, float]:
    q = t / dt
    n = round(q)
    if abs(q - n) <= 1e-9 * max(1.0, q):
        return int(n), 0.0
    n = int(math.floor(q))
    return n, t - n * dt


def _kind_code(model) -> int:
    return K.BOX if model.domain.kind == "box" else K.SIMPLEX


def _integrate(model: CtModel, Y: np.ndarray, t: float, cfg: FlowConfig, record=None) -> np.ndarray:
    n_full, last = _split(t, cfg.dt)
    prog = model.program
    common = (prog.ops, prog.args, prog.starts, prog.depth, model.jump_matrix.astype(np.float64),
              _kind_code(model), model.domain.lo_array, model.domain.hi_array, cfg.projection_tol)
    if record is None and Y.shape[0] > 1:
        status, row = K.rk4_flow_rows(Y, n_full, cfg.dt, last, *common)
    else:
        rec = record if record is not None else np.empty((0, model.domain.dim))
        status, row = K.rk4_flow(Y, n_full, cfg.dt, last, *common, rec)
    if status != K.OK:
        raise IntegrationError(
            f"{model.name}: integration left the domain beyond tolerance {cfg.projection_tol:g}; state {Y[row].tolist()}",
            Y[row].copy(),
        )
    return Y


def _map_steps(t) -> int:
    if t < 0 or float(t) != int(t):
        raise ValueError(f"map limits need a nonnegative integer time, got {t}")
    return int(t)


def flow_many(model: CtModel | DtModel, Y, t: float, cfg: FlowConfig = DEFAULT_FLOW) -> np.ndarray:
    """Apply ``phi_t`` to every row of ``Y``."""
    Y = np.array(np.atleast_2d(np.asarray(Y, dtype=float)), copy=True)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if isinstance(model, DtModel):
        for _ in range(_map_steps(t)):
            Y = limit_map_many(model, Y)
        return Y
    if t == 0:
        return Y
    return _integrate(model, Y, float(t), cfg)


def flow(model: CtModel | DtModel, y0, t: float, cfg: FlowConfig = DEFAULT_FLOW) -> np.ndarray:
    """``phi_t(y0)``: RK4 for drift limits, ``t``-fold composition for map limits.

    ``flow(model, y0, 0)`` returns ``y0`` unchanged.
    """
    return flow_many(model, np.asarray(y0, dtype=float)[None, :], t, cfg)[0]


def trajectory(model: CtModel | DtModel, y0, t: float, cfg: FlowConfig = DEFAULT_FLOW):
    """Orbit sampled at every step: returns ``(times, path)``.

    For drift limits the samples are ``dt`` apart and stop at the last full step
    not beyond ``t``.
    """
    y0 = np.asarray(y0, dtype=float)
    if isinstance(model, DtModel):
        n = _map_steps(t)
        path = np.empty((n + 1, y0.shape[0]))
        path[0] = y0
        for s in range(n):
            path[s + 1] = limit_map_many(model, path[s])[0]
        return np.arange(n + 1, dtype=float), path
    n_full, _ = _split(t, cfg.dt)
    rec = np.empty((n_full + 1, y0.shape[0]))
    _integrate(model, y0[None, :].copy(), n_full * cfg.dt, cfg, record=rec)
    return np.arange(n_full + 1) * cfg.dt, rec


def semiflow_defect(model, y0, s: float, t: float, cfg: FlowConfig = DEFAULT_FLOW) -> float:
    """``|phi_{s+t}(y0) - phi_s(phi_t(y0))|``."""
    direct = flow(model, y0, s + t, cfg)
    composed = flow(model, flow(model, y0, t, cfg), s, cfg)
    return float(np.linalg.norm(direct - composed))


# ---------------------------------------------------------------------------
# fixed points


@dataclass
class FixedPoint:
    point: np.ndarray
    residual: float
    iterations: int


def _residual_many(model, Y) -> np.ndarray:
    if isinstance(model, DtModel):
        return limit_map_many(model, Y) - Y
    return drift_many(model, Y)


def _tangent_basis(domain) -> np.ndarray:
    d = domain.dim
    if domain.kind == "box":
        return np.eye(d)
    B = np.zeros((d, d - 1))
    for j in range(d - 1):
        B[j, j] = 1.0
        B[d - 1, j] = -1.0
    return B


def _snap(domain, y):
    if domain.kind == "box":
        return np.clip(y, domain.lo_array, domain.hi_array)
    y = np.clip(y, 0.0, None)
    return y / y.sum()


def find_fixed_point(model, y_init, max_iters: int = 100, tol: float = 1e-10, fd_step: float = 1e-6) -> FixedPoint:
    """Newton's method with a forward-difference Jacobian.

    Solves ``F(y) = 0`` for drift limits and ``g(y) = y`` for map limits.
    Differences are taken along the simplex tangent space on simplex domains.

    Raises
    ------
    FixedPointError
        No convergence within ``max_iters``.
    SingularJacobianError
        Jacobian condition number above 1e12.
    """
    dom = model.domain
    B = _tangent_basis(dom)
    y = _snap(dom, np.asarray(y_init, dtype=float))
    F = _residual_many(model, y[None, :])[0]
    norm = float(np.linalg.norm(F))
    for it in range(max_iters + 1):
        if norm <= tol:
            return FixedPoint(y, norm, it)
        if it == max_iters:
            break
        probes = y[None, :] + fd_step * B.T
        J = (_residual_many(model, probes) - F[None, :]).T / fd_step
        if np.linalg.cond(J) > 1e12:
            raise SingularJacobianError(f"singular Jacobian at {y.tolist()}")
        z = np.linalg.lstsq(J, -F, rcond=None)[0]
        step = B @ z
        lam = 1.0
        for _ in range(30):
            cand = _snap(dom, y + lam * step)
            Fc = _residual_many(model, cand[None, :])[0]
            nc = float(np.linalg.norm(Fc))
            if nc < norm:
                break
            lam *= 0.5
        else:
            break
        y, F, norm = cand, Fc, nc
    raise FixedPointError(f"Newton did not converge from {np.asarray(y_init).tolist()} (residual {norm:.3g})")


# ---------------------------------------------------------------------------
# limit sets


@dataclass
class LimitSet:
    """A detected fixed point or periodic orbit.

    ``points`` holds the fixed point (one row) or the cycle samples taken at
    equal time increments over one period.
    """

    kind: str
    points: np.ndarray
    period: float | None = None
    residual: float | None = None
    closure_error: float | None = None
    discrete: bool = False

    @property
    def point(self) -> np.ndarray:
        return self.points[0]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "period": self.period,
            "residual": self.residual,
            "closure_error": self.closure_error,
            "n_points": int(self.points.shape[0]),
            "points": self.points.tolist() if self.points.shape[0] <= 16 else None,
        }


def _golden(f, a: float, b: float, tol: float = 1e-12, max_iter: int = 200):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _bbox_diameter(path: np.ndarray) -> float:
    return float(np.linalg.norm(path.max(axis=0) - path.min(axis=0)))


def _fixed_point_set(model, y, discrete) -> LimitSet:
    fp = find_fixed_point(model, y)
    return LimitSet("fixed_point", fp.point[None, :], residual=fp.residual, discrete=discrete)


def detect_limit_set(
    model: CtModel | DtModel,
    y0,
    T0: float | None = None,
    T1: float | None = None,
    cfg: FlowConfig = DEFAULT_FLOW,
    n_cycle_points: int = 256,
    tau_min: float = 0.5,
    p_max: int = 64,
) -> LimitSet:
    """Find the limit set reached from ``y0``.

    After a transient of ``T0`` the orbit over a window ``T1`` is inspected. A
    window diameter below 1e-6 gives a (Newton-refined) fixed point. Otherwise a
    drift limit is searched for a return to the post-transient point, refined by
    golden section; a map limit is checked for ``p``-periodicity, ``p <= p_max``.
    Failure yields ``kind="unknown"`` with the best closure error observed.
    """
    discrete = isinstance(model, DtModel)
    if T0 is None:
        T0 = 1000 if discrete else 100.0
    if T1 is None:
        T1 = 2 * p_max if discrete else 20.0
    if T0 <= 0 or T1 <= 0:
        raise ValueError("T0 and T1 must be positive")
    x = flow(model, y0, T0, cfg)
    _, path = trajectory(model, x, T1, cfg)
    if _bbox_diameter(path) < 1e-6:
        try:
            return _fixed_point_set(model, path[-1], discrete)
        except FixedPointError:
            return LimitSet("unknown", path[-1:], closure_error=0.0, discrete=discrete)
    if discrete:
        best = math.inf
        z = x.copy()
        orbit = [x]
        for p in range(1, p_max + 1):
            z = flow(model, z, 1)
            err = float(np.linalg.norm(z - x))
            best = min(best, err)
            if err <= 1e-9:
                if p == 1:
                    return _fixed_point_set(model, x, True)
                return LimitSet("cycle", np.array(orbit), period=p, closure_error=err, discrete=True)
            orbit.append(z)
        return LimitSet("unknown", x[None, :], closure_error=best, discrete=True)

    dist = np.linalg.norm(path - path[0], axis=1)
    # sampled distances can miss the true minimum by one step's displacement
    slack = 1e-4 + float(np.max(np.linalg.norm(np.diff(path, axis=0), axis=1)))
    best = math.inf
    j0 = max(1, int(math.ceil(tau_min / cfg.dt)))
    for j in range(j0, len(dist) - 1):
        if not (dist[j] <= dist[j - 1] and dist[j] <= dist[j + 1] and dist[j] < slack):
            continue
        f = lambda tau: float(np.linalg.norm(flow(model, x, tau, cfg) - x))
        tau, err = _golden(f, (j - 1) * cfg.dt, (j + 1) * cfg.dt)
        best = min(best, err)
        if err <= 1e-6:
            pts = np.empty((n_cycle_points, x.shape[0]))
            pts[0] = x
            h = tau / n_cycle_points
            for m in range(1, n_cycle_points):
                pts[m] = flow(model, pts[m - 1], h, cfg)
            return LimitSet("cycle", pts, period=tau, closure_error=err)
    best = min(best, float(dist[j0:].min()) if len(dist) > j0 else math.inf)
    return LimitSet("unknown", x[None, :], closure_error=best)


def _point_to_polyline(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Distance from each row of ``P`` to the closed polyline through the rows of ``Q``."""
    A = Q
    Bq = np.roll(Q, -1, axis=0)
    AB = Bq - A
    L2 = np.einsum("ij,ij->i", AB, AB)
    L2 = np.where(L2 > 0, L2, 1.0)
    out = np.empty(P.shape[0])
    for i, p in enumerate(P):
        s = np.clip(np.einsum("ij,ij->i", p - A, AB) / L2, 0.0, 1.0)
        proj = A + s[:, None] * AB
        out[i] = np.sqrt(np.min(np.einsum("ij,ij->i", p - proj, p - proj)))
    return out


def hausdorff(a: LimitSet, b: LimitSet) -> float:
    """Hausdorff distance between two limit sets.

    Two continuous-time cycles are compared as closed curves (samples against the
    other cycle's polyline) so that differently phased samplings of the same orbit
    coincide.
    """
    from scipy.spatial.distance import cdist

    if a.kind == b.kind == "cycle" and not a.discrete and not b.discrete:
        return float(max(_point_to_polyline(a.points, b.points).max(), _point_to_polyline(b.points, a.points).max()))
    D = cdist(a.points, b.points)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


@dataclass
class RecurrentSet:
    limit_sets: list
    points: np.ndarray
    per_start: list = field(default_factory=list)
    unknown: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "limit_sets": [ls.to_dict() for ls in self.limit_sets],
            "n_points": int(self.points.shape[0]),
            "unknown_starts": list(self.unknown),
        }


def recurrent_set_estimate(model, starts, cfg: FlowConfig = DEFAULT_FLOW, dedup_tol: float = 1e-4, **detect_kw) -> RecurrentSet:
    """Proxy for the recurrent set: attracting limit sets plus every Newton fixed point.

    Results are merged in start order; sets closer than ``dedup_tol`` in
    Hausdorff distance are merged.
    """
    starts = [np.asarray(s, dtype=float) for s in starts]
    if not starts:
        raise ValueError("need at least one start")
    found: list[LimitSet] = []
    per_start = []
    unknown = []
    for i, s in enumerate(starts):
        ls = detect_limit_set(model, s, cfg=cfg, **detect_kw)
        per_start.append(ls.kind)
        if ls.kind == "unknown":
            unknown.append(i)
        else:
            found.append(ls)
        try:
            fp = find_fixed_point(model, s)
        except FixedPointError:
            continue
        if model.domain.contains(fp.point, 1e-9):
            found.append(LimitSet("fixed_point", fp.point[None, :], residual=fp.residual, discrete=ls.discrete))
    merged: list[LimitSet] = []
    for ls in found:
        if all(hausdorff(ls, m) >= dedup_tol for m in merged):
            merged.append(ls)
    pts = np.vstack([m.points for m in merged]) if merged else np.empty((0, model.domain.dim))
    return RecurrentSet(merged, pts, per_start, unknown)
