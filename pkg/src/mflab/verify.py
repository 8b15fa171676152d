"""The four experiments and the pure verdict function over their reports.

* :func:`check_hypothesis1` -- fixed-time marginals concentrate on the flow.
* :func:`check_theorem` -- stationary clouds become invariant for the limit.
* :func:`check_corollary` -- with a global attractor, clouds collapse to a Dirac.
* :func:`check_support` -- clouds concentrate on the detected limit sets.

All numbers are Monte-Carlo evidence along one increasing sequence of N; they
cannot certify every limit point of the invariant measures.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from . import __version__
from .defaults import DEFAULTS, T_LISTS, TOLERANCES, Y0
from .measures import PointCloudMeasure, TestFunctionSet, dirac, support_distance, w1
from .model import CtModel, DtModel, ZooSpec, coerce_point, model_from_dict, model_to_dict
from .ode import FlowConfig, detect_limit_set, find_fixed_point, flow, flow_many, hausdorff, recurrent_set_estimate
from .report import ReportDocument, to_jsonable
from .sim import RngSpec, round_to_grid, sample_marginals, simulate, stationary_sample

__all__ = [
    "ExperimentPlan",
    "check_hypothesis1",
    "check_theorem",
    "check_corollary",
    "check_support",
    "evaluate_verdicts",
    "spread_starts",
    "EXPERIMENTS",
]


@dataclass
class ExperimentPlan:
    """Everything an experiment needs; ``None`` fields take per-experiment defaults."""

    model: dict
    N_list: tuple = DEFAULTS["N_list"]
    t_list: tuple | None = None
    replicas: int = DEFAULTS["replicas"]
    burn_in: float = DEFAULTS["burn_in"]
    n_samples: int = DEFAULTS["n_samples"]
    spacing: float = DEFAULTS["spacing"]
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    y0: tuple | None = None
    dt: float = DEFAULTS["dt"]
    resample_n: int = DEFAULTS["resample_n"]
    bootstrap: int = DEFAULTS["bootstrap"]
    spot_atoms: int = DEFAULTS["spot_atoms"]
    split_half_threshold: float = DEFAULTS["split_half_threshold"]
    threads: int = DEFAULTS["threads"]

    def __post_init__(self):
        if isinstance(self.model, (CtModel, DtModel)):
            self.model = model_to_dict(self.model)
        elif isinstance(self.model, ZooSpec):
            self.model = {"name": self.model.name, "params": dict(self.model.params)}
        elif isinstance(self.model, str):
            self.model = {"name": self.model, "params": {}}
        if "kind" not in self.model:
            # zoo reference: make every parameter explicit
            self.model = {"name": self.model["name"], "params": dict(self.build_model().params)}
        self.N_list = tuple(int(n) for n in self.N_list)
        if len(self.N_list) < 2 or any(b <= a for a, b in zip(self.N_list, self.N_list[1:])):
            raise ValueError("N_list must be strictly ascending with at least two entries")
        if self.N_list[0] < 1:
            raise ValueError("N must be positive")
        if self.t_list is not None:
            self.t_list = tuple(float(t) for t in self.t_list)
            if any(t < 0 for t in self.t_list):
                raise ValueError("times must be nonnegative")
        if self.replicas < 2:
            raise ValueError("replicas must be >= 2")
        if self.n_samples < 2 or not self.spacing > 0 or self.burn_in < 0:
            raise ValueError("invalid stationary parameters")
        self.tolerances = {**TOLERANCES, **(self.tolerances or {})}
        if self.y0 is not None:
            self.y0 = tuple(float(v) for v in np.atleast_1d(self.y0))

    def build_model(self):
        return model_from_dict(self.model)

    def times(self, experiment: str) -> tuple:
        return self.t_list if self.t_list is not None else tuple(float(t) for t in T_LISTS[experiment])

    def resolved(self, experiment: str) -> dict:
        """Plan with every default made explicit (runtime-only fields dropped)."""
        d = asdict(self)
        d.pop("threads")
        d["t_list"] = list(self.times(experiment))
        d["N_list"] = list(self.N_list)
        if experiment == "hypothesis1":
            d["y0"] = list(self.start_point(self.build_model()))
        d["tolerances"] = {k: list(v) if isinstance(v, tuple) else v for k, v in self.tolerances.items()}
        return to_jsonable(d)

    def start_point(self, model) -> np.ndarray:
        if self.y0 is not None:
            return coerce_point(model.domain, self.y0)
        if model.name in Y0 and model.domain.dim == len(Y0[model.name]):
            return np.asarray(Y0[model.name], dtype=float)
        return model.domain.centroid

    def flow_config(self) -> FlowConfig:
        return FlowConfig(dt=self.dt)


def _provenance(plan_dict: dict, model_dict: dict, seed: int) -> dict:
    import numba
    import scipy

    blob = json.dumps(to_jsonable({"plan": plan_dict, "model": model_dict}), sort_keys=True).encode()
    return {
        "seed": seed,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "versions": {"mflab": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__},
    }


def spread_starts(domain, n: int = 9) -> list:
    """Deterministic starting points spread over the domain."""
    lo, hi = domain.lo_array, domain.hi_array
    if domain.kind == "box" and domain.dim == 1:
        return [lo + (hi - lo) * (j + 1) / (n + 1) for j in range(n)]
    if domain.kind == "box":
        out = []
        for a in (0.2, 0.5, 0.8):
            for b in (0.2, 0.5, 0.8):
                c = domain.centroid.copy()
                c[0] = lo[0] + a * (hi[0] - lo[0])
                c[1] = lo[1] + b * (hi[1] - lo[1])
                out.append(c)
        return out
    if domain.dim == 2:
        return [np.array([1 - (j + 1) / (n + 1), (j + 1) / (n + 1)]) for j in range(n)]
    c = domain.centroid
    out = [c]
    for lam in (0.3, 0.6):
        for i in range(domain.dim):
            e = np.zeros(domain.dim)
            e[i] = 1.0
            out.append((1 - lam) * c + lam * e)
    return out


# ---------------------------------------------------------------------------
# shared pieces

_STATIONARY_CACHE: dict = {}


def _stationary(model, plan: ExperimentPlan, N: int):
    key = (json.dumps(model_to_dict(model), sort_keys=True), N, plan.burn_in, plan.n_samples, plan.spacing,
           plan.seed, plan.split_half_threshold)
    if key not in _STATIONARY_CACHE:
        rng = RngSpec(plan.seed).derive("stationary", N).generator()
        _STATIONARY_CACHE[key] = stationary_sample(model, N, plan.burn_in, plan.n_samples, plan.spacing, rng,
                                                   plan.split_half_threshold)
    return _STATIONARY_CACHE[key]


def _bootstrap_ci(samples, estimate: float) -> list:
    """95% percentile interval, shifted so the bootstrap median sits on ``estimate``.

    Resampling with replacement duplicates atoms, which inflates transport-based
    statistics; the shift removes that bias and keeps the spread.
    """
    lo, med, hi = np.percentile(np.asarray(samples, dtype=float), [2.5, 50, 97.5])
    shift = med - estimate
    return [float(lo - shift), float(hi - shift)]


def _bootstrap_idx(plan: ExperimentPlan, n: int, *keys) -> np.ndarray:
    gen = RngSpec(plan.seed).derive("bootstrap", *keys).generator()
    return gen.integers(0, n, size=(plan.bootstrap, n))


def _cell_common(model, plan, N, t):
    return {"model": model.name, "N": N, "t": t, "seed": plan.seed}


def _stationary_diag(est) -> dict:
    return {"split_half_w1": est.split_half_w1, "flagged": est.flagged, "truncations": est.truncations}


def _finish(experiment, model, plan, cells, table_name, chart, tables=None, applicability=None,
            notes=None, clouds=None) -> ReportDocument:
    plan_dict = plan.resolved(experiment)
    model_dict = model_to_dict(model)
    doc = ReportDocument(
        experiment=experiment,
        model=model_dict,
        plan=plan_dict,
        cells=to_jsonable(cells),
        trends={},
        verdicts={},
        provenance=_provenance(plan_dict, model_dict, plan.seed),
        table_name=table_name,
        tables=to_jsonable(tables or {}),
        applicability=applicability or {"applicable": True, "reason": ""},
        notes=list(notes or []),
        chart=chart,
        clouds=clouds or {},
    )
    doc.trends, doc.verdicts = evaluate_verdicts(doc.to_dict(), with_trends=True)
    return doc


_LIMIT_NOTE = ("Evidence is Monte-Carlo along one increasing sequence of N and uses W1 as the metric "
               "for weak convergence; it cannot certify every limit point.")


# ---------------------------------------------------------------------------
# experiments


def check_hypothesis1(plan: ExperimentPlan) -> ReportDocument:
    """Fixed-time marginals from ``round_to_grid(y0)`` against ``h(phi_t(y0))``.

    Each cell records, per test function, the replica mean and variance, the
    target, the bias ``|mean - target|`` and the mean absolute error
    ``E|h(Y^N(t)) - h(phi_t(y0))|``, whose log-log slope in N is checked.
    """
    model = plan.build_model()
    cfg = plan.flow_config()
    y0 = plan.start_point(model)
    times = plan.times("hypothesis1")
    if isinstance(model, DtModel):
        times = tuple(float(int(round(t))) for t in times)
    hset = TestFunctionSet.for_domain(model.domain)
    kinds = [f.kind for f in hset]
    targets = {t: hset.evaluate(flow(model, y0, t, cfg)[None, :])[0] for t in times}
    cells = []
    for N in plan.N_list:
        states = sample_marginals(model, N, y0, times, plan.replicas,
                                  RngSpec(plan.seed).derive("hypothesis1", N), plan.threads)
        for ti, t in enumerate(times):
            vals = hset.evaluate(states[:, ti, :])
            mean = vals.mean(axis=0)
            var = vals.var(axis=0, ddof=1)
            mae = np.abs(vals - targets[t]).mean(axis=0)
            for hi, name in enumerate(hset.names):
                half = 1.96 * math.sqrt(var[hi] / plan.replicas)
                cells.append({
                    **_cell_common(model, plan, N, t),
                    "h": name,
                    "h_kind": kinds[hi],
                    "estimates": {
                        "mean": mean[hi],
                        "variance": var[hi],
                        "target": targets[t][hi],
                        "bias": abs(mean[hi] - targets[t][hi]),
                        "mean_abs_error": mae[hi],
                        "replicas": plan.replicas,
                    },
                    "residual": mae[hi],
                    "ci": half,
                })
    chart = {"x": "N", "y": "residual", "series": ["t", "h"], "where": {"h_kind": "coordinate"}}
    notes = [
        "residual = mean absolute error over replicas; slopes are checked for coordinate and product "
        "test functions, whose first-order term gives the N^-1/2 rate.",
        _LIMIT_NOTE,
    ]
    return _finish("hypothesis1", model, plan, cells, "errors", chart, notes=notes)


def _definition1_spot_check(model, plan, est, t, hset, cfg):
    cloud = est.cloud
    gen = RngSpec(plan.seed).derive("spot", est.N, t).generator()
    m = min(plan.spot_atoms, cloud.n)
    pick = np.sort(gen.choice(cloud.n, size=m, replace=False))
    streams = RngSpec(plan.seed).derive("spot-runs", est.N, t)
    ends = []
    for i, a in enumerate(pick):
        start = round_to_grid(model.domain, est.N, cloud.points[a])
        res = simulate(model, est.N, start, t, streams.generator(i), [t])
        ends.append(res.samples[0])
    ends = np.array(ends)
    before = hset.evaluate(cloud.points)
    after = hset.evaluate(ends)
    z = stats.norm.ppf(1 - plan.tolerances["spot_alpha"] / (2 * len(hset)))
    rows = []
    for hi, name in enumerate(hset.names):
        half = z * math.sqrt(after[:, hi].var(ddof=1) / m + before[:, hi].var(ddof=1) / cloud.n)
        rows.append({
            **_cell_common(model, plan, est.N, t),
            "h": name,
            "before": before[:, hi].mean(),
            "after": after[:, hi].mean(),
            "halfwidth": half,
            "atoms": m,
        })
    return rows


def check_theorem(plan: ExperimentPlan) -> ReportDocument:
    """Invariance residual ``W1(phi_t # Pi_N, Pi_N)`` and test-function gap over N.

    At the largest N the stationarity of the cloud for the N-object process is
    spot-checked by restarting the chain from a random subset of atoms.
    """
    model = plan.build_model()
    cfg = plan.flow_config()
    times = plan.times("theorem")
    hset = TestFunctionSet.for_domain(model.domain)
    cells, spot, clouds = [], [], {}
    for N in plan.N_list:
        est = _stationary(model, plan, N)
        clouds[N] = est.cloud
        P = est.cloud.points
        for t in times:
            moved = flow_many(model, P, t, cfg)
            rho = w1(PointCloudMeasure.uniform(moved), est.cloud, plan.resample_n, plan.seed)
            gap = float(np.max(np.abs(hset.evaluate(moved).mean(axis=0) - hset.evaluate(P).mean(axis=0))))
            boot = [w1(PointCloudMeasure.uniform(moved[idx]), PointCloudMeasure.uniform(P[idx]), plan.resample_n, plan.seed)
                    for idx in _bootstrap_idx(plan, P.shape[0], "theorem", N, t)]
            ci = _bootstrap_ci(boot, rho)
            cells.append({
                **_cell_common(model, plan, N, t),
                "estimates": {"residual": rho, "test_function_gap": gap, "ci_lo": ci[0], "ci_hi": ci[1],
                              "cloud_mean": est.cloud.mean(), **_stationary_diag(est)},
                "residual": rho,
                "ci": ci,
            })
            if N == plan.N_list[-1]:
                spot.extend(_definition1_spot_check(model, plan, est, t, hset, cfg))
    chart = {"x": "N", "y": "residual", "series": ["t"]}
    return _finish("theorem", model, plan, cells, "residuals", chart, tables={"spot_check": spot},
                   notes=[_LIMIT_NOTE], clouds=clouds)


def _same_fixed_point(sets) -> bool:
    if any(s.kind != "fixed_point" for s in sets):
        return False
    return all(hausdorff(sets[0], s) < 1e-4 for s in sets[1:])


def check_corollary(plan: ExperimentPlan, y_star=None) -> ReportDocument:
    """Distance ``W1(Pi_N, delta_{y*})`` when every start flows to the same fixed point.

    Compactness of the domain makes the stationary family tight. If the limit
    sets detected from the spread starts disagree or are not fixed points the
    report is marked inapplicable.
    """
    model = plan.build_model()
    cfg = plan.flow_config()
    starts = spread_starts(model.domain)
    sets = [detect_limit_set(model, s, cfg=cfg) for s in starts]
    kinds = [s.kind for s in sets]
    if not _same_fixed_point(sets):
        if "cycle" in kinds:
            reason = "inapplicable: limit set is a cycle"
        elif len(set(kinds)) == 1 and kinds[0] == "fixed_point":
            reason = "inapplicable: starts reach different fixed points"
        else:
            reason = f"inapplicable: limit sets {sorted(set(kinds))}"
        return _finish("corollary", model, plan, [], "distances", None,
                       applicability={"applicable": False, "reason": reason, "limit_sets": kinds},
                       notes=[_LIMIT_NOTE])
    if y_star is None:
        y_star = find_fixed_point(model, sets[0].point).point
    else:
        y_star = coerce_point(model.domain, y_star)
    target = dirac(y_star)
    cells, clouds = [], {}
    for N in plan.N_list:
        est = _stationary(model, plan, N)
        clouds[N] = est.cloud
        P = est.cloud.points
        dist = w1(est.cloud, target)
        boot = [w1(PointCloudMeasure.uniform(P[idx]), target) for idx in _bootstrap_idx(plan, P.shape[0], "corollary", N)]
        ci = _bootstrap_ci(boot, dist)
        cells.append({
            **_cell_common(model, plan, N, None),
            "estimates": {"w1": dist, "ci_lo": ci[0], "ci_hi": ci[1], "y_star": y_star, **_stationary_diag(est)},
            "residual": dist,
            "ci": ci,
        })
    chart = {"x": "N", "y": "residual", "series": []}
    app = {"applicable": True, "reason": "", "limit_sets": kinds, "y_star": y_star}
    return _finish("corollary", model, plan, cells, "distances", chart, applicability=app,
                   notes=[_LIMIT_NOTE], clouds=clouds)


def check_support(plan: ExperimentPlan) -> ReportDocument:
    """Mean distance from the stationary clouds to the recurrent-set proxy.

    The proxy is the union of limit sets reached from spread starts and every
    fixed point Newton finds from them; it may miss parts of the recurrent set
    such as connecting orbits.
    """
    model = plan.build_model()
    cfg = plan.flow_config()
    rs = recurrent_set_estimate(model, spread_starts(model.domain), cfg)
    ls_rows = [{"model": model.name, "seed": plan.seed, **ls.to_dict()} for ls in rs.limit_sets]
    notes = ["The point set is a proxy for the closure of the recurrent set.", _LIMIT_NOTE]
    if rs.points.shape[0] == 0:
        return _finish("support", model, plan, [], "support", None, tables={"limit_sets": ls_rows},
                       applicability={"applicable": False, "reason": "inapplicable: no limit set detected"},
                       notes=notes)
    cells, clouds = [], {}
    for N in plan.N_list:
        est = _stationary(model, plan, N)
        clouds[N] = est.cloud
        mean, mx = support_distance(est.cloud, rs.points)
        P = est.cloud.points
        dist, _ = cKDTree(rs.points).query(P)
        boot = [dist[idx].mean() for idx in _bootstrap_idx(plan, P.shape[0], "support", N)]
        ci = _bootstrap_ci(boot, mean)
        cells.append({
            **_cell_common(model, plan, N, None),
            "estimates": {"mean": mean, "max": mx, "ci_lo": ci[0], "ci_hi": ci[1], **_stationary_diag(est)},
            "residual": mean,
            "ci": ci,
        })
    chart = {"x": "N", "y": "residual", "series": []}
    return _finish("support", model, plan, cells, "support", chart, tables={"limit_sets": ls_rows},
                   applicability={"applicable": True, "reason": "", "limit_sets": [ls.kind for ls in rs.limit_sets]},
                   notes=notes, clouds=clouds)


EXPERIMENTS = {
    "hypothesis1": check_hypothesis1,
    "theorem": check_theorem,
    "corollary": check_corollary,
    "support": check_support,
}


# ---------------------------------------------------------------------------
# verdicts: pure functions of the persisted report


def _loglog_slope(Ns, ys):
    x = np.log(np.asarray(Ns, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    dof = len(x) - 2
    if dof <= 0:
        return slope, [slope, slope]
    resid = y - A @ coef
    se = math.sqrt(float(resid @ resid) / dof / float(((x - x.mean()) ** 2).sum()))
    q = float(stats.t.ppf(0.975, dof))
    return slope, [slope - q * se, slope + q * se]


def _strictly_decreasing(rows) -> bool:
    """Each next CI lies entirely below the previous one."""
    return all(b["ci"][1] < a["ci"][0] for a, b in zip(rows, rows[1:]))


def _non_increasing(rows) -> bool:
    """No significant increase: each next CI reaches down to the previous one."""
    return all(b["ci"][0] <= a["ci"][1] for a, b in zip(rows, rows[1:]))


def _verdicts_hypothesis1(doc):
    tol = doc["plan"]["tolerances"]
    lo, hi = tol["slope_window"]
    cells = doc["cells"]
    trends, verdicts = {"slopes": {}}, {}
    groups: dict = {}
    for c in cells:
        groups.setdefault((c["t"], c["h"]), []).append(c)
    slope_ok, var_ok, bad = True, True, []
    for (t, h), rows in groups.items():
        rows = sorted(rows, key=lambda r: r["N"])
        if t == 0:
            continue
        errs = [r["estimates"]["mean_abs_error"] for r in rows]
        if all(e > 0 for e in errs):
            slope, ci = _loglog_slope([r["N"] for r in rows], errs)
        else:
            slope, ci = None, None
        trends["slopes"][f"t={t:g}|{h}"] = {"slope": slope, "ci": ci}
        if rows[0]["h_kind"] in ("coordinate", "product"):
            if slope is None or not lo <= slope <= hi:
                slope_ok = False
                bad.append(f"slope t={t:g} {h}: {slope}")
        v = [r["estimates"]["variance"] for r in rows]
        if not all(b < a for a, b in zip(v, v[1:])):
            var_ok = False
            bad.append(f"variance not decreasing t={t:g} {h}")
    verdicts["slope_window"] = {"pass": slope_ok, "detail": f"log-log slope of mean abs error in [{lo}, {hi}]"}
    verdicts["variance_decreasing"] = {"pass": var_ok, "detail": "marginal variance strictly decreasing in N"}
    if bad:
        verdicts["failures"] = bad
    return trends, verdicts


def _by_t(cells):
    out: dict = {}
    for c in cells:
        out.setdefault(c["t"], []).append(c)
    return {t: sorted(rows, key=lambda r: r["N"]) for t, rows in out.items()}


def _verdicts_theorem(doc):
    tol = doc["plan"]["tolerances"]["residual_max"]
    trends, verdicts = {"slopes": {}}, {}
    mono, term = True, True
    for t, rows in _by_t(doc["cells"]).items():
        res = [r["residual"] for r in rows]
        if all(v > 0 for v in res):
            slope, ci = _loglog_slope([r["N"] for r in rows], res)
            trends["slopes"][f"t={t:g}"] = {"slope": slope, "ci": ci}
        mono &= _non_increasing(rows)
        term &= rows[-1]["residual"] < tol
    verdicts["residual_non_increasing"] = {"pass": mono, "detail": "invariance residual non-increasing in N (bootstrap CI)"}
    verdicts["residual_terminal"] = {"pass": term, "detail": f"residual at largest N below {tol}"}
    spot = doc.get("tables", {}).get("spot_check", [])
    spot_ok = all(abs(r["after"] - r["before"]) <= r["halfwidth"] for r in spot)
    verdicts["definition1_spot_check"] = {"pass": spot_ok, "detail": "restarted atoms keep test-function averages (Bonferroni CI)"}
    return trends, verdicts


def _verdicts_decreasing(doc, tol_key, label):
    tol = doc["plan"]["tolerances"][tol_key]
    rows = sorted(doc["cells"], key=lambda r: r["N"])
    trends, verdicts = {}, {}
    res = [r["residual"] for r in rows]
    if all(v > 0 for v in res):
        slope, ci = _loglog_slope([r["N"] for r in rows], res)
        trends = {"slope": slope, "ci": ci}
    verdicts["strictly_decreasing"] = {"pass": _strictly_decreasing(rows), "detail": f"{label} strictly decreasing in N (bootstrap CI)"}
    verdicts["terminal"] = {"pass": rows[-1]["residual"] < tol, "detail": f"{label} at largest N below {tol}"}
    return trends, verdicts


def evaluate_verdicts(doc: dict, with_trends: bool = False):
    """Recompute trends and pass/fail verdicts from a report dict (e.g. loaded ``report.json``)."""
    app = doc.get("applicability", {"applicable": True})
    if not app.get("applicable", True):
        trends, verdicts = {}, {"precondition": {"pass": False, "detail": app.get("reason", "inapplicable")},
                                "overall": "INAPPLICABLE"}
        return (trends, verdicts) if with_trends else verdicts
    exp = doc["experiment"]
    if exp == "hypothesis1":
        trends, verdicts = _verdicts_hypothesis1(doc)
    elif exp == "theorem":
        trends, verdicts = _verdicts_theorem(doc)
    elif exp == "corollary":
        trends, verdicts = _verdicts_decreasing(doc, "w1_max", "W1 to the Dirac mass")
    elif exp == "support":
        trends, verdicts = _verdicts_decreasing(doc, "support_max", "mean support distance")
    else:
        raise ValueError(f"unknown experiment {exp!r}")
    ok = all(v["pass"] for v in verdicts.values() if isinstance(v, dict))
    verdicts["overall"] = "PASS" if ok else "FAIL"
    trends, verdicts = to_jsonable(trends), to_jsonable(verdicts)
    return (trends, verdicts) if with_trends else verdicts
