"""Acceptance criteria 1-9 at full scale.

Each test prints one ``criterion k: PASS|FAIL`` line (also collected into the
pytest terminal summary). Run directly with ``python tests/test_acceptance.py``
for the lines alone.
"""
import itertools
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES, logistic_two_cycle, sis_fixed_point  # noqa: E402
from mflab.measures import (  # noqa: E402
    PointCloudMeasure,
    cycle_measure,
    dirac,
    invariance_residual,
    w1,
    w1_assignment,
    w1_bruteforce,
)
from mflab.model import ZOO, make_zoo_model  # noqa: E402
from mflab.ode import FlowConfig, detect_limit_set, find_fixed_point, flow, semiflow_defect  # noqa: E402
from mflab.verify import (  # noqa: E402
    ExperimentPlan,
    check_corollary,
    check_hypothesis1,
    check_support,
    check_theorem,
)

N_LIST = (100, 1000, 10000)


def verdict(k: int, ok: bool, detail: str):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def residuals(doc):
    return ", ".join(f"N={c['N']}:{c['residual']:.4g}" for c in doc.cells)


def test_criterion_1_sis_corollary():
    start = time.perf_counter()
    doc = check_corollary(ExperimentPlan("sis", N_list=N_LIST, seed=0))
    elapsed = time.perf_counter() - start
    ystar = doc.applicability["y_star"][0]
    rows = doc.cells
    strictly = all(b["ci"][1] < a["ci"][0] for a, b in zip(rows, rows[1:]))
    ok = (abs(ystar - sis_fixed_point()) < 1e-8 and strictly and rows[-1]["residual"] < 0.02 and elapsed < 120)
    verdict(1, ok, f"y*={ystar:.6f}, W1 {residuals(doc)}, strictly decreasing={strictly}, {elapsed:.1f}s")


def test_criterion_2_logistic_corollary():
    start = time.perf_counter()
    doc = check_corollary(ExperimentPlan({"name": "logistic", "params": {"r": 2.5}}, N_list=N_LIST, seed=0))
    elapsed = time.perf_counter() - start
    ystar = doc.applicability["y_star"]
    res = [c["residual"] for c in doc.cells]
    decreasing = all(b < a for a, b in zip(res, res[1:]))
    ok = abs(ystar[1] - 0.6) < 1e-9 and decreasing and res[-1] < 0.02 and elapsed < 60
    verdict(2, ok, f"y*={ystar[1]:.6f}, W1 {residuals(doc)}, {elapsed:.1f}s")


def test_criterion_3_logistic_two_cycle():
    a, b = logistic_two_cycle(3.2)
    doc = check_theorem(ExperimentPlan({"name": "logistic", "params": {"r": 3.2}}, N_list=N_LIST, t_list=(1.0,), seed=0))
    target = PointCloudMeasure.uniform(np.array([[1 - a, a], [1 - b, b]]))
    dist = w1(doc.clouds[N_LIST[-1]], target)
    rows = doc.cells
    non_inc = all(nxt["ci"][0] <= cur["ci"][1] for cur, nxt in zip(rows, rows[1:]))
    ok = dist < 0.03 and non_inc and rows[-1]["residual"] < 0.03
    verdict(3, ok, f"a={a:.6f}, b={b:.6f}, W1 to cycle measure {dist:.4g}, rho_1 {residuals(doc)}")


def test_criterion_4_hopf_cycle_support():
    start = time.perf_counter()
    hopf = make_zoo_model("hopf", mu=0.25, omega=1.0, eta=0.05)
    ls = detect_limit_set(hopf, [1.2, 0.3])
    radius_err = float(np.abs(np.hypot(ls.points[:, 0], ls.points[:, 1]) - 0.5).max())
    period_err = abs(ls.period - 2 * math.pi)
    plan = ExperimentPlan(hopf, N_list=N_LIST, t_list=(1.0, 5.0), seed=0)
    sup = check_support(plan)
    cloud = sup.clouds[N_LIST[-1]]
    from mflab.measures import support_distance

    to_cycle = support_distance(cloud, ls.points)[0]
    support_ok = sup.verdicts["strictly_decreasing"]["pass"] and sup.cells[-1]["residual"] < 0.05 and to_cycle < 0.05
    thm = check_theorem(plan)
    rho_ok = thm.verdicts["residual_non_increasing"]["pass"]
    elapsed = time.perf_counter() - start
    ok = ls.kind == "cycle" and radius_err <= 1e-3 and period_err <= 1e-2 and support_ok and rho_ok and elapsed < 300
    verdict(4, ok, f"radius err {radius_err:.2g}, period err {period_err:.2g}, support {residuals(sup)}, "
                   f"to cycle {to_cycle:.4g}, rho {residuals(thm)}, {elapsed:.0f}s")


@pytest.mark.parametrize("name", ["sis", "logistic"])
def test_criterion_5_hypothesis1(name):
    doc = check_hypothesis1(ExperimentPlan(name, N_list=N_LIST, t_list=(1.0, 3.0, 5.0), replicas=200, seed=0))
    slopes = [v["slope"] for v in doc.trends["slopes"].values()]
    ok = doc.verdicts["slope_window"]["pass"] and doc.verdicts["variance_decreasing"]["pass"]
    verdict(5, ok, f"{name}: slopes in [{min(slopes):.3f}, {max(slopes):.3f}], variances decreasing="
                   f"{doc.verdicts['variance_decreasing']['pass']}")


def test_criterion_6_semiflow_axioms():
    rng = np.random.default_rng(6)
    cfg = FlowConfig(dt=1e-3)
    worst, exact = 0.0, True
    for name in ZOO:
        m = make_zoo_model(name)
        for y in m.domain.sample_uniform(5, rng):
            exact &= bool(np.array_equal(flow(m, y, 0, cfg), y))
            if m.kind != "ct":
                continue
            for s, t in itertools.product((0.5, 1.0, 2.5), repeat=2):
                worst = max(worst, semiflow_defect(m, y, s, t, cfg))
    verdict(6, exact and worst <= 1e-8, f"flow(y,0)=y exact: {exact}; max semiflow defect {worst:.2e}")


def test_criterion_7_transport_oracle():
    rng = np.random.default_rng(7)
    worst_bf = 0.0
    for k in range(200):
        n, d = int(rng.integers(1, 8)), (1, 2, 3)[k % 3]
        mu = PointCloudMeasure.uniform(rng.random((n, d)))
        nu = PointCloudMeasure.uniform(rng.random((n, d)))
        worst_bf = max(worst_bf, abs(w1_assignment(mu, nu) - w1_bruteforce(mu, nu)))
    worst_1d = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 60))
        mu = PointCloudMeasure.uniform(rng.random((n, 1)))
        nu = PointCloudMeasure.uniform(rng.random((n, 1)))
        worst_1d = max(worst_1d, abs(w1(mu, nu) - w1_assignment(mu, nu)))
    verdict(7, worst_bf <= 1e-12 and worst_1d <= 1e-12,
            f"assignment vs brute force {worst_bf:.1e}; quantile vs assignment {worst_1d:.1e}")


def test_criterion_8_invariance_functional():
    sis = make_zoo_model("sis")
    ystar = find_fixed_point(sis, [0.3]).point
    fixed = max(invariance_residual(dirac(ystar), sis, t) for t in (0.5, 1.0, 5.0))
    hopf = make_zoo_model("hopf")
    cyc = invariance_residual(cycle_measure(detect_limit_set(hopf, [1.2, 0.3], n_cycle_points=256)), hopf, 1.0)
    rng = np.random.default_rng(8)
    zero = 0.0
    for name in ZOO:
        m = make_zoo_model(name)
        mu = PointCloudMeasure.uniform(m.domain.sample_uniform(50, rng))
        zero = max(zero, invariance_residual(mu, m, 0))
    verdict(8, fixed <= 1e-6 and cyc <= 0.013 and zero == 0.0,
            f"dirac at y* {fixed:.1e}, hopf cycle {cyc:.4g}, rho_0 {zero}")


def test_criterion_9_reproducible_reports(tmp_path):
    def once(out):
        cmd = [sys.executable, "-m", "mflab.cli", "verify", "theorem", "--model", "sis", "--seed", "42", "--out", str(out)]
        subprocess.run(cmd, check=False, capture_output=True)
        return (out / "report.json").read_bytes()

    a, b = once(tmp_path / "a"), once(tmp_path / "b")
    verdict(9, a == b and len(a) > 0, f"report.json {len(a)} bytes, identical={a == b}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
