import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import logistic_two_cycle, sis_fixed_point
from mflab.expr import parse_rate_expression
from mflab.measures import TestFunctionSet
from mflab.model import ZOO, CtModel, Domain, DtModel, GridPoint, Jump, make_zoo_model
from mflab.sim import (
    RngSpec,
    marginal_moments,
    round_to_grid,
    sample_marginals,
    simulate,
    simulate_ct,
    simulate_dt,
    splitmix64,
    stationary_sample,
)


def two_state(a=1.0, b=2.0):
    """N independent on/off objects: off->on at rate a, on->off at rate b."""
    d = Domain.box([0.0], [1.0])
    return CtModel(d, [Jump((1,), parse_rate_expression(f"{a}*(1 - x0)", 1)),
                       Jump((-1,), parse_rate_expression(f"{b}*x0", 1))], "twostate")


def largest_remainder(y, N):
    exact = [Fraction(v).limit_denominator(10**12) * N for v in y]
    base = [math.floor(v) for v in exact]
    order = sorted(range(len(y)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[: N - sum(base)]:
        base[i] += 1
    return tuple(base)


# --- RNG ---------------------------------------------------------------------

def test_splitmix_reference_values():
    # first outputs of the reference SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_streams_deterministic_and_distinct():
    spec = RngSpec(7)
    a = spec.generator(3).random(64)
    np.testing.assert_array_equal(a, RngSpec(7).generator(3).random(64))
    draws = [spec.generator(r).random(64) for r in range(20)]
    for i in range(20):
        for j in range(i + 1, 20):
            assert not np.any(draws[i] == draws[j])
    assert RngSpec(7).derive("x", 1).seed != RngSpec(7).derive("x", 2).seed


# --- grid ----------------------------------------------------------------------

def test_round_to_grid_examples():
    assert round_to_grid(Domain.box([0.0], [1.0]), 10, [0.26]).coords == (3,)
    assert round_to_grid(Domain.simplex(3), 4, [1 / 3, 1 / 3, 1 / 3]).coords == (2, 1, 1)
    g = round_to_grid(Domain.box([-2.0, -2.0], [2.0, 2.0]), 10, [0.5, -0.3])
    np.testing.assert_allclose(g.y, [0.5, -0.3], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=2, max_size=5).filter(lambda v: sum(v) > 0), st.integers(1, 200))
def test_simplex_rounding_matches_largest_remainder(weights, N):
    y = np.array(weights, dtype=float) / sum(weights)
    g = round_to_grid(Domain.simplex(len(y)), N, y)
    assert sum(g.coords) == N
    assert g.coords == largest_remainder(y, N)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.data())
def test_grid_points_are_fixed(N, data):
    k = data.draw(st.lists(st.integers(0, N), min_size=3, max_size=3).filter(lambda v: sum(v) <= N))
    coords = (N - sum(k), *k)
    d = Domain.simplex(4)
    assert round_to_grid(d, N, GridPoint(d, N, coords).y).coords == coords
    box = Domain.box([-2.0], [2.0])
    j = data.draw(st.integers(0, 4 * N))
    assert round_to_grid(box, N, GridPoint(box, N, (j,)).y).coords == (j,)


# --- continuous-time SSA -----------------------------------------------------------

def test_zero_horizon_is_identity(sis):
    res = simulate_ct(sis, 100, [0.3], 0.0, RngSpec(1).generator())
    assert res.final.coords == (30,) and res.events == 0


def test_first_sis_event_from_zero_is_infection(sis):
    # from x=0 only the external infection is enabled (rate N*lambda0 = 1)
    seen = 0
    for r in range(200):
        res = simulate_ct(sis, 100, [0.0], 0.7, RngSpec(3).generator(r))
        if res.events == 1:
            seen += 1
            assert res.final.coords == (1,)
    assert seen > 20


def test_two_state_marginal_matches_binomial():
    a, b, N, t = 1.0, 2.0, 200, 0.4
    p = a / (a + b) * (1 - math.exp(-(a + b) * t))
    m = two_state(a, b)
    states = sample_marginals(m, N, [0.0], [t], 2000, RngSpec(11))[:, 0, 0]
    se = math.sqrt(p * (1 - p) / N / 2000)
    assert abs(states.mean() - p) < 4 * se
    var = p * (1 - p) / N
    assert states.var(ddof=1) == pytest.approx(var, rel=0.15)


def test_sis_endpoints_near_fixed_point(sis):
    ystar = sis_fixed_point()
    y0 = round_to_grid(sis.domain, 1000, [ystar])
    ends = np.array([simulate_ct(sis, 1000, y0, 50.0, RngSpec(5).generator(r)).final.y[0] for r in range(200)])
    assert abs(ends.mean() - ystar) < 3 * ends.std(ddof=1) / math.sqrt(200)


def test_boundary_jumps_are_censored():
    d = Domain.box([0.0], [1.0])
    m = CtModel(d, [Jump((1,), parse_rate_expression("1", 1)), Jump((-1,), parse_rate_expression("0.1", 1))], "pusher")
    res = simulate_ct(m, 10, [0.5], 100.0, RngSpec(0).generator(), np.linspace(0, 100, 101))
    assert res.samples.max() <= 1.0
    assert res.truncations > 0


def test_zoo_models_do_not_truncate_from_centroid():
    for name in ("sis", "sirs", "hopf"):
        m = make_zoo_model(name)
        res = simulate_ct(m, 100, m.domain.centroid, 20.0, RngSpec(2).generator())
        assert res.truncations == 0, name


def test_samples_are_recorded_in_requested_order(sis):
    res = simulate_ct(sis, 50, [0.2], 3.0, RngSpec(9).generator(), [2.0, 0.0, 1.0])
    assert res.samples.shape == (3, 1)
    assert res.samples[1, 0] == pytest.approx(0.2)


def test_same_seed_same_path(hopf):
    a = simulate_ct(hopf, 300, [0.5, 0.0], 5.0, RngSpec(4).generator())
    b = simulate_ct(hopf, 300, [0.5, 0.0], 5.0, RngSpec(4).generator())
    assert a.final == b.final and a.events == b.events


# --- discrete time ---------------------------------------------------------------

def test_logistic_one_step_binomial():
    m = make_zoo_model("logistic", r=2.5)
    res = simulate_dt(m, 10**5, [0.8, 0.2], 1, RngSpec(1).generator())
    assert abs(res.final.y[1] - 0.4) < 3 * math.sqrt(0.4 * 0.6 / 1e5)


def test_identity_kernel_is_frozen():
    d = Domain.simplex(3)
    one, zero = parse_rate_expression("1", 3), parse_rate_expression("0", 3)
    m = DtModel(d, [[one if i == j else zero for j in range(3)] for i in range(3)], "identity")
    start = GridPoint(d, 17, (5, 7, 5))
    assert simulate_dt(m, 17, start, 100, RngSpec(0).generator()).final == start
    assert simulate_dt(m, 17, start, 0).final == start


def test_logistic_marginal_mean_tends_to_map_orbit():
    m = make_zoo_model("logistic", r=2.5)
    hset = TestFunctionSet.for_domain(m.domain).subset({"coordinate"})
    est = marginal_moments(m, 10**4, [0.8, 0.2], 3, hset, 100, RngSpec(8))
    assert est.mean[1] == pytest.approx(0.6, abs=0.01)


def test_marginal_at_time_zero():
    m = make_zoo_model("sis")
    hset = TestFunctionSet.for_domain(m.domain).subset({"coordinate"})
    est = marginal_moments(m, 100, [0.234], 0.0, hset, 10, RngSpec(0))
    assert est.mean[0] == pytest.approx(0.23) and est.variance[0] == pytest.approx(0.0, abs=1e-30)


def test_marginal_threads_do_not_change_results(sis):
    a = sample_marginals(sis, 200, [0.2], [1.0, 2.0], 8, RngSpec(3), threads=1)
    b = sample_marginals(sis, 200, [0.2], [1.0, 2.0], 8, RngSpec(3), threads=4)
    np.testing.assert_array_equal(a, b)


# --- stationary sampling --------------------------------------------------------------

def test_two_state_stationary_binomial():
    a, b, N = 1.0, 3.0, 400
    est = stationary_sample(two_state(a, b), N, 20, 2000, 1.0, RngSpec(6).generator())
    p = a / (a + b)
    x = est.cloud.points[:, 0]
    assert abs(x.mean() - p) < 4 * math.sqrt(p * (1 - p) / N / 2000 * 3)
    assert x.var() == pytest.approx(p * (1 - p) / N, rel=0.2)


def test_tiny_spacing_gives_nearly_identical_samples(sis):
    est = stationary_sample(sis, 1000, 10, 2, 1e-9, RngSpec(0).generator())
    assert abs(est.cloud.points[0, 0] - est.cloud.points[1, 0]) <= 1e-3


def test_sis_stationary_mean():
    est = stationary_sample(make_zoo_model("sis"), 10**4, 200, 1000, 1, RngSpec(1).generator())
    assert abs(est.cloud.mean()[0] - sis_fixed_point()) < 0.02
    assert est.truncations == 0 and not est.flagged


def test_logistic_two_cycle_clusters():
    a, b = logistic_two_cycle(3.2)
    est = stationary_sample(make_zoo_model("logistic", r=3.2), 10**4, 200, 1000, 1, RngSpec(2).generator())
    m1 = est.cloud.points[:, 1]
    near_a = np.abs(m1 - a) < 0.05
    near_b = np.abs(m1 - b) < 0.05
    assert np.all(near_a | near_b)
    assert abs(near_a.mean() - 0.5) <= 0.05


def test_stationary_rejects_bad_arguments(sis):
    with pytest.raises(ValueError):
        stationary_sample(sis, 100, 10, 1)
    with pytest.raises(ValueError):
        stationary_sample(sis, 100, 10, 10, 0.0)
    with pytest.raises(ValueError):
        stationary_sample(make_zoo_model("logistic"), 100, 10.5, 10)


def test_simulate_dispatches_by_kind():
    for name in ZOO:
        m = make_zoo_model(name)
        res = simulate(m, 50, m.domain.centroid, 2, RngSpec(0).generator())
        assert res.final.is_valid()
