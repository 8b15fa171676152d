"""
An invariant measure that is not a Dirac mass
=============================================

Discrete-time occupancy chain: every object independently lands in state 1
with probability clamp(r m1 (1 - m1)). The limit is the logistic map, which at
r = 3.2 has an attracting 2-cycle {a, b}. The stationary clouds split between
a and b, approaching the map-invariant measure (delta_a + delta_b) / 2.
"""

import numpy as np

from mflab.measures import PointCloudMeasure, invariance_residual, w1
from mflab.model import make_zoo_model
from mflab.ode import detect_limit_set
from mflab.sim import RngSpec, stationary_sample

model = make_zoo_model("logistic", r=3.2)

cycle = detect_limit_set(model, [0.8, 0.2])
a, b = sorted(cycle.points[:, 1])
print(f"2-cycle of the map: a={a:.6f}, b={b:.6f}; unstable fixed point {1 - 1 / 3.2}")

target = PointCloudMeasure.uniform(np.array([[1 - a, a], [1 - b, b]]))
print("the two-point measure is invariant:", invariance_residual(target, model, 1))

for N in (100, 1000, 10000):
    est = stationary_sample(model, N, rng=RngSpec(2).derive("demo", N).generator())
    m1 = est.cloud.points[:, 1]
    near_a = np.mean(np.abs(m1 - a) < np.abs(m1 - b))
    print(f"N={N:>6}  mass near a {near_a:.3f}  W1 to the cycle measure {w1(est.cloud, target):.4f}  "
          f"one-step invariance residual {invariance_residual(est.cloud, model, 1):.4f}")
