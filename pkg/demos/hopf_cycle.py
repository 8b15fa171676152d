"""
A limit cycle carries the stationary mass
=========================================

The Hopf normal form has an unstable equilibrium at the origin and an
attracting circle of radius sqrt(mu). Its N-object version keeps moving along
the circle, so the stationary clouds spread over the whole cycle instead of
collapsing to a point.
"""

import numpy as np

from mflab.measures import cycle_measure, invariance_residual, support_distance
from mflab.model import make_zoo_model
from mflab.ode import detect_limit_set, recurrent_set_estimate
from mflab.sim import RngSpec, stationary_sample
from mflab.verify import spread_starts

model = make_zoo_model("hopf", mu=0.25, omega=1.0, eta=0.05)

cycle = detect_limit_set(model, [1.2, 0.3])
radii = np.hypot(cycle.points[:, 0], cycle.points[:, 1])
print(f"cycle: period {cycle.period:.6f}, radius {radii.min():.6f}..{radii.max():.6f}")

# The uniform measure on the cycle is invariant; on a 256-point grid the flow
# only moves it by a fraction of the grid spacing.
print("invariance residual of the cycle measure, t=1:",
      invariance_residual(cycle_measure(cycle), model, 1.0))

# The recurrent-set proxy: the cycle plus the origin.
rs = recurrent_set_estimate(model, spread_starts(model.domain))
print("limit sets found:", [ls.kind for ls in rs.limit_sets])

for N in (100, 1000, 10000):
    est = stationary_sample(model, N, rng=RngSpec(1).derive("demo", N).generator())
    mean, worst = support_distance(est.cloud, rs.points)
    r = np.hypot(est.cloud.points[:, 0], est.cloud.points[:, 1])
    print(f"N={N:>6}  mean distance to the proxy {mean:.4f} (max {worst:.3f}), "
          f"radius {r.mean():.3f} +- {r.std():.3f}, "
          f"rho_1={invariance_residual(est.cloud, model, 1.0):.4f}")
