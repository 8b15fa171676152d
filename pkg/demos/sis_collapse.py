"""
Stationary clouds of an SIS epidemic collapse onto the fixed point
==================================================================

An SIS epidemic among N individuals with a small external infection rate has
a unique interior equilibrium. As N grows, the long-run distribution of the
infected fraction concentrates on it.
"""

import math

from mflab.measures import dirac, w1
from mflab.model import drift, make_zoo_model
from mflab.ode import find_fixed_point
from mflab.sim import RngSpec, stationary_sample

model = make_zoo_model("sis", beta=2.0, gamma=1.0, lambda0=0.01)

# The drift is -2m^2 + 0.99m + 0.01; Newton agrees with the quadratic formula.
ystar = find_fixed_point(model, [0.3]).point
print("Newton fixed point  ", ystar[0])
print("quadratic formula   ", (0.99 + math.sqrt(0.99**2 + 0.08)) / 4)
print("drift there         ", drift(model, ystar)[0])

# One long run per N, sampled once per time unit after a burn-in of 200.
for N in (100, 1000, 10000):
    est = stationary_sample(model, N, burn_in=200, n_samples=1000, spacing=1,
                            rng=RngSpec(0).derive("demo", N).generator())
    x = est.cloud.points[:, 0]
    print(f"N={N:>6}  mean={x.mean():.4f}  sd={x.std():.4f}  "
          f"W1 to the Dirac mass={w1(est.cloud, dirac(ystar)):.4f}  "
          f"split-half W1={est.split_half_w1:.4f}")

# The standard deviation shrinks like N^(-1/2): the Dirac mass is the only limit.
