"""
Fixed-time marginals converge at the central-limit rate
=======================================================

Start N objects near a point y0, run for a fixed time t and compare the
replica average of h(Y(t)) with h evaluated on the deterministic orbit. The
mean absolute error falls like N^(-1/2) for smooth h with a nonzero gradient.
The whole experiment, including the report files, is one call.
"""

import tempfile

from mflab.report import emit_report
from mflab.verify import ExperimentPlan, check_hypothesis1

plan = ExperimentPlan("sis", N_list=(100, 1000, 10000), t_list=(1.0, 3.0, 5.0), replicas=200, seed=0)
doc = check_hypothesis1(plan)

for key, fit in doc.trends["slopes"].items():
    if "bump" not in key:
        print(f"{key:>14}: slope {fit['slope']:+.3f}  95% CI [{fit['ci'][0]:+.3f}, {fit['ci'][1]:+.3f}]")
print("verdict:", doc.status)

out = tempfile.mkdtemp(prefix="mflab-")
for path in emit_report(doc, out):
    print("wrote", path)
