"""
Prior and data in conflict
==========================

theta ~ N(0, 1), x ~ N(theta, 1), observed y = 3. The exact posterior is
N(1.5, 0.5), halfway between prior and data. The informative scheme tracks
two intensities, one for the distance and one for the prior potential, and
removes the prior's leftover weight at the end.
"""

import numpy as np

from sabc import RunConfig, run_informative, toy2_model
from sabc.oracle import toy2_posterior

cfg = RunConfig(algorithm="adaptive-informative", n=1000, v=0.3, a=2, eps_init=0.5,
                delta=0.2, max_sims=40_000, seed=3)
res = run_informative(toy2_model(3.0), cfg)

e1, e2 = res.trace_array("eps1"), res.trace_array("eps2")
print("eps1 from", e1[0], "to", e1[-1])
print("eps2 stays small thanks to the counter force:", np.abs(e2).max())
print("where the intensities came from:", res.totals["calibration"], res.totals["calibration_source"])

theta = res.raw_ensemble.theta[:, 0]
print("before corrections  mean %.3f  var %.3f" % (theta.mean(), theta.var(ddof=1)))
theta = res.ensemble.theta[:, 0]
print("after corrections   mean %.3f  var %.3f" % (theta.mean(), theta.var(ddof=1)))
print("exact               mean %.3f  var %.3f" % toy2_posterior(3.0))
