"""
Annealing a sharp mixture posterior
===================================

A single observation y = 0 of a model whose likelihood is a narrow and a
wide Gaussian mixed in equal parts, under a flat prior on [-10, 10]. The
adaptive flat-prior scheme cools the tolerance by itself; we only fix the
entropy budget v/gamma and the number of simulations.
"""

import numpy as np
from scipy import stats

from sabc import RunConfig, run_flat, toy1_model
from sabc.oracle import toy1_posterior_cdf

cfg = RunConfig(algorithm="adaptive-flat", n=1000, v_over_gamma=3.0, max_sims=40_000,
                stop_accept_rate=0.0, seed=7)
res = run_flat(toy1_model(), cfg)

# the schedule: ensemble temperature U and the environment eps_e per epoch
U, eps_e, sims = res.trace_array("U"), res.trace_array("eps_e"), res.trace_array("sims")
for k in np.linspace(0, len(U) - 1, 8).astype(int):
    print(f"sims {int(sims[k]):6d}   U {U[k]:.4f}   eps_e {eps_e[k]:.4f}")

theta = res.ensemble.theta[:, 0]
print("posterior variance", theta.var(ddof=1), "(exact 0.505)")
print("KS distance to the exact posterior", stats.kstest(theta, toy1_posterior_cdf).statistic)
print("ESS", res.ess, "after", res.sims, "simulations")
