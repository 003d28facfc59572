"""
Transmission rates from genotype clusters
=========================================

Birth rate a and death rate d of a branching process with mutation, fitted to
473 tuberculosis isolates through two summaries: the number of distinct
genotypes and the gene diversity. Each simulation grows a population to
10,000 bacteria, so the budget is kept to 2000 simulations.
"""

import numpy as np

from sabc import RunConfig, run_flat, tb_model

res = run_flat(tb_model(), RunConfig(algorithm="adaptive-flat", n=200, v_over_gamma=7.0,
                                     max_sims=2000, delta=0.2, seed=1))

a, d = res.ensemble.theta.T
print("environment temperature per epoch:", np.round(res.trace_array("eps_e"), 4))
print("mean distance %.4f -> %.4f" % (res.totals["rho_mean_initial"], res.totals["rho_mean_final"]))
print("ESS after delta = 0.2:", round(res.ess, 1))
print("a  mean %.3f  [%.3f, %.3f]" % (a.mean(), *np.quantile(a, [0.05, 0.95])))
print("d  mean %.3f  [%.3f, %.3f]" % (d.mean(), *np.quantile(d, [0.05, 0.95])))
print("net growth a - d: %.3f" % (a - d).mean())
