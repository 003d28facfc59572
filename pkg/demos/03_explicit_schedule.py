"""
A fixed cooling law and what it misses
======================================

The explicit scheme lowers the tolerance as c k^(-alpha/n) per sweep. Held
at one value it samples the tilted target exactly; cooled as k^-2 it cools
faster than the chain mixes and the ensemble freezes away from the posterior.
"""

from scipy import stats

from sabc import RunConfig, run_explicit, toy2_model
from sabc.core import rng_stream
from sabc.oracle import rejection_sample_pi_eps

model = toy2_model(3.0)

# frozen tolerance: compare with exact rejection draws at the same eps
frozen = run_explicit(model, RunConfig(algorithm="explicit", n=1000, c=0.5, schedule_alpha=0,
                                       eps_init=0.5, max_sweeps=50, max_sims=10**7,
                                       stop_accept_rate=0.0, seed=11))
ref = rejection_sample_pi_eps(model, 0.5, 20_000, rng_stream(0))
print("frozen eps = 0.5, KS vs rejection:",
      stats.ks_2samp(frozen.ensemble.theta[:, 0], ref.theta[:, 0]).statistic)

# k^-2 cooling: watch the ensemble mean run past the posterior mean 1.5
for alpha in (2.0, 0.5):
    res = run_explicit(model, RunConfig(algorithm="explicit", n=1000, c=1.0, schedule_alpha=alpha,
                                        eps_init=1.0, max_sweeps=40, max_sims=10**7,
                                        stop_accept_rate=0.0, seed=21))
    means = res.theta_means[:, 0]
    print(f"eps_k = k^-{alpha:g}: mean after 1, 10, 40 sweeps:",
          " ".join(f"{means[k]:.3f}" for k in (1, 10, 40)))
