import math

import numpy as np
import pytest
from scipy import stats

from sabc import RunConfig, initialize, run, run_explicit, run_flat, run_informative
from sabc.core import ess, rng_stream
from sabc.driver import BudgetExhausted, delta_for_ess, track_intensities
from sabc.kernel import accept_prob_flat, accept_prob_informative
from sabc.metric import EnergyCdf, energy
from sabc.models import ModelSpec, toy1_model, toy2_model
from sabc.schedule import PriorSampleExhausted, calibrate_U_of_eps, jacobi_matrix


def unit_model():
    """theta ~ U(0, 1), x = theta, y = 0, alpha = 1: the distance is theta itself."""
    return ModelSpec(
        name="unit", dim=1,
        sample_prior=lambda rng, k: rng.random((k, 1)),
        potential=lambda th: np.where((th[..., 0] >= 0) & (th[..., 0] <= 1), 0.0, np.inf),
        simulate=lambda th, rng: th.copy(),
        data=[0.0], alpha=1.0, flat_prior=True)


# --- initialization ---------------------------------------------------------------------

def test_init_huge_eps_keeps_first_n_draws():
    P, E = initialize(toy2_model(), 300, 1e300, rng_stream(1))
    assert len(P) == 300
    np.testing.assert_array_equal(P.theta, E.theta)


def test_init_prior_size_matches_acceptance_probability():
    # under the toy2 joint prior E[exp(-rho)] = exp(-1.5)/sqrt(3)
    p = math.exp(-1.5) / math.sqrt(3)
    sizes = [len(initialize(toy2_model(), 1000, 1.0, rng_stream(s))[0]) for s in range(5)]
    sd = math.sqrt(1000 * (1 - p)) / p / math.sqrt(5)
    assert abs(np.mean(sizes) - 1000 / p) < 4 * sd


def test_init_energies_follow_tilted_prior():
    # for the unit model rho ~ U(0,1); accepted energies have density ∝ exp(-r/eps)
    eps = 0.2
    _, E = initialize(unit_model(), 2000, eps, rng_stream(3))
    cdf = lambda r: np.expm1(-r / eps) / math.expm1(-1 / eps)
    assert stats.kstest(E.rho, cdf).pvalue > 1e-3


def test_init_budget_exhaustion_names_eps_init():
    with pytest.raises(BudgetExhausted, match="eps_init"):
        initialize(toy1_model(), 1000, 1e-4, rng_stream(0), max_sims=500)


# --- shared behaviour -----------------------------------------------------------------

@pytest.mark.parametrize("algorithm", ["adaptive-flat", "adaptive-informative", "explicit"])
def test_runs_are_deterministic(algorithm):
    cfg = RunConfig(algorithm=algorithm, n=200, max_sims=3000, seed=5, onsager_pairs=5000)
    a = run(toy2_model(), cfg)
    b = run(toy2_model(), cfg)
    np.testing.assert_array_equal(a.ensemble.theta, b.ensemble.theta)
    assert a.trace == b.trace or np.allclose(
        [list(r.values()) for r in a.trace], [list(r.values()) for r in b.trace], equal_nan=True)


@pytest.mark.parametrize("algorithm", ["adaptive-flat", "adaptive-informative", "explicit"])
def test_simulation_accounting(algorithm):
    cfg = RunConfig(algorithm=algorithm, n=200, max_sims=4000, seed=2, onsager_pairs=5000)
    res = run(toy1_model(), cfg)
    t = res.totals
    assert t["sims"] == t["prior_size"] + t["updates"] - t["forbidden"]
    assert t["sims"] <= cfg.max_sims
    assert t["stop_reason"] in ("max_sims", "acceptance")


def test_zero_delta_keeps_full_ess():
    res = run_flat(toy1_model(), RunConfig(n=300, max_sims=5000, seed=1))
    assert res.ess == pytest.approx(300)
    assert np.ptp(res.weights) == 0


def test_positive_delta_reduces_ess():
    res = run_flat(toy1_model(), RunConfig(n=300, max_sims=5000, seed=1, delta=2.0))
    assert res.ess < 300


def test_delta_for_ess_hits_target():
    res = run_flat(toy1_model(), RunConfig(n=500, max_sims=8000, seed=4))
    d = delta_for_ess(res, 200)
    u = res.raw_ensemble.u
    w = np.exp(-d * u / u.mean())
    assert ess(w / w.sum()) == pytest.approx(200, rel=1e-3)


def test_parallel_workers_run_and_are_reproducible():
    cfg = RunConfig(n=200, max_sims=3000, seed=9, workers=2)
    a = run_flat(toy2_model(), cfg)
    b = run_flat(toy2_model(), cfg)
    np.testing.assert_array_equal(a.ensemble.theta, b.ensemble.theta)
    assert a.totals["sims"] == a.totals["prior_size"] + a.totals["updates"] - a.totals["forbidden"]


# --- flat prior algorithm -------------------------------------------------------------

def test_flat_mean_energy_trends_down():
    res = run_flat(toy1_model(), RunConfig(n=500, max_sims=20000, seed=3, stop_accept_rate=0.0))
    U = res.trace_array("U")
    assert len(U) >= 20
    tau = stats.kendalltau(np.arange(len(U)), U)
    assert tau.statistic < 0 and tau.pvalue < 0.01


def test_flat_env_temperature_below_ensemble():
    res = run_flat(toy1_model(), RunConfig(n=500, max_sims=10000, seed=3))
    U, e = res.trace_array("U"), res.trace_array("eps_e")
    assert np.all(e[1:] < U[1:])


def test_flat_without_entropy_budget_holds_equilibrium():
    # v = 0 sets eps_e = U each epoch; the ensemble then sits near the
    # stationary law of the last environment temperature in u-space
    model = toy1_model()
    res = run_flat(model, RunConfig(n=1000, max_sims=25000, seed=8, v_over_gamma=0.0,
                                    eps_init=0.3, stop_accept_rate=0.0))
    eps_e = res.trace_array("eps_e")[-1]
    g = res.energy_cdf
    rng = rng_stream(77)
    th = model.sample_prior(rng, 400_000)
    u = energy(g, model.simulate_distance(th, rng))
    keep = rng.random(len(u)) < np.exp(-u / eps_e)
    ref = th[keep, 0]
    assert len(ref) > 5000
    assert stats.ks_2samp(res.ensemble.theta[:, 0], ref).statistic < 0.07


def test_flat_identity_cdf_matches_informative_kernel():
    # with G the identity on [0, 1] and a flat prior the two acceptance rules
    # make the same decision for the same uniforms
    rng = rng_stream(0)
    r_old, r_new, z = rng.random(5000), rng.random(5000), rng.random(5000)
    g = EnergyCdf(np.array([1e-9, 1.0]), np.array([1e-9, 1.0]), 1.0)
    u_old, u_new = energy(g, r_old), energy(g, r_new)
    for e in (0.05, 0.3, 2.0):
        flat = z < accept_prob_flat(u_old, u_new, e)
        info = z < accept_prob_informative(r_old, r_new, np.zeros(5000), np.zeros(5000), e, 0.0)
        np.testing.assert_array_equal(flat, info)


def test_flat_accepts_external_energy_cdf():
    g = EnergyCdf(np.array([1e-9, 1.0]), np.array([1e-9, 1.0]), 1.0)
    res = run_flat(unit_model(), RunConfig(n=200, max_sims=3000, seed=1), energy_cdf=g)
    assert res.energy_cdf is g
    np.testing.assert_allclose(res.raw_ensemble.u, res.raw_ensemble.rho, atol=1e-12)


# --- informative prior algorithm ------------------------------------------------------

def test_track_intensities_converges_on_exact_calibration():
    # independent components with U_i = 1/eps_i; the jacobian is exact at the start
    calibrate = lambda eps: 1.0 / np.asarray(eps)
    eps0 = np.array([1.0, 2.0])
    jac = np.diag(-1 / eps0**2)
    U_new = np.array([1.2, 0.45])
    eps, status = track_intensities(eps0, 1 / eps0, U_new, jac, calibrate)
    assert status == "calibrated"
    np.testing.assert_allclose(1 / eps, U_new, rtol=0.01)


def test_track_intensities_falls_back_when_calibration_fails():
    def calibrate(eps):
        raise PriorSampleExhausted("empty")
    eps0 = np.array([1.0, 0.0])
    jac = np.array([[-1.0, 0.0], [0.0, -1.0]])
    eps, status = track_intensities(eps0, np.array([1.0, 0.0]), np.array([0.9, 0.0]), jac, calibrate)
    assert status == "incremental"
    np.testing.assert_allclose(eps, [1.1, 0.0])


def test_jacobi_from_prior_sample_is_consistent():
    P, _ = initialize(toy2_model(), 500, 1.0, rng_stream(1))
    eps = np.array([0.8, 0.1])
    w = np.exp(-P.rho / eps[0] - eps[1] * P.nu)
    w /= w.sum()
    m = np.array([w @ P.rho, w @ P.nu])
    d = np.vstack([P.rho, P.nu]) - m[:, None]
    c = (d * w) @ d.T
    jac = jacobi_matrix(c[0, 0], c[0, 1], c[1, 1], eps[0])
    h = 1e-5
    for j in range(2):
        step = np.eye(2)[j] * h
        fd = (calibrate_U_of_eps(P, eps + step) - calibrate_U_of_eps(P, eps - step)) / (2 * h)
        np.testing.assert_allclose(jac[:, j], fd, rtol=1e-4, atol=1e-9)


def test_informative_counter_force_shrinks_eps2():
    base = dict(algorithm="adaptive-informative", n=400, max_sims=12000, eps_init=0.5,
                onsager_pairs=20000)
    mags = {}
    for a in (0.0, 2.0):
        vals = []
        for seed in range(3):
            res = run_informative(toy2_model(), RunConfig(a=a, seed=seed, **base))
            vals.append(np.mean(np.abs(res.trace_array("eps2"))))
        mags[a] = np.mean(vals)
    assert mags[2.0] < mags[0.0]


def test_informative_survives_exhausted_prior_sample():
    # an unreachable ESS floor makes every prior-sample calibration fail
    cfg = RunConfig(algorithm="adaptive-informative", n=200, max_sims=1850, seed=1,
                    ess_floor=1e9, onsager_pairs=5000)
    res = run_informative(toy2_model(), cfg)
    assert res.totals["calibration_source"] == "qmatrix" or "incremental" in res.totals["calibration"]
    assert len(res.trace) > 1
    assert np.all(np.isfinite(res.trace_array("eps1")))


# --- explicit schedule ----------------------------------------------------------------

def test_explicit_schedule_values():
    cfg = RunConfig(algorithm="explicit", n=100, max_sims=2500, c=0.7, schedule_alpha=2,
                    schedule_n=1, eps_init=5.0, seed=0, stop_accept_rate=0.0)
    res = run_explicit(toy2_model(), cfg)
    k = res.trace_array("epoch")[1:]
    np.testing.assert_allclose(res.trace_array("eps_e")[1:], 0.7 * k ** -2.0)


def test_explicit_zero_alpha_freezes_eps():
    cfg = RunConfig(algorithm="explicit", n=100, max_sims=2000, c=0.4, schedule_alpha=0,
                    eps_init=5.0, seed=0, stop_accept_rate=0.0)
    res = run_explicit(toy2_model(), cfg)
    np.testing.assert_allclose(res.trace_array("eps_e")[1:], 0.4)


def test_explicit_sweep_cap():
    cfg = RunConfig(algorithm="explicit", n=100, max_sims=100_000, max_sweeps=7, eps_init=5.0,
                    seed=0, stop_accept_rate=0.0)
    res = run_explicit(toy2_model(), cfg)
    assert res.totals["sweeps"] == 7
