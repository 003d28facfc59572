import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sabc.core import (Ensemble, PriorSample, bias_correction_weights_flat,
                       bias_correction_weights_prior, empirical_cov, ess, read_particles_csv,
                       resample, rng_stream, systematic_indices, write_particles_csv)


def _ens(n=5, d=2, seed=0):
    rng = np.random.default_rng(seed)
    return Ensemble(rng.normal(size=(n, d)), rng.random(n), rng.random(n), rng.normal(size=n))


def test_ess_examples():
    assert ess([1, 1, 1, 1]) == pytest.approx(4)
    assert ess([1, 0, 0]) == pytest.approx(1)
    assert ess([2, 1, 1]) == pytest.approx(16 / 6)


def test_ess_degenerate():
    with pytest.raises(ValueError, match="degenerate weights"):
        ess([0, 0, 0])


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=40).filter(lambda w: sum(w) > 0),
       st.floats(1e-3, 1e3))
@settings(max_examples=200, deadline=None)
def test_ess_bounds_and_scale(w, c):
    e = ess(w)
    assert 1 - 1e-9 <= e <= len(w) + 1e-9
    assert ess(np.array(w) * c) == pytest.approx(e, rel=1e-9)


def test_rng_stream_reproducible():
    a = rng_stream(5, 2).random(4)
    b = rng_stream(5, 2).random(4)
    c = rng_stream(5, 3).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_resample_point_mass():
    e = _ens()
    w = np.zeros(5)
    w[3] = 1
    for method in ("systematic", "multinomial"):
        out = resample(e, w, rng_stream(1), method)
        assert len(out) == 5
        assert np.all(out.theta == e.theta[3])
        assert np.all(out.nu == e.nu[3])


def test_resample_keeps_fields_together():
    e = _ens(50)
    out = resample(e, np.random.default_rng(2).random(50), rng_stream(3))
    for p in out:
        i = int(np.flatnonzero(e.rho == p.rho)[0])
        assert np.array_equal(e.theta[i], p.theta) and e.u[i] == p.u and e.nu[i] == p.nu


def test_uniform_multinomial_is_bootstrap():
    e = _ens(200)
    out = resample(e, np.ones(200), rng_stream(4), "multinomial")
    assert len(out) == 200
    assert len(np.unique(out.rho)) < 200


@pytest.mark.parametrize("method", ["systematic", "multinomial"])
def test_resample_expected_counts(method):
    w = np.array([0.5, 1.0, 2.5, 4.0, 2.0])
    n, reps = len(w), 10_000
    rng = rng_stream(11)
    e = Ensemble(np.arange(n)[:, None], np.arange(n, dtype=float))
    counts = np.zeros(n)
    sq = np.zeros(n)
    for _ in range(reps):
        c = np.bincount(resample(e, w, rng, method).rho.astype(int), minlength=n)
        counts += c
        sq += c * c
    mean = counts / reps
    expect = n * w / w.sum()
    sd = np.sqrt(np.maximum(sq / reps - mean ** 2, 1e-12) / reps)
    # multinomial variance bounds the systematic one
    bound = np.sqrt(n * (w / w.sum()) * (1 - w / w.sum()) / reps)
    assert np.all(np.abs(mean - expect) <= 3 * np.maximum(sd, bound) + 1e-12)


def test_systematic_uniform_is_identity():
    idx = systematic_indices(np.ones(7), rng_stream(0))
    assert np.array_equal(idx, np.arange(7))


def test_flat_correction():
    e = _ens(4)
    assert np.all(bias_correction_weights_flat(e, 0.0, 0.3) == 1)
    e.u[:] = 0.3
    assert np.allclose(bias_correction_weights_flat(e, 1.0, 0.3), np.exp(-1))
    with pytest.raises(ValueError):
        bias_correction_weights_flat(e, 1.0, 0.0)


def test_prior_correction():
    e = Ensemble(np.zeros((2, 1)), np.zeros(2), nu=np.array([0.0, np.log(2)]))
    assert np.allclose(bias_correction_weights_prior(e, 1.0), [1, 2])
    assert np.all(bias_correction_weights_prior(e, 0.0) == 1)


def test_empirical_cov():
    assert np.allclose(empirical_cov(np.ones((5, 2))), 0)
    assert np.allclose(empirical_cov([[0, 0], [2, 2]]), [[2, 2], [2, 2]])
    with pytest.raises(ValueError):
        empirical_cov([[1, 2]])
    C = np.array([[2.0, 0.6], [0.6, 1.0]])
    x = np.random.default_rng(0).multivariate_normal([0, 0], C, size=200_000)
    assert np.allclose(empirical_cov(x), C, atol=0.03)


def test_ensemble_rejects_negative_rho():
    with pytest.raises(ValueError):
        Ensemble(np.zeros((1, 1)), [-1.0])


def test_prior_sample_defaults():
    P = PriorSample(np.zeros((3, 1)), np.ones(3))
    assert len(P) == 3 and np.all(P.nu == 0)


def test_particle_csv_roundtrip(tmp_path):
    e = _ens(6, 3)
    w = np.linspace(0.1, 1, 6)
    path = tmp_path / "p.csv"
    write_particles_csv(path, e, w)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "theta_1,theta_2,theta_3,rho,u,nu,weight"
    back, w2 = read_particles_csv(path)
    assert np.array_equal(back.theta, e.theta) and np.array_equal(back.rho, e.rho)
    assert np.array_equal(back.u, e.u) and np.array_equal(back.nu, e.nu)
    assert np.array_equal(w2, w)
