import numpy as np
import pytest

from sabc.core import PriorSample
from sabc.qmatrix import (BinGrid, QMatrix, ReducibleChainError, moments_from_g, record_attempt,
                          stationary_vector)
from sabc.schedule import calibrate_U_of_eps


def _grid():
    return BinGrid.uniform((0.0, 1.0), (0.0, 1.0), 2, 2)


def test_record_rules():
    q = QMatrix(_grid())
    record_attempt(q, (0.1, 0.1), (0.1, 0.2))
    assert q.counts == {(0, 0): 1}
    record_attempt(q, (0.1, 0.1), (5.0, 0.2))
    record_attempt(q, (0.1, 0.1), None)
    assert q.counts == {(0, 0): 3}
    record_attempt(q, (0.1, 0.1), (0.7, 0.7))
    assert q.counts[(3, 0)] == 1
    record_attempt(q, (9.0, 0.1), (0.1, 0.1))
    assert q.dropped == 1
    assert q.column_counts()[0] == 4


def test_normalized_column_stochastic():
    rng = np.random.default_rng(0)
    q = QMatrix(BinGrid.uniform((0, 1), (0, 1), 5, 5))
    for _ in range(5000):
        q.record(int(rng.integers(25)), int(rng.integers(-1, 25)))
    col = np.asarray(q.normalized().sum(axis=0)).ravel()
    assert np.allclose(col[col > 0], 1, atol=1e-12)


def test_stationary_examples():
    with pytest.raises(ReducibleChainError, match="reducible"):
        stationary_vector(np.eye(2))
    assert np.allclose(stationary_vector(np.array([[1, 0.5], [0, 0.5]])), [1, 0])
    assert np.allclose(stationary_vector(np.full((2, 2), 0.5)), [0.5, 0.5])


def test_stationary_prefers_ensemble_class():
    Q = np.eye(3)
    Q[:, 2] = [0.5, 0.0, 0.5]
    g = stationary_vector(Q, prefer=[1])
    assert np.allclose(g, [0, 1, 0])


def test_stationary_fixed_point():
    rng = np.random.default_rng(1)
    A = rng.random((30, 30))
    Q = A / A.sum(axis=0)
    g = stationary_vector(Q)
    assert np.abs(Q @ g - g).sum() < 1e-10 and g.sum() == pytest.approx(1)


def test_moments_flat_limit():
    grid = _grid()
    g = np.array([0.1, 0.2, 0.3, 0.4])
    U, L = moments_from_g(g, grid, [1e300, -1.0])
    assert np.allclose(U, g @ grid.centers())
    assert L is None


def test_moments_empty_support():
    with pytest.raises(ValueError):
        moments_from_g(np.zeros(4), _grid(), [1.0, 0.0])


def test_csv_export(tmp_path):
    q = QMatrix(_grid())
    q.record(0, 1)
    q.record(0, 1)
    q.record(2, -1)
    q.to_csv(tmp_path / "q.csv")
    rows = (tmp_path / "q.csv").read_text(encoding="utf-8").splitlines()
    assert rows == ["from_bin,to_bin,count", "0,1,2", "2,2,1"]


def _toy2_stationary(grid, eps_moves, n_moves, seed):
    """Populate Q from a Metropolis walk on the joint prior and return g."""
    rng = np.random.default_rng(seed)
    q = QMatrix(grid)
    m = 4000
    th = rng.normal(size=m)
    x = th + rng.normal(size=m)
    for _ in range(n_moves):
        th2 = th + 0.8 * rng.normal(size=m)
        x2 = th2 + rng.normal(size=m)
        r, r2 = (x - 3) ** 2 / 2, (x2 - 3) ** 2 / 2
        nu, nu2 = th * th / 2, th2 * th2 / 2
        src = grid.index(r, nu)
        dst = grid.index(r2, nu2)
        for s, t in zip(src, dst):
            q.record(int(s), int(t))
        acc = rng.random(m) < np.exp(-np.maximum((r2 - r) / eps_moves + (nu2 - nu), 0))
        th = np.where(acc, th2, th)
        x = np.where(acc, x2, x)
    return q, grid.index((x - 3) ** 2 / 2, th * th / 2)


def test_moments_agree_with_prior_calibration():
    # Q built from attempted moves recovers U(eps) within about one bin width
    grid = BinGrid.uniform((0.0, 6.0), (0.0, 6.0), 40, 40)
    q, bins = _toy2_stationary(grid, 1.0, 60, 2)
    g = stationary_vector(q, prefer=bins[bins >= 0])
    rng = np.random.default_rng(3)
    th = rng.normal(size=400_000)
    x = th + rng.normal(size=400_000)
    P = PriorSample(th[:, None], (x - 3) ** 2 / 2, th * th / 2)
    eps = [1.0, 0.0]
    U_q, L = moments_from_g(g, grid, eps, q.normalized())
    U_p = calibrate_U_of_eps(P, eps)
    width = 6.0 / 40
    assert abs(U_q[0] - U_p[0]) <= width
    assert abs(U_q[1] - U_p[1]) <= width
    assert np.allclose(L, L.T) and np.all(np.linalg.eigvalsh(L) > -1e-12)


def test_refining_grid_shrinks_gap():
    # g histogrammed directly from likelihood draws; exact U = (5/6, 5/6) at eps = (1, 0)
    rng = np.random.default_rng(0)
    th = rng.uniform(-3.47, 3.47, 2_000_000)
    x = th + rng.normal(size=th.size)
    r, nu = (x - 3) ** 2 / 2, th * th / 2
    gaps = []
    for nb in (10, 20):
        grid = BinGrid.uniform((0.0, 6.0), (0.0, 6.0), nb, nb)
        b = grid.index(r, nu)
        g = np.bincount(b[b >= 0], minlength=grid.size).astype(float)
        U, _ = moments_from_g(g, grid, [1.0, 0.0])
        gaps.append(np.abs(U - 5 / 6))
    assert np.all(gaps[1] <= 0.5 * gaps[0])


def test_recording_unaffected_by_jump_adaptation():
    # the attempted-move matrix discretizes the likelihood whatever proposal is used;
    # lumping into bins leaves a kernel-dependent error of order one bin width
    from sabc import RunConfig, run_informative, toy2_model
    est = []
    for adapt in (True, False):
        cfg = RunConfig(algorithm="adaptive-informative", n=500, eps_init=0.5, max_sims=15000,
                        seed=0, adapt_jump=adapt, onsager_pairs=20000)
        res = run_informative(toy2_model(), cfg)
        q = res.qmatrix
        g = stationary_vector(q, prefer=q.grid.index(res.raw_ensemble.rho, res.raw_ensemble.nu))
        est.append(moments_from_g(g, q.grid, [0.5, 0.0])[0])
    width = np.array([np.diff(q.grid.rho_edges)[0], np.diff(q.grid.nu_edges)[0]])
    assert np.all(np.abs(est[0] - est[1]) <= 2 * width)
