"""End-to-end annealing runs.

``run_flat`` and ``run_informative`` pick a particle at random for every update
and refresh the control temperatures once a fixed fraction of the ensemble has
been updated (a mean-field epoch). ``run_explicit`` sweeps the whole ensemble
once per tolerance of an explicit schedule.

With ``workers <= 1`` every random number comes from one generator, in a
fixed order; that sequential mode is the reference trajectory. With
``workers > 1`` each update draws a batch of distinct particles, the simulations
of a batch run on a thread pool with their own child streams, and the
accept/reject decisions are then applied in order.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import schedule as sch
from .core import (Ensemble, PriorSample, bias_correction_weights_distance,
                   bias_correction_weights_flat, bias_correction_weights_prior, empirical_cov, ess,
                   resample, rng_stream)
from .kernel import JumpCov, accept_prob_flat, accept_prob_informative, adapt_jump_cov, propose
from .metric import EnergyCdf, energy, fit_energy_cdf
from .models import ModelSpec
from .qmatrix import BinGrid, QMatrix, moments_from_g, stationary_vector

log = logging.getLogger(__name__)

ALGORITHMS = ("explicit", "adaptive-flat", "adaptive-informative")

FLAT_COLUMNS = ("epoch", "sims", "accept_rate", "U", "eps", "eps_e", "gamma", "ess", "S_irr_rate")
INFO_COLUMNS = ("epoch", "sims", "accept_rate", "U1", "U2", "eps1", "eps2", "eps1_e", "eps2_e",
                "L11", "L12", "L22", "ess", "S_irr_rate")


class BudgetExhausted(RuntimeError):
    pass


@dataclass
class RunConfig:
    """Settings of one run; defaults follow the published tuning.

    Exactly one of ``v`` and ``v_over_gamma`` drives the flat schedule; if
    ``v_over_gamma`` is set it wins, otherwise ``v`` is divided by the
    estimated flux coefficient.
    """

    algorithm: str = "adaptive-flat"
    n: int = 1000
    eps_init: float = 1.0
    max_sims: int = 40_000
    seed: int = 0
    v: float = 0.3
    v_over_gamma: float | None = None
    beta: float = 2.0
    s: float = 0.01
    a: float = 2.0
    delta: float = 0.0
    adapt_jump: bool = True
    mean_field_fraction: float = 0.1
    epoch_counts: str = "accepted"
    stop_accept_rate: float = 0.05
    stop_window: int = 1000
    resampler: str = "systematic"
    reestimate_gamma: bool = False
    # explicit schedule eps_k = c k^(-alpha/n)
    c: float = 1.0
    schedule_alpha: float = 2.0
    schedule_n: int = 1
    max_sweeps: int | None = None
    # informative algorithm
    onsager_pairs: int | None = 200_000
    calibration_rtol: float = 0.01
    calibration_max_iter: int = 20
    ess_floor: float = 30.0
    use_qmatrix: bool = True
    qmatrix_bins: int = 50
    workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.n < 2:
            raise ValueError("ensemble size must be at least 2")
        if not self.eps_init > 0:
            raise ValueError("eps_init must be positive")
        if not 0 < self.mean_field_fraction <= 1:
            raise ValueError("mean_field_fraction must lie in (0, 1]")
        if self.epoch_counts not in ("accepted", "attempted"):
            raise ValueError("epoch_counts must be 'accepted' or 'attempted'")
        if self.max_sims < 1:
            raise ValueError("max_sims must be positive")
        if self.v_over_gamma is not None and self.v_over_gamma < 0:
            raise ValueError("v_over_gamma must be nonnegative")
        if self.v is not None and self.v < 0:
            raise ValueError("v must be nonnegative")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    ensemble: Ensemble
    weights: np.ndarray
    trace: list[dict]
    columns: tuple[str, ...]
    totals: dict
    raw_ensemble: Ensemble
    prior: PriorSample
    theta_means: np.ndarray
    energy_cdf: EnergyCdf | None = None
    qmatrix: QMatrix | None = None
    config: RunConfig | None = None

    @property
    def sims(self) -> int:
        return self.totals["sims"]

    @property
    def ess(self) -> float:
        return self.totals["ess"]

    def trace_array(self, column: str) -> np.ndarray:
        return np.array([row[column] for row in self.trace], dtype=float)


# --- initialization --------------------------------------------------------------------

def initialize(model: ModelSpec, n: int, eps_init: float, rng: np.random.Generator, *,
               max_sims: int | None = None, batch: int | None = None) -> tuple[PriorSample, Ensemble]:
    """Rejection start: every joint-prior draw goes to ``P``; it also enters ``E``
    with probability ``exp(-rho/eps_init)``, until ``E`` holds ``n`` particles.

    Draws are made in batches; those past the ``n``-th acceptance are thrown
    away and not counted, so ``len(P)`` is the number of simulations used.
    """
    if not eps_init > 0:
        raise ValueError("eps_init must be positive")
    if batch is None:
        batch = int(model.extras.get("init_batch", 1000))
    budget = math.inf if max_sims is None else max_sims
    th_all, r_all, keep_all = [], [], []
    kept = drawn = 0
    while kept < n:
        if drawn >= budget:
            raise BudgetExhausted(
                f"simulation budget ({max_sims}) exhausted after {kept} of {n} initial particles; "
                f"increase eps_init (currently {eps_init}) or max_sims")
        size = int(min(batch, budget - drawn))
        th = model.sample_prior(rng, size)
        r = model.simulate_distance(th, rng)
        keep = rng.random(size) < np.exp(-r / eps_init)
        csum = np.cumsum(keep)
        if kept + csum[-1] >= n:
            stop = int(np.searchsorted(csum, n - kept)) + 1
            th, r, keep = th[:stop], r[:stop], keep[:stop]
        th_all.append(th)
        r_all.append(r)
        keep_all.append(keep)
        kept += int(keep.sum())
        drawn += len(r)
    theta = np.concatenate(th_all)
    rho = np.concatenate(r_all)
    keep = np.concatenate(keep_all)
    nu = np.asarray(model.potential(theta), dtype=float).reshape(len(rho))
    P = PriorSample(theta, rho, nu)
    E = Ensemble(theta[keep], rho[keep], nu=nu[keep])
    return P, E


# --- shared update machinery ------------------------------------------------------------

class _Run:
    """Book-keeping shared by the three algorithms."""

    def __init__(self, model: ModelSpec, cfg: RunConfig, rng: np.random.Generator):
        self.model = model
        self.cfg = cfg
        self.rng = rng
        self.sims = 0
        self.updates = 0
        self.forbidden = 0
        self.accepted = 0
        self.window = deque(maxlen=cfg.stop_window)
        self.window_accepts = 0
        self.epoch = 0
        self.epoch_updates = 0
        self.epoch_accepts = 0
        self.trace: list[dict] = []
        self.theta_means: list[np.ndarray] = []
        self.stop_reason = None
        self.rho0 = float("nan")
        self.pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
        self._child_seeds = np.random.SeedSequence(cfg.seed, spawn_key=(1,))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def note(self, accepted: bool) -> None:
        self.updates += 1
        self.epoch_updates += 1
        if len(self.window) == self.window.maxlen:
            self.window_accepts -= self.window[0]
        self.window.append(int(accepted))
        self.window_accepts += int(accepted)
        if accepted:
            self.accepted += 1
            self.epoch_accepts += 1

    def epoch_due(self, length: int) -> bool:
        count = self.epoch_accepts if self.cfg.epoch_counts == "accepted" else self.epoch_updates
        return count >= length

    def should_stop(self) -> bool:
        if self.sims >= self.cfg.max_sims:
            self.stop_reason = "max_sims"
            return True
        w = self.window
        if len(w) == w.maxlen and self.window_accepts < self.cfg.stop_accept_rate * len(w):
            self.stop_reason = "accept_rate"
            return True
        return False

    def simulate(self, thetas: np.ndarray) -> np.ndarray:
        """Distances for proposals; one simulation each."""
        self.sims += len(thetas)
        if self.pool is None or len(thetas) == 1:
            return self.model.simulate_distance(thetas, self.rng)
        streams = [np.random.Generator(np.random.Philox(s)) for s in self._child_seeds.spawn(len(thetas))]
        jobs = [self.pool.submit(self.model.simulate_distance, th[None], g)
                for th, g in zip(thetas, streams)]
        return np.array([j.result()[0] for j in jobs])

    def batch(self, n: int) -> np.ndarray:
        """Particles to update next: one at random, or distinct ones in parallel mode."""
        if self.pool is None:
            return np.array([self.rng.integers(n)])
        size = min(self.cfg.workers, n)
        return self.rng.choice(n, size=size, replace=False)

    def propose_batch(self, theta: np.ndarray, idx: np.ndarray, k: JumpCov):
        th = propose(theta[idx], k, self.rng)
        nu = np.asarray(self.model.potential(th), dtype=float).reshape(len(idx))
        ok = np.isfinite(nu)
        room = self.cfg.max_sims - self.sims
        if ok.sum() > room:
            # keep only as many in-support proposals as the budget allows
            cut = np.flatnonzero(ok)[room]
            idx, th, nu, ok = idx[:cut], th[:cut], nu[:cut], ok[:cut]
        self.forbidden += int(np.sum(~ok))
        r = np.full(len(idx), np.inf)
        if ok.any():
            r[ok] = self.simulate(th[ok])
        return idx, th, nu, r, ok

    def epoch_rate(self) -> float:
        return self.epoch_accepts / self.epoch_updates if self.epoch_updates else float("nan")

    def reset_epoch(self):
        self.epoch += 1
        self.epoch_updates = 0
        self.epoch_accepts = 0

    def finish(self, e: Ensemble, weights: np.ndarray, extra: dict) -> tuple[Ensemble, float]:
        uniform = np.all(weights == weights[0])
        n_eff = float(len(e)) if uniform else ess(weights)
        out = e.copy() if uniform else resample(e, weights, self.rng, self.cfg.resampler)
        self.totals = {"sims": self.sims, "updates": self.updates, "accepted": self.accepted,
                       "forbidden": self.forbidden,
                       "ess": n_eff, "epochs": self.epoch, "stop_reason": self.stop_reason,
                       "rho_mean_initial": self.rho0, "rho_mean_final": float(np.mean(e.rho)), **extra}
        return out, n_eff


def _jump(theta: np.ndarray, cfg: RunConfig) -> JumpCov:
    return adapt_jump_cov(empirical_cov(theta), cfg.beta, cfg.s)


def _epoch_length(cfg: RunConfig) -> int:
    return max(1, math.ceil(cfg.mean_field_fraction * cfg.n))


# --- Algorithm I: flat prior -------------------------------------------------------------

def run_flat(model: ModelSpec, cfg: RunConfig, rng: np.random.Generator | None = None,
             callback: Callable | None = None, energy_cdf: EnergyCdf | None = None) -> RunResult:
    """Adaptive annealing in the rank-transformed energy ``u = G(rho)``.

    After initialization, ``G`` is fitted to the prior sample and each epoch
    sets the environment temperature from the quartic minimal-entropy law at
    the ensemble mean energy. At the end the ensemble is reweighted by
    ``exp(-delta u / U)`` and resampled once.
    """
    if rng is None:
        rng = rng_stream(cfg.seed)
    run = _Run(model, cfg, rng)
    try:
        P, E = initialize(model, cfg.n, cfg.eps_init, rng, max_sims=cfg.max_sims)
        run.sims = len(P)
        run.rho0 = float(E.rho.mean())
        g = energy_cdf
        if g is None:
            g = fit_energy_cdf(P.rho, model.n, model.alpha, exponent=model.tail_exponent,
                               min_size=min(100, len(P)))
        E.u = np.asarray(energy(g, E.rho), dtype=float)
        theta, rho, u = E.theta, E.rho, E.u
        nu = E.nu
        K = _jump(theta, cfg)
        gamma = sch.estimate_gamma(theta, K, rng)
        v_over_gamma = cfg.v_over_gamma if cfg.v_over_gamma is not None else cfg.v / gamma
        U = float(u.mean())
        eps_e = sch.solve_quartic(U, v_over_gamma)
        run.trace.append(_flat_row(run, U, eps_e, gamma, float("nan"), float("nan")))
        run.theta_means.append(theta.mean(axis=0))
        length = _epoch_length(cfg)
        while not run.should_stop():
            idx, th, nu_new, r, ok = run.propose_batch(theta, run.batch(cfg.n), K)
            for j, i in enumerate(idx):
                acc = False
                if ok[j]:
                    u_new = float(energy(g, r[j]))
                    p = accept_prob_flat(u[i], u_new, eps_e)
                    acc = rng.random() < p
                    if acc:
                        theta[i], rho[i], u[i], nu[i] = th[j], r[j], u_new, nu_new[j]
                run.note(acc)
            if run.epoch_due(length):
                U_old, eps_e_old = U, eps_e
                dt = run.epoch_updates / cfg.n
                rate = run.epoch_rate()
                U = float(u.mean())
                if cfg.adapt_jump:
                    K = _jump(theta, cfg)
                if cfg.reestimate_gamma:
                    gamma = sch.estimate_gamma(theta, K, rng)
                    if cfg.v_over_gamma is None:
                        v_over_gamma = cfg.v / gamma
                eps_e = sch.solve_quartic(U, v_over_gamma)
                s_irr = sch.entropy_production_rate(sch.flat_force(U_old, eps_e_old), (U - U_old) / dt)
                run.reset_epoch()
                run.trace.append(_flat_row(run, U, eps_e, gamma, rate, s_irr))
                run.theta_means.append(theta.mean(axis=0))
                if callback is not None:
                    callback(run, E)
        E.generation = run.accepted
        eps_final = float(u.mean())
        w = bias_correction_weights_flat(E, cfg.delta, eps_final)
        final, _ = run.finish(E, w, {"eps_final": eps_final, "eps_e_final": eps_e, "gamma": gamma,
                                     "v_over_gamma": v_over_gamma, "prior_size": len(P)})
        return RunResult(final, w, run.trace, FLAT_COLUMNS, run.totals, E, P,
                         np.array(run.theta_means), energy_cdf=g, config=cfg)
    finally:
        run.close()


def _flat_row(run: _Run, U, eps_e, gamma, rate, s_irr) -> dict:
    return {"epoch": run.epoch, "sims": run.sims, "accept_rate": rate, "U": U, "eps": U,
            "eps_e": eps_e, "gamma": gamma, "ess": float(run.cfg.n), "S_irr_rate": s_irr}


# --- Algorithm II: informative prior ----------------------------------------------------

class _Calibrator:
    """``U(eps)`` from the prior sample, falling back to the move matrix."""

    def __init__(self, P: PriorSample, cfg: RunConfig, q: QMatrix | None):
        self.P = P
        self.cfg = cfg
        self.q = q
        self.source = "prior"

    def __call__(self, eps, ensemble_bins=None) -> np.ndarray:
        try:
            out = sch.calibrate_U_of_eps(self.P, eps, ess_floor=self.cfg.ess_floor)
            self.source = "prior"
            return out
        except sch.PriorSampleExhausted:
            if self.q is None or sum(self.q.counts.values()) == 0:
                raise
        try:
            gvec = stationary_vector(self.q, prefer=ensemble_bins)
            U, _ = moments_from_g(gvec, self.q.grid, eps)
        except Exception as exc:  # noqa: BLE001 - any failure means the Q route is unusable
            raise sch.PriorSampleExhausted(f"prior sample exhausted and Q-matrix unusable: {exc}")
        self.source = "qmatrix"
        return U


def track_intensities(eps_old, U_old, U_new, jac, calibrate, *, rtol: float = 0.01,
                      max_iter: int = 20, scale=None) -> tuple[np.ndarray, str]:
    """Move the intensities to match new ensemble means.

    A Jacobian step ``eps += jac^{-1} (U_new - U_old)`` is checked against
    ``calibrate(eps)``; while the calibrated means differ from ``U_new`` by more
    than ``rtol`` (relative, per component) the step is repeated from the
    calibrated point. If calibration is impossible the uncorrected step is kept.
    Returns the intensities and how they were obtained.
    """
    eps_o = np.asarray(eps_old, dtype=float)
    U_o = np.asarray(U_old, dtype=float)
    U_new = np.asarray(U_new, dtype=float)
    tol = rtol * np.maximum(np.abs(U_new), 0.0 if scale is None else np.asarray(scale))
    status = "unconverged"
    eps_n = eps_o
    for _ in range(max_iter):
        eps_n = sch.update_intensities(eps_o, U_new - U_o, jac)
        if not eps_n[0] > 0:
            eps_n[0] = 0.5 * eps_o[0]
        try:
            U_cal = calibrate(eps_n)
        except sch.PriorSampleExhausted:
            return eps_n, "incremental"
        if np.all(np.abs(U_new - U_cal) <= tol):
            return eps_n, "calibrated"
        eps_o, U_o = eps_n, U_cal
    return eps_n, status


def run_informative(model: ModelSpec, cfg: RunConfig, rng: np.random.Generator | None = None,
                    callback: Callable | None = None) -> RunResult:
    """Two-temperature annealing for priors that shape the posterior.

    The ensemble is summarized by the means of ``rho`` and ``nu``; their
    intensities ``(eps1, eps2)`` are tracked each epoch, the Onsager matrix is
    re-estimated and the controls satisfy ``F^T L F = v`` with
    ``eps2_e = -a eps2``. The final ensemble is reweighted by
    ``exp(eps2 nu) exp(-delta rho / eps1)`` and resampled once.
    """
    if rng is None:
        rng = rng_stream(cfg.seed)
    run = _Run(model, cfg, rng)
    try:
        P, E = initialize(model, cfg.n, cfg.eps_init, rng, max_sims=cfg.max_sims)
        run.sims = len(P)
        run.rho0 = float(E.rho.mean())
        theta, rho, nu = E.theta, E.rho, E.nu
        q = None
        if cfg.use_qmatrix:
            q = QMatrix(BinGrid.from_prior_sample(P, cfg.qmatrix_bins, cfg.qmatrix_bins))
        calibrate = _Calibrator(P, cfg, q)
        finite_nu = P.nu[np.isfinite(P.nu)]
        nu_flat = finite_nu.size == 0 or np.ptp(finite_nu) <= 1e-12 * max(1.0, np.abs(finite_nu).max())
        eps = np.array([cfg.eps_init, 0.0])
        U = np.array([rho.mean(), nu.mean()])
        K = _jump(theta, cfg)
        L = sch.estimate_onsager(E, P, K, eps, n_pairs=cfg.onsager_pairs, rng=rng)
        eps_e = np.array(sch.solve_force_quadratic(L, eps[0], eps[1], cfg.a, cfg.v))
        run.trace.append(_info_row(run, U, eps, eps_e, L, float("nan"), float("nan")))
        run.theta_means.append(theta.mean(axis=0))
        length = _epoch_length(cfg)
        tracking = []
        while not run.should_stop():
            idx, th, nu_new, r, ok = run.propose_batch(theta, run.batch(cfg.n), K)
            for j, i in enumerate(idx):
                acc = False
                if ok[j]:
                    p = accept_prob_informative(rho[i], r[j], nu[i], nu_new[j], eps_e[0], eps_e[1])
                    acc = rng.random() < p
                if q is not None:
                    src = q.grid.index(rho[i], nu[i])
                    dst = q.grid.index(r[j], nu_new[j]) if ok[j] else -1
                    q.record(src, dst)
                if acc:
                    theta[i], rho[i], nu[i] = th[j], r[j], nu_new[j]
                run.note(acc)
            if run.epoch_due(length):
                U_old, eps_old, eps_e_old = U, eps, eps_e
                dt = run.epoch_updates / cfg.n
                rate = run.epoch_rate()
                U = np.array([rho.mean(), nu.mean()])
                C = empirical_cov(np.column_stack([rho, nu]))
                jac = sch.jacobi_matrix(C[0, 0], C[0, 1], C[1, 1], eps_old[0])
                if nu_flat:
                    # constant prior potential: eps2 carries no information, keep it at 0
                    jac = np.array([[jac[0, 0], 0.0], [0.0, -1.0]])
                bins = q.grid.index(rho, nu) if q is not None else None
                eps, how = track_intensities(
                    eps_old, U_old, U, jac, lambda e: calibrate(e, bins),
                    rtol=cfg.calibration_rtol, max_iter=cfg.calibration_max_iter,
                    scale=np.sqrt(np.diag(C)))
                tracking.append(how)
                if cfg.adapt_jump:
                    K = _jump(theta, cfg)
                L = sch.estimate_onsager(E, P, K, eps, n_pairs=cfg.onsager_pairs, rng=rng)
                eps_e = np.array(sch.solve_force_quadratic(L, eps[0], eps[1], cfg.a, cfg.v))
                F = np.array([1 / eps_old[0] - 1 / eps_e_old[0], eps_old[1] - eps_e_old[1]])
                s_irr = sch.entropy_production_rate(F, (U - U_old) / dt)
                run.reset_epoch()
                run.trace.append(_info_row(run, U, eps, eps_e, L, rate, s_irr))
                run.theta_means.append(theta.mean(axis=0))
                if callback is not None:
                    callback(run, E)
        E.generation = run.accepted
        w = bias_correction_weights_prior(E, eps[1])
        if cfg.delta > 0:
            w = w * bias_correction_weights_distance(E, cfg.delta, eps[0])
        final, _ = run.finish(E, w, {"eps1_final": float(eps[0]), "eps2_final": float(eps[1]),
                                     "eps1_e_final": float(eps_e[0]), "eps2_e_final": float(eps_e[1]),
                                     "prior_size": len(P),
                                     "calibration": {k: tracking.count(k) for k in set(tracking)},
                                     "calibration_source": calibrate.source})
        return RunResult(final, w, run.trace, INFO_COLUMNS, run.totals, E, P,
                         np.array(run.theta_means), qmatrix=q, config=cfg)
    finally:
        run.close()


def _info_row(run: _Run, U, eps, eps_e, L, rate, s_irr) -> dict:
    return {"epoch": run.epoch, "sims": run.sims, "accept_rate": rate, "U1": U[0], "U2": U[1],
            "eps1": eps[0], "eps2": eps[1], "eps1_e": eps_e[0], "eps2_e": eps_e[1],
            "L11": L[0, 0], "L12": L[0, 1], "L22": L[1, 1], "ess": float(run.cfg.n),
            "S_irr_rate": s_irr}


# --- explicit schedule -----------------------------------------------------------------

def run_explicit(model: ModelSpec, cfg: RunConfig, rng: np.random.Generator | None = None,
                 callback: Callable | None = None) -> RunResult:
    """Full sweeps of the fixed-tolerance Metropolis kernel with ``eps_k = c k^(-alpha/n)``.

    Sweep ``k`` visits every particle once in index order. The jump covariance
    is set from the initial ensemble and never adapted.
    """
    if rng is None:
        rng = rng_stream(cfg.seed)
    sched = sch.ExplicitSchedule(cfg.c, cfg.schedule_alpha, cfg.schedule_n)
    run = _Run(model, cfg, rng)
    try:
        P, E = initialize(model, cfg.n, cfg.eps_init, rng, max_sims=cfg.max_sims)
        run.sims = len(P)
        run.rho0 = float(E.rho.mean())
        theta, rho, nu = E.theta, E.rho, E.nu
        K = _jump(theta, cfg)
        run.theta_means.append(theta.mean(axis=0))
        run.trace.append(_explicit_row(run, rho, float("nan")))
        k = 0
        eps_k = float("nan")
        while not run.should_stop():
            if cfg.max_sweeps is not None and k >= cfg.max_sweeps:
                run.stop_reason = "max_sweeps"
                break
            k += 1
            eps_k = sch.explicit_epsilon(sched, k)
            for i in range(cfg.n):
                if run.sims >= cfg.max_sims:
                    break
                idx, th, nu_new, r, ok = run.propose_batch(theta, np.array([i]), K)
                acc = False
                if ok[0]:
                    p = accept_prob_informative(rho[i], r[0], nu[i], nu_new[0], eps_k, 0.0)
                    acc = rng.random() < p
                    if acc:
                        theta[i], rho[i], nu[i] = th[0], r[0], nu_new[0]
                run.note(acc)
            rate = run.epoch_rate()
            run.reset_epoch()
            run.trace.append(_explicit_row(run, rho, eps_k, rate))
            run.theta_means.append(theta.mean(axis=0))
            if callback is not None:
                callback(run, E)
        E.generation = run.accepted
        if cfg.delta > 0 and np.isfinite(eps_k):
            w = bias_correction_weights_distance(E, cfg.delta, eps_k)
        else:
            w = np.ones(cfg.n)
        final, _ = run.finish(E, w, {"eps_final": eps_k, "sweeps": k, "prior_size": len(P)})
        return RunResult(final, w, run.trace, FLAT_COLUMNS, run.totals, E, P,
                         np.array(run.theta_means), config=cfg)
    finally:
        run.close()


def _explicit_row(run: _Run, rho, eps_k, rate=float("nan")) -> dict:
    return {"epoch": run.epoch, "sims": run.sims, "accept_rate": rate, "U": float(np.mean(rho)),
            "eps": float("nan"), "eps_e": eps_k, "gamma": float("nan"), "ess": float(run.cfg.n),
            "S_irr_rate": float("nan")}


RUNNERS = {
    "explicit": run_explicit,
    "adaptive-flat": run_flat,
    "adaptive-informative": run_informative,
}


def run(model: ModelSpec, cfg: RunConfig, rng: np.random.Generator | None = None,
        callback: Callable | None = None) -> RunResult:
    return RUNNERS[cfg.algorithm](model, cfg, rng, callback)


def write_trace_csv(path, result: RunResult) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(result.columns)
        for row in result.trace:
            out.writerow([repr(float(row[c])) if c not in ("epoch", "sims") else str(int(row[c]))
                          for c in result.columns])


def delta_for_ess(result: RunResult, target: float, *, hi: float = 1e3, tol: float = 1e-6) -> float:
    """Correction strength whose weights leave an effective sample size of ``target``.

    Uses the uncorrected ensemble of a finished run. ESS falls monotonically
    with ``delta``, so plain bisection suffices.
    """
    e = result.raw_ensemble
    n = len(e)
    if not 1 <= target <= n:
        raise ValueError("target ESS must lie in [1, N]")
    if result.columns is INFO_COLUMNS:
        eps1 = result.totals["eps1_final"]
        base = bias_correction_weights_prior(e, result.totals["eps2_final"])

        def weights(d):
            return base * bias_correction_weights_distance(e, d, eps1)
    elif result.energy_cdf is not None:
        def weights(d):
            return bias_correction_weights_flat(e, d, result.totals["eps_final"])
    else:
        def weights(d):
            return bias_correction_weights_distance(e, d, result.totals["eps_final"])
    lo = 0.0
    if ess(weights(lo)) < target:
        raise ValueError("target ESS is above the uncorrected ESS")
    if ess(weights(hi)) > target:
        raise ValueError("target ESS not reachable below delta = hi")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if ess(weights(mid)) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
