"""Annealing control laws.

Three schedules are provided:

* an explicit power law ``eps_k = c * k^(-alpha/n)``;
* the flat-prior adaptive law, where the environment temperature ``eps_e`` is
  the root of ``(U^2 - eps_e^2)^2 / (2 eps_e^3) = v/gamma`` in ``(0, U)``;
* the informative-prior law, where the two intensities ``(eps1, eps2)`` are
  tracked through the Jacobian of the ensemble means and the controls solve
  ``F^T L F = v`` under the counter force ``eps2_e = -a eps2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Ensemble, PriorSample, ess
from .kernel import JumpCov


class PriorSampleExhausted(RuntimeError):
    """The prior sample no longer resolves the current temperatures."""


class EntropyBudgetError(ValueError):
    """No cooling control satisfies the entropy-production budget."""


class IntensityTrackingError(ValueError):
    pass


# --- explicit --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExplicitSchedule:
    """``eps_k = c * k^(-alpha/n)``. ``alpha = 0`` freezes the tolerance at ``c``."""

    c: float = 1.0
    alpha: float = 2.0
    n: int = 1

    def __post_init__(self):
        if self.c <= 0 or self.alpha < 0 or self.n < 1:
            raise ValueError("need c > 0, alpha >= 0, n >= 1")

    def __call__(self, k: int) -> float:
        return explicit_epsilon(self, k)


def explicit_epsilon(sched: ExplicitSchedule, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return sched.c * float(k) ** (-sched.alpha / sched.n)


# --- flat prior ------------------------------------------------------------------------

@dataclass
class FlatScheduleState:
    U: float
    eps_e: float
    gamma: float
    v_over_gamma: float


def mean_energy_of_temperature(eps):
    """Mean of ``u`` under the density proportional to ``exp(-u/eps)`` on ``[0, 1]``.

    Uses ``eps - 1/expm1(1/eps)``; for large ``eps`` that difference cancels,
    so the Bernoulli series ``1/2 - x/12 + x^3/720 - x^5/30240`` in ``x = 1/eps``
    takes over.
    """
    e = np.asarray(eps, dtype=float)
    if np.any(e <= 0):
        raise ValueError("eps must be positive")
    x = 1.0 / e
    with np.errstate(over="ignore"):
        direct = e - 1.0 / np.expm1(x)
    series = 0.5 - x / 12 + x ** 3 / 720 - x ** 5 / 30240
    out = np.where(x < 1e-2, series, direct)
    return float(out) if out.ndim == 0 else out


def estimate_gamma(thetas, k: JumpCov, rng: np.random.Generator | None = None,
                   max_pairs: int = 10_000) -> float:
    """Average jump density between distinct posterior-like parameter vectors.

    For two independent draws from the posterior this averages to the flux
    coefficient ``gamma``. All pairs are used when there are at most
    ``max_pairs`` of them, otherwise ``max_pairs`` random ones.
    """
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    if th.shape[0] == 1 and th.shape[1] != k.dim:
        th = th.T
    m = th.shape[0]
    if m < 2:
        raise ValueError("need at least 2 parameter vectors")
    if m * (m - 1) // 2 <= max_pairs:
        i, j = np.triu_indices(m, 1)
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        i = rng.integers(m, size=max_pairs)
        j = (i + 1 + rng.integers(m - 1, size=max_pairs)) % m
    return float(np.mean(k.density(th[i], th[j])))


def _quartic_poly(e: float, U: float, c: float) -> float:
    d = (U - e) * (U + e)
    return d * d - 2.0 * c * e ** 3


def quartic_leading_term(U: float, v_over_gamma: float) -> float:
    """``(gamma / 2v)^(1/3) * U^(4/3)``, the small-``U`` asymptote of the root."""
    return (1.0 / (2.0 * v_over_gamma)) ** (1.0 / 3.0) * U ** (4.0 / 3.0)


def solve_quartic(U: float, v_over_gamma: float, *, max_iter: int = 200) -> float:
    """Environment temperature for mean energy ``U``.

    Returns the unique root in ``(0, U)`` of ``(U^2 - e^2)^2 = 2 (v/gamma) e^3``,
    the polynomial form of the minimal-entropy-production condition. Newton
    steps start from the leading-order term and fall back to bisection whenever
    they leave the current bracket.
    """
    if not U > 0:
        raise ValueError("U must be positive")
    if v_over_gamma < 0:
        raise ValueError("v/gamma must be nonnegative")
    U = min(float(U), 1.0 - 1e-9)
    c = float(v_over_gamma)
    if c == 0:
        return U
    lead = quartic_leading_term(U, c)
    lo, hi = min(lead / 10.0, U / 10.0), U
    while _quartic_poly(lo, U, c) <= 0:
        lo /= 10.0
    x = min(max(lead, lo), hi)
    scale = max(1.0, c)
    for _ in range(max_iter):
        f = _quartic_poly(x, U, c)
        if f > 0:
            lo = x
        else:
            hi = x
        lhs = (U - x) * (U + x)
        lhs = lhs * lhs / (2.0 * x ** 3)
        if abs(lhs - c) <= 1e-12 * scale or hi - lo <= 4 * np.finfo(float).eps * hi:
            return x
        df = -4.0 * x * (U - x) * (U + x) - 6.0 * c * x * x
        step = x - f / df if df != 0 else np.nan
        x = step if lo < step < hi else 0.5 * (lo + hi)
    raise RuntimeError(f"quartic schedule did not converge (U={U}, v/gamma={c})")


def flat_epsilon_from_flux(U: float, Udot: float, gamma: float) -> float:
    """``sqrt(U^2 + Udot/gamma)``: the environment temperature implied by a flux."""
    r = U * U + Udot / gamma
    if r < 0:
        raise ValueError("linear regime violated: U^2 + Udot/gamma < 0")
    return math.sqrt(r)


def flat_flux(U: float, eps_e: float, gamma: float) -> float:
    """Linear-response flux ``-gamma (U^2 - eps_e^2)`` with ``eps ~ U``."""
    return -gamma * (U * U - eps_e * eps_e)


def flat_force(eps: float, eps_e: float) -> float:
    return 1.0 / eps - 1.0 / eps_e


# --- informative prior -----------------------------------------------------------------

@dataclass
class InfoScheduleState:
    U: np.ndarray
    eps: np.ndarray
    eps_e: np.ndarray
    L: np.ndarray
    jac: np.ndarray
    v: float
    a: float

    @property
    def force(self) -> np.ndarray:
        return np.array([1.0 / self.eps[0] - 1.0 / self.eps_e[0], self.eps[1] - self.eps_e[1]])


def jacobi_matrix(var_rho: float, cov_rho_nu: float, var_nu: float, eps1: float) -> np.ndarray:
    """Derivative of the ensemble means ``(E rho, E nu)`` w.r.t. ``(eps1, eps2)``."""
    if eps1 <= 0:
        raise ValueError("eps1 must be positive")
    e2 = eps1 * eps1
    return np.array([[var_rho / e2, -cov_rho_nu],
                     [cov_rho_nu / e2, -var_nu]])


def update_intensities(eps_old, dU, jac, *, det_floor: float = 1e-300) -> np.ndarray:
    """``eps_old + jac^{-1} dU``."""
    jac = np.asarray(jac, dtype=float)
    det = np.linalg.det(jac)
    scale = np.prod(np.linalg.norm(jac, axis=1))
    if not np.isfinite(det) or abs(det) <= max(det_floor, 1e-13 * scale):
        raise IntensityTrackingError("intensity tracking singular: Jacobi matrix not invertible")
    return np.asarray(eps_old, dtype=float) + np.linalg.solve(jac, np.asarray(dU, dtype=float))


def prior_sample_weights(P: PriorSample, eps) -> np.ndarray:
    """Unnormalized importance weights ``exp(-rho/eps1 - eps2 nu)`` over ``P``."""
    eps1, eps2 = float(eps[0]), float(eps[1])
    if eps1 <= 0:
        raise ValueError("eps1 must be positive")
    a = -P.rho / eps1 - eps2 * P.nu
    return np.exp(a - a.max())


def calibrate_U_of_eps(P: PriorSample, eps, *, ess_floor: float = 30.0) -> np.ndarray:
    """Equilibrium means ``(E rho, E nu)`` at intensities ``eps``, estimated from ``P``.

    ``P`` already carries one factor ``exp(-nu)``; reweighting by
    ``exp(-rho/eps1 - eps2 nu)`` gives the target with ``exp(-(1+eps2) nu)``.
    """
    w = prior_sample_weights(P, eps)
    n_eff = ess(w)
    if n_eff < ess_floor:
        raise PriorSampleExhausted(
            f"prior sample exhausted: ESS {n_eff:.1f} < {ess_floor} at eps={tuple(map(float, eps))}")
    return np.array([np.dot(w, P.rho), np.dot(w, P.nu)]) / w.sum()


def estimate_onsager(E: Ensemble, P: PriorSample, k, eps, *, n_pairs: int | None = None,
                     rng: np.random.Generator | None = None, chunk: int = 200_000) -> np.ndarray:
    """Monte Carlo estimate of the 2x2 Onsager matrix at intensities ``eps``.

    Each ensemble member ``z`` (distributed as the current equilibrium) is
    paired with prior-sample members ``z'``. Weighting a pair by
    ``k(theta, theta') / f(theta') = k(theta, theta') exp(nu')`` turns the
    prior draw into a proposal from ``z``; the pair then contributes
    ``du_i du_j`` when the move from ``z`` to ``z'`` is downhill in the
    equilibrium energy ``rho/eps1 + (1 + eps2) nu``.

    ``k`` is anything with a vectorized ``density(theta, theta2)`` method.
    With ``n_pairs=None`` the full cross product is summed; otherwise that many
    uniformly random pairs are drawn.
    """
    eps1, eps2 = float(eps[0]), float(eps[1])
    n, m = len(E), len(P)
    if n == 0 or m == 0:
        raise ValueError("empty ensemble or prior sample")
    if n_pairs is None:
        total = n * m
        draw = None
    else:
        if rng is None:
            raise ValueError("rng required when subsampling pairs")
        total = int(n_pairs)
        draw = rng
    acc = np.zeros(3)
    wsum = 0.0
    done = 0
    while done < total:
        size = min(chunk, total - done)
        if draw is None:
            flat = np.arange(done, done + size)
            i, j = flat // m, flat % m
        else:
            i = draw.integers(n, size=size)
            j = draw.integers(m, size=size)
        done += size
        dr = E.rho[i] - P.rho[j]
        dn = E.nu[i] - P.nu[j]
        downhill = dr / eps1 + (1 + eps2) * dn >= 0
        w = k.density(E.theta[i], P.theta[j]) * np.exp(P.nu[j])
        w = np.where(downhill, w, 0.0)
        wsum += w.sum()
        acc += np.array([np.dot(w, dr * dr), np.dot(w, dr * dn), np.dot(w, dn * dn)])
    if not wsum > 0:
        raise ValueError("all Onsager pair weights are zero")
    acc /= total
    L = np.array([[acc[0], acc[1]], [acc[1], acc[2]]])
    return L + 1e-12 * max(np.trace(L), 1e-300) * np.eye(2)


def solve_force_quadratic(L, eps1: float, eps2: float, a: float, v: float) -> tuple[float, float]:
    """Controls ``(eps1_e, eps2_e)`` with ``eps2_e = -a eps2`` and ``F^T L F = v``.

    ``F = (1/eps1 - 1/eps1_e, eps2 - eps2_e)``. Of the two roots for the first
    force component the negative one is taken, which cools:
    ``0 < eps1_e < eps1``.
    """
    L = np.asarray(L, dtype=float)
    if eps1 <= 0 or v <= 0:
        raise ValueError("need eps1 > 0 and v > 0")
    eps2_e = -a * eps2
    f2 = eps2 - eps2_e
    l11, l12, l22 = L[0, 0], 0.5 * (L[0, 1] + L[1, 0]), L[1, 1]
    if l11 <= 0:
        raise ValueError("Onsager matrix must be positive definite")
    b = l12 * f2
    c = l22 * f2 * f2 - v
    disc = b * b - l11 * c
    if disc < 0:
        raise EntropyBudgetError(
            "prior-force exceeds entropy budget: no real cooling control; raise v or lower a")
    f1 = (-b - math.sqrt(disc)) / l11
    if not f1 < 0:
        raise EntropyBudgetError(
            "prior-force exceeds entropy budget: no cooling root; raise v or lower a")
    return 1.0 / (1.0 / eps1 - f1), eps2_e


def entropy_production_rate(F, Udot) -> float:
    F = np.atleast_1d(np.asarray(F, dtype=float))
    Udot = np.atleast_1d(np.asarray(Udot, dtype=float))
    if F.shape != Udot.shape:
        raise ValueError("force and flux dimensions differ")
    return float(np.dot(F, Udot))
