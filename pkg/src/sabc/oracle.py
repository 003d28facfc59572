"""Ground truth used to check the samplers and solvers.

Nothing here calls into the schedule, kernel or driver code: the rejection
sampler draws from the joint prior directly, posteriors are closed forms and
the quartic reference is plain bisection on the original (rational) equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import Ensemble
from .models import ModelSpec


@dataclass
class OracleSample:
    theta: np.ndarray
    rho: np.ndarray
    nu: np.ndarray
    weights: np.ndarray
    acceptance_rate: float
    draws: int

    def to_ensemble(self) -> Ensemble:
        return Ensemble(self.theta, self.rho, nu=self.nu)


def rejection_sample_pi_eps(model: ModelSpec, eps: float, count: int, rng: np.random.Generator,
                            *, batch: int = 10_000, min_rate: float = 1e-6,
                            rate_check_after: int = 1_000_000) -> OracleSample:
    """I.i.d. draws from the joint prior tilted by ``exp(-rho/eps)``.

    Each joint-prior draw ``(theta, x)`` is kept with probability
    ``exp(-rho(x, y)/eps)``; ``eps = inf`` keeps everything.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    thetas, rhos = [], []
    kept = 0
    draws = 0
    while kept < count:
        th = model.sample_prior(rng, batch)
        r = model.simulate_distance(th, rng)
        draws += batch
        keep = rng.random(batch) < np.exp(-r / eps)
        thetas.append(th[keep])
        rhos.append(r[keep])
        kept += int(keep.sum())
        if draws >= rate_check_after and kept / draws < min_rate:
            raise RuntimeError(f"rejection oracle acceptance rate {kept / draws:.2e} below {min_rate}")
    theta = np.concatenate(thetas)[:count]
    rho = np.concatenate(rhos)[:count]
    nu = np.asarray(model.potential(theta), dtype=float).reshape(count)
    return OracleSample(theta, rho, nu, np.ones(count), kept / draws, draws)


def toy1_posterior_cdf(theta, sigma: float = 0.1, half_width: float = 10.0):
    """CDF of ``N(0,1)/2 + N(0,sigma^2)/2`` truncated to ``[-half_width, half_width]``."""
    def mix(t):
        return 0.5 * ndtr(t) + 0.5 * ndtr(t / sigma)

    t = np.clip(np.asarray(theta, dtype=float), -half_width, half_width)
    lo, hi = mix(-half_width), mix(half_width)
    out = (mix(t) - lo) / (hi - lo)
    return float(out) if out.ndim == 0 else out


def toy1_posterior_pdf(theta, sigma: float = 0.1, half_width: float = 10.0):
    t = np.asarray(theta, dtype=float)
    norm = 0.5 * (math.erf(half_width / math.sqrt(2)) + math.erf(half_width / (sigma * math.sqrt(2))))
    dens = 0.5 * (np.exp(-t * t / 2) + np.exp(-t * t / (2 * sigma * sigma)) / sigma) / math.sqrt(2 * math.pi)
    return np.where(np.abs(t) <= half_width, dens / norm, 0.0)


TOY1_POSTERIOR_VAR = 0.5 * 1.0 + 0.5 * 0.01


def toy2_posterior(y: float = 3.0) -> tuple[float, float]:
    """Mean and variance of the exact posterior ``N(y/2, 1/2)``."""
    return y / 2.0, 0.5


def toy2_pi_eps_marginal(y: float, eps: float) -> tuple[float, float]:
    """Mean and variance of the parameter marginal of the tilted toy-2 target.

    With ``rho = (x - y)^2 / 2`` the tilt is a Gaussian kernel of variance
    ``eps`` in ``x``, so the effective likelihood is ``N(y; theta, 1 + eps)``
    and conjugacy with the ``N(0, 1)`` prior gives
    ``N(y / (2 + eps), (1 + eps) / (2 + eps))``.
    """
    return y / (2.0 + eps), (1.0 + eps) / (2.0 + eps)


def bisect_quartic(U: float, v_over_gamma: float, *, rel_width: float = 1e-14) -> float:
    """Root of ``(U^2 - e^2)^2 / (2 e^3) = v/gamma`` on ``(0, U)`` by bisection.

    The left side falls from ``+inf`` to 0 across the interval, so the sign of
    ``lhs - v/gamma`` brackets the root everywhere. Bisection continues until
    the bracket is narrower than ``rel_width`` times its upper end.
    """
    U = min(float(U), 1.0 - 1e-9)
    c = float(v_over_gamma)
    if c == 0:
        return U
    lo, hi = 0.0, U
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= rel_width * hi:
            return mid
        lhs = (U * U - mid * mid) ** 2 / (2.0 * mid ** 3)
        if lhs > c:
            lo = mid
        else:
            hi = mid
