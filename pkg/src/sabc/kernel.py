"""Gaussian jump proposals and the Metropolis acceptance rules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETA = 2.0
S_FLOOR = 0.01


@dataclass(frozen=True)
class JumpCov:
    """Covariance ``K`` of the symmetric normal jump ``N(theta, K)``.

    The Cholesky factor is computed once at construction; a new ``JumpCov``
    is built at every adaptation.
    """

    K: np.ndarray
    beta: float = BETA
    s: float = S_FLOOR
    chol: np.ndarray = field(init=False, repr=False, compare=False)
    logdet: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        if K.shape[0] != K.shape[1]:
            raise ValueError("K must be square")
        if not np.allclose(K, K.T, rtol=1e-10, atol=0):
            raise ValueError("K must be symmetric")
        object.__setattr__(self, "K", K)
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            L = None
        object.__setattr__(self, "chol", L)
        logdet = 2.0 * np.sum(np.log(np.diag(L))) if L is not None else -np.inf
        object.__setattr__(self, "logdet", float(logdet))

    @property
    def dim(self) -> int:
        return self.K.shape[0]

    def density(self, theta, theta2):
        return jump_density(self, theta, theta2)


def adapt_jump_cov(sigma, beta: float = BETA, s: float = S_FLOOR) -> JumpCov:
    """``K = beta * Sigma + s * tr(Sigma) * I``."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if beta <= 0 or s <= 0:
        raise ValueError("beta and s must be positive")
    tr = np.trace(sigma)
    if not tr > 0:
        raise ValueError("collapsed ensemble: empirical covariance has zero trace")
    K = beta * sigma + s * tr * np.eye(sigma.shape[0])
    return JumpCov(0.5 * (K + K.T), beta, s)


def propose(theta, k: JumpCov, rng: np.random.Generator) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != k.dim:
        raise ValueError("dimension mismatch between theta and K")
    z = rng.standard_normal(theta.shape)
    if k.chol is None:
        # semidefinite K (e.g. the zero limit); fall back to an eigen factor
        w, v = np.linalg.eigh(k.K)
        return theta + z @ (v * np.sqrt(np.clip(w, 0, None))).T
    return theta + z @ k.chol.T


def jump_density(k: JumpCov, theta, theta2):
    """Normal density of a jump ``theta -> theta2``; broadcasts over leading axes."""
    if k.chol is None:
        raise ValueError("singular jump covariance")
    diff = np.asarray(theta2, dtype=float) - np.asarray(theta, dtype=float)
    if diff.shape[-1] != k.dim:
        raise ValueError("dimension mismatch between theta and K")
    sol = np.linalg.solve(k.chol, diff.reshape(-1, k.dim).T)
    maha = np.sum(sol * sol, axis=0).reshape(diff.shape[:-1])
    out = np.exp(-0.5 * (maha + k.logdet + k.dim * np.log(2 * np.pi)))
    return float(out) if out.ndim == 0 else out


def accept_prob_flat(u_old, u_new, eps_e: float):
    """``min(1, exp(-(u_new - u_old) / eps_e))``."""
    if eps_e <= 0:
        raise ValueError("eps_e must be positive")
    with np.errstate(over="ignore"):
        p = np.exp(-np.maximum(np.asarray(u_new, dtype=float) - u_old, 0.0) / eps_e)
    return float(p) if np.ndim(p) == 0 else p


def accept_prob_informative(rho_old, rho_new, nu_old, nu_new, eps1_e: float, eps2_e: float = 0.0):
    """``min(1, exp(-(rho_new - rho_old)/eps1_e - (1 + eps2_e)(nu_new - nu_old)))``.

    ``nu_new = inf`` (a jump outside the prior support) gives 0.
    """
    if eps1_e <= 0:
        raise ValueError("eps1_e must be positive")
    if 1 + eps2_e <= 0:
        raise ValueError("1 + eps2_e must be positive")
    with np.errstate(over="ignore", invalid="ignore"):
        expo = (np.asarray(rho_new, dtype=float) - rho_old) / eps1_e + (1 + eps2_e) * (
            np.asarray(nu_new, dtype=float) - nu_old)
        p = np.exp(-np.maximum(expo, 0.0))
    p = np.where(np.isnan(p), 0.0, p)
    return float(p) if np.ndim(p) == 0 else p
