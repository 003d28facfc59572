"""Particle ensembles, resampling and weighted-sample utilities."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``.

    Philox is used so that independent streams can be handed to workers
    without coordinating state; the same pair always yields the same variates.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Particle:
    theta: np.ndarray
    rho: float
    u: float = np.nan
    nu: float = np.nan


@dataclass
class Ensemble:
    """Fixed-size population stored column-wise.

    ``theta`` has shape ``(N, d)``; ``rho``, ``u`` and ``nu`` have shape
    ``(N,)``. ``u`` is only meaningful for the flat-prior algorithm, ``nu``
    for the informative one; unused columns hold NaN.
    """

    theta: np.ndarray
    rho: np.ndarray
    u: np.ndarray = None
    nu: np.ndarray = None
    generation: int = 0

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        n = self.theta.shape[0]
        self.rho = np.asarray(self.rho, dtype=float).reshape(n)
        self.u = np.full(n, np.nan) if self.u is None else np.asarray(self.u, dtype=float).reshape(n)
        self.nu = np.full(n, np.nan) if self.nu is None else np.asarray(self.nu, dtype=float).reshape(n)
        if np.any(self.rho < 0):
            raise ValueError("distances must be nonnegative")

    def __len__(self):
        return self.theta.shape[0]

    @property
    def dim(self) -> int:
        return self.theta.shape[1]

    def particle(self, i: int) -> Particle:
        return Particle(self.theta[i].copy(), float(self.rho[i]), float(self.u[i]), float(self.nu[i]))

    def __iter__(self):
        return (self.particle(i) for i in range(len(self)))

    def take(self, idx) -> "Ensemble":
        idx = np.asarray(idx, dtype=np.intp)
        return Ensemble(self.theta[idx].copy(), self.rho[idx].copy(), self.u[idx].copy(),
                        self.nu[idx].copy(), self.generation)

    def copy(self) -> "Ensemble":
        return self.take(np.arange(len(self)))


@dataclass
class PriorSample:
    """Every joint-prior draw made during initialization, in draw order."""

    theta: np.ndarray
    rho: np.ndarray
    nu: np.ndarray = field(default=None)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        m = self.theta.shape[0]
        self.rho = np.asarray(self.rho, dtype=float).reshape(m)
        self.nu = np.zeros(m) if self.nu is None else np.asarray(self.nu, dtype=float).reshape(m)

    def __len__(self):
        return self.theta.shape[0]


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    if not np.any(w > 0):
        raise ValueError("degenerate weights")
    return w


def ess(weights) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``."""
    w = _check_weights(weights)
    # rescale first; keeps tiny or huge weights from under/overflowing the squares
    w = w / w.max()
    return float(w.sum() ** 2 / np.dot(w, w))


def systematic_indices(weights, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    w = _check_weights(weights)
    n = w.size if size is None else size
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    positions = (rng.random() + np.arange(n)) / n
    idx = np.searchsorted(cdf, positions, side="right")
    return np.minimum(idx, w.size - 1)


def multinomial_indices(weights, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    w = _check_weights(weights)
    n = w.size if size is None else size
    return rng.choice(w.size, size=n, p=w / w.sum())


RESAMPLERS = {
    "systematic": systematic_indices,
    "multinomial": multinomial_indices,
}


def resample(e: Ensemble, weights, rng: np.random.Generator, method: str = "systematic") -> Ensemble:
    """Draw ``len(e)`` particles with replacement, probability proportional to ``weights``.

    Systematic resampling is the default. With uniform weights it returns every
    particle exactly once, so an unweighted ensemble passes through unchanged.
    """
    if len(np.asarray(weights)) != len(e):
        raise ValueError("need one weight per particle")
    try:
        draw = RESAMPLERS[method]
    except KeyError:
        raise ValueError(f"unknown resampling method {method!r}") from None
    return e.take(draw(weights, rng))


def bias_correction_weights_flat(e: Ensemble, delta: float, eps: float) -> np.ndarray:
    """Weights ``exp(-delta * u / eps)`` that sharpen the final ensemble in energy."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if np.any(np.isnan(e.u)):
        raise ValueError("particles carry no energies")
    return np.exp(-delta * e.u / eps)


def bias_correction_weights_prior(e: Ensemble, eps2: float) -> np.ndarray:
    """Weights ``exp(eps2 * nu)`` that undo an over- or under-weighted prior.

    The informative kernel leaves the parameter factor at ``exp(-(1 + eps2) nu)``;
    these weights restore ``exp(-nu)``.
    """
    if np.any(np.isnan(e.nu)):
        raise ValueError("particles carry no prior potential")
    a = eps2 * e.nu
    w = np.exp(a)
    if not np.all(np.isfinite(w)):
        w = np.exp(a - a.max())
    return w


def bias_correction_weights_distance(e: Ensemble, delta: float, eps1: float) -> np.ndarray:
    """``exp(-delta * rho / eps1)``; the raw-distance analogue of the flat correction."""
    if eps1 <= 0:
        raise ValueError("eps1 must be positive")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return np.exp(-delta * e.rho / eps1)


def empirical_cov(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least 2 samples for a covariance")
    return np.atleast_2d(np.cov(x, rowvar=False, ddof=1))


def weighted_mean(values, weights) -> np.ndarray:
    w = _check_weights(weights)
    return np.average(np.asarray(values, dtype=float), axis=0, weights=w)


# --- CSV -----------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_particles_csv(path, e: Ensemble, weights=None) -> None:
    """Write one row per particle: ``theta_1..theta_d,rho,u,nu,weight``.

    ``path`` may also be an open text file.
    """
    w = np.ones(len(e)) if weights is None else np.asarray(weights, dtype=float)
    header = [f"theta_{j + 1}" for j in range(e.dim)] + ["rho", "u", "nu", "weight"]
    if hasattr(path, "write"):
        _write_rows(path, header, e, w)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, header, e, w)


def _write_rows(fh, header, e: Ensemble, w) -> None:
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(header)
    for i in range(len(e)):
        out.writerow([_fmt(t) for t in e.theta[i]]
                     + [_fmt(e.rho[i]), _fmt(e.u[i]), _fmt(e.nu[i]), _fmt(w[i])])


def read_particles_csv(path) -> tuple[Ensemble, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("theta_"))
    if header != [f"theta_{j + 1}" for j in range(d)] + ["rho", "u", "nu", "weight"]:
        raise ValueError(f"unexpected particle CSV header: {header}")
    data = np.array(body, dtype=float).reshape(len(body), d + 4)
    e = Ensemble(data[:, :d], data[:, d], data[:, d + 1], data[:, d + 2])
    return e, data[:, d + 3]
