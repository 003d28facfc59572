"""Model definitions: a generic container plus the three benchmark problems."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .metric import rho as rho_distance

LN_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class ModelSpec:
    """Prior, prior potential, simulator and distance of one inference problem.

    ``sample_prior(rng, size)`` returns ``(size, dim)`` parameters;
    ``potential(theta)`` is ``-log f(theta)`` over the last axis and ``+inf``
    outside the support; ``simulate(thetas, rng)`` maps ``(k, dim)`` parameters
    to ``(k, n)`` outputs. Without ``distance_fn`` the distance to ``data`` is
    ``(1/alpha) sum |x - y|^alpha``.
    """

    name: str
    dim: int
    sample_prior: Callable[[np.random.Generator, int], np.ndarray]
    potential: Callable[[np.ndarray], np.ndarray]
    simulate: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    data: np.ndarray
    alpha: float = 2.0
    distance_fn: Callable[[np.ndarray], np.ndarray] | None = None
    flat_prior: bool = False
    tail_exponent: float | None = None
    param_names: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.atleast_1d(np.asarray(self.data, dtype=float))
        if not self.param_names:
            self.param_names = tuple(f"theta_{j + 1}" for j in range(self.dim))

    @property
    def n(self) -> int:
        return self.data.size

    def distance(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.distance_fn is not None:
            return np.asarray(self.distance_fn(xs), dtype=float)
        return rho_distance(xs, self.data, self.alpha)

    def simulate_distance(self, thetas, rng: np.random.Generator) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return self.distance(self.simulate(thetas, rng))

    def in_support(self, theta) -> bool:
        return bool(np.isfinite(self.potential(np.asarray(theta, dtype=float))))


# --- toy 1: flat prior, two-scale normal mixture ----------------------------------------

def toy1_model(sigma: float = 0.1, half_width: float = 10.0, y: float = 0.0) -> ModelSpec:
    """Uniform prior on ``[-10, 10]``; ``x ~ N(theta, 1)`` or ``N(theta, sigma^2)`` with equal odds.

    The unnormalized likelihood ``exp(-(x-t)^2/2) + (1/sigma) exp(-(x-t)^2/(2 sigma^2))``
    has two terms of equal mass ``sqrt(2 pi)``, hence the 1/2 : 1/2 mixture.
    """
    log_width = math.log(2 * half_width)

    def sample_prior(rng, size):
        return rng.uniform(-half_width, half_width, size=(size, 1))

    def potential(theta):
        t = np.asarray(theta, dtype=float)[..., 0]
        out = np.where(np.abs(t) <= half_width, log_width, np.inf)
        return float(out) if out.ndim == 0 else out

    def simulate(thetas, rng):
        thetas = np.atleast_2d(thetas)
        k = thetas.shape[0]
        scale = np.where(rng.random(k) < 0.5, 1.0, sigma)
        return thetas[:, :1] + scale[:, None] * rng.standard_normal((k, 1))

    return ModelSpec("toy1", 1, sample_prior, potential, simulate, np.array([y]), alpha=2.0,
                     flat_prior=True, param_names=("theta",),
                     extras={"sigma": sigma, "half_width": half_width,
                             "defaults": {"eps_init": 1.0, "max_sims": 40_000}})


# --- toy 2: normal prior, normal likelihood --------------------------------------------

def toy2_model(y: float = 3.0) -> ModelSpec:
    """``theta ~ N(0, 1)``, ``x ~ N(theta, 1)``; the posterior is ``N(y/2, 1/2)``."""

    def sample_prior(rng, size):
        return rng.standard_normal((size, 1))

    def potential(theta):
        t = np.asarray(theta, dtype=float)[..., 0]
        out = 0.5 * t * t + LN_SQRT_2PI
        return float(out) if np.ndim(out) == 0 else out

    def simulate(thetas, rng):
        thetas = np.atleast_2d(thetas)
        return thetas[:, :1] + rng.standard_normal((thetas.shape[0], 1))

    return ModelSpec("toy2", 1, sample_prior, potential, simulate, np.array([y]), alpha=2.0,
                     flat_prior=False, param_names=("theta",),
                     extras={"posterior_mean": y / 2, "posterior_var": 0.5,
                             "defaults": {"eps_init": 0.5, "max_sims": 40_000,
                                          "algorithm": "adaptive-informative"}})


# --- tuberculosis: birth / death / mutation process --------------------------------------

TB_CLUSTER_SIZES = np.array([30, 23, 15, 10, 8, 5, 4, 3, 2, 1])
TB_CLUSTER_COUNTS = np.array([1, 1, 1, 1, 1, 2, 4, 13, 20, 282])
TB_SAMPLE_SIZE = 473
TB_TARGET_POP = 10_000


@dataclass
class TbState:
    """Genotype cluster sizes of a bacterial population (largest first)."""

    sizes: np.ndarray

    def __post_init__(self):
        self.sizes = np.sort(np.asarray(self.sizes, dtype=np.int64))[::-1]
        if np.any(self.sizes < 1):
            raise ValueError("cluster sizes must be positive")

    @property
    def population(self) -> int:
        return int(self.sizes.sum())

    @property
    def n_clusters(self) -> int:
        return int(self.sizes.size)


def expand_clusters(sizes, counts) -> np.ndarray:
    return np.repeat(np.asarray(sizes, dtype=np.int64), np.asarray(counts, dtype=np.int64))


def load_cluster_table(path) -> np.ndarray:
    """Read a ``cluster_size,count`` CSV into a vector of cluster sizes."""
    sizes, counts = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["cluster_size", "count"]:
            raise ValueError(f"expected header cluster_size,count; got {reader.fieldnames}")
        for row in reader:
            sizes.append(int(row["cluster_size"]))
            counts.append(int(row["count"]))
    return expand_clusters(sizes, counts)


def cluster_stats(sizes) -> tuple[int, float]:
    """Number of clusters and gene diversity ``1 - sum (n_i / n)^2``."""
    sizes = np.asarray(sizes, dtype=float)
    sizes = sizes[sizes > 0]
    total = sizes.sum()
    return int(sizes.size), float(1.0 - np.sum((sizes / total) ** 2))


TB_OBSERVED = expand_clusters(TB_CLUSTER_SIZES, TB_CLUSTER_COUNTS)


@numba.njit(cache=True, nogil=True)
def _tb_events(a, d, target, seed, max_events):
    np.random.seed(seed)
    geno = np.empty(target, np.int64)       # genotype id of each living bacterium
    count = np.zeros(target + 1, np.int64)  # bacteria per genotype id
    free = np.empty(target + 1, np.int64)   # stack of unused genotype ids
    restarts = 0
    events = 0
    while True:
        for g in range(target + 1):
            count[g] = 0
            free[g] = target - g
        nfree = target + 1
        nfree -= 1
        g0 = free[nfree]
        geno[0] = g0
        count[g0] = 1
        pop = 1
        while 0 < pop < target:
            events += 1
            if max_events > 0 and events > max_events:
                return count, restarts, -1
            r = np.random.random()
            i = np.random.randint(0, pop)
            g = geno[i]
            if r < a:
                geno[pop] = g
                count[g] += 1
                pop += 1
            elif r < a + d:
                geno[i] = geno[pop - 1]
                pop -= 1
                count[g] -= 1
                if count[g] == 0:
                    free[nfree] = g
                    nfree += 1
            else:
                count[g] -= 1
                if count[g] == 0:
                    free[nfree] = g
                    nfree += 1
                nfree -= 1
                h = free[nfree]
                count[h] = 1
                geno[i] = h
        if pop == target:
            return count, restarts, events
        restarts += 1


def tb_simulate(a: float, d: float, target_pop: int = TB_TARGET_POP,
                rng: np.random.Generator | None = None, *, max_events: int = 0,
                return_info: bool = False):
    """Grow a population from one bacterium until it holds ``target_pop`` members.

    Each event picks a living bacterium uniformly at random. With probability
    ``a`` it divides, with probability ``d`` it dies, otherwise it mutates to a
    brand-new genotype. Extinction restarts the process from one bacterium; the
    random stream simply continues. Only the event order matters, so no
    clock is simulated.
    """
    if not (a > d >= 0 and 0 < a + d <= 1):
        raise ValueError(f"invalid rates a={a}, d={d}: need a > d >= 0 and 0 < a + d <= 1")
    if target_pop < 1:
        raise ValueError("target_pop must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    seed = int(rng.integers(0, 2 ** 32 - 1))
    count, restarts, events = _tb_events(float(a), float(d), int(target_pop), seed, int(max_events))
    if events < 0:
        raise RuntimeError(f"tb_simulate exceeded {max_events} events at a={a}, d={d}")
    state = TbState(count[count > 0])
    if return_info:
        return state, {"restarts": int(restarts), "events": int(events)}
    return state


def tb_stats(state: TbState | np.ndarray, sample_size: int = TB_SAMPLE_SIZE,
             rng: np.random.Generator | None = None) -> tuple[int, float]:
    """Genotype count and gene diversity of a sample drawn without replacement."""
    sizes = state.sizes if isinstance(state, TbState) else np.asarray(state, dtype=np.int64)
    if sizes.sum() < sample_size:
        raise ValueError("population smaller than sample size")
    if rng is None:
        rng = np.random.default_rng()
    if sizes.sum() == sample_size:
        drawn = sizes
    else:
        drawn = rng.multivariate_hypergeometric(sizes, sample_size)
    return cluster_stats(drawn)


def tb_distance(g_sim, h_sim, g_obs: float, h_obs: float, sample_size: int = TB_SAMPLE_SIZE):
    return np.abs(np.asarray(g_sim) - g_obs) / sample_size + np.abs(np.asarray(h_sim) - h_obs)


def tb_model(observed=None, target_pop: int = TB_TARGET_POP, sample_size: int = TB_SAMPLE_SIZE
             ) -> ModelSpec:
    """Birth (``a``) / death (``d``) rates with a flat prior on ``a > d, a + d <= 1``.

    ``observed`` is a vector of cluster sizes; defaults to the 473-culture table.
    The simulator output is ``(g, H)`` and the distance is
    ``|g* - g| / sample_size + |H* - H|``.
    """
    obs = TB_OBSERVED if observed is None else np.asarray(observed, dtype=np.int64)
    g_obs, h_obs = cluster_stats(obs)

    def sample_prior(rng, size):
        out = np.empty((size, 2))
        filled = 0
        while filled < size:
            cand = rng.random((max(2 * (size - filled), 4) * 2, 2))
            ok = cand[:, 0] > cand[:, 1]
            ok &= cand.sum(axis=1) <= 1
            cand = cand[ok][: size - filled]
            out[filled:filled + len(cand)] = cand
            filled += len(cand)
        return out

    def potential(theta):
        t = np.asarray(theta, dtype=float)
        a, d = t[..., 0], t[..., 1]
        inside = (a > d) & (d >= 0) & (a + d > 0) & (a + d <= 1) & (a <= 1)
        out = np.where(inside, -math.log(4.0), np.inf)
        return float(out) if out.ndim == 0 else out

    def simulate(thetas, rng):
        thetas = np.atleast_2d(thetas)
        out = np.empty((thetas.shape[0], 2))
        for i, (a, d) in enumerate(thetas):
            state = tb_simulate(a, d, target_pop, rng)
            out[i] = tb_stats(state, sample_size, rng)
        return out

    def distance(xs):
        return tb_distance(xs[:, 0], xs[:, 1], g_obs, h_obs, sample_size)

    return ModelSpec("tb", 2, sample_prior, potential, simulate, np.array([g_obs, h_obs]),
                     alpha=1.0, distance_fn=distance, flat_prior=True, tail_exponent=2.0,
                     param_names=("a", "d"),
                     extras={"g_obs": g_obs, "h_obs": h_obs, "target_pop": target_pop,
                             "sample_size": sample_size, "init_batch": 1,
                             "defaults": {"eps_init": 1.0, "max_sims": 2_000, "n": 200}})


MODELS = {
    "toy1": toy1_model,
    "toy2": toy2_model,
    "tb": tb_model,
}
