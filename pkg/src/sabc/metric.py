"""Distance to data and the rank transform that turns distance into energy."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


def rho(x, y, alpha: float = 2.0):
    """``(1/alpha) * sum |x_i - y_i|^alpha`` over the last axis."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1:] != y.shape[-1:]:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return np.sum(np.abs(x - y) ** alpha, axis=-1) / alpha


def tail_exponent(n: int, alpha: float = 2.0) -> float:
    """Small-distance power of the prior CDF of ``rho``.

    The set ``rho <= r`` is a ball of radius ``~ r^(1/alpha)`` in ``n``
    dimensions, so its prior mass goes like ``r^(n/alpha)`` for a smooth
    output density; ``alpha = 2`` gives ``n/2``.
    """
    return n / alpha


@dataclass(frozen=True)
class EnergyCdf:
    """Piecewise-linear prior CDF of the distance with a power-law left tail.

    ``knots`` are the distinct prior distances in increasing order and ``cdf``
    the CDF values there. Below the first knot the curve continues as
    ``cdf[0] * (rho / knots[0]) ** exponent``; at and beyond the last knot it
    is 1.
    """

    knots: np.ndarray
    cdf: np.ndarray
    exponent: float

    def __call__(self, r):
        return energy(self, r)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["knot", "cdf"])
            for k, c in zip(self.knots, self.cdf):
                out.writerow([repr(float(k)), repr(float(c))])

    @classmethod
    def from_csv(cls, path, exponent: float) -> "EnergyCdf":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], exponent)


def fit_energy_cdf(prior_rhos, n: int = 1, alpha: float = 2.0, *, exponent: float | None = None,
                   min_size: int = 100) -> EnergyCdf:
    """Fit ``G`` from prior-sample distances.

    Order statistic ``i`` of ``M`` gets the plotting position ``(i - 1/2)/M``;
    tied distances share the midrank position. The largest knot is pinned to 1
    so that ``G`` is continuous where it saturates.
    """
    r = np.sort(np.asarray(prior_rhos, dtype=float).ravel())
    if r.size == 0:
        raise ValueError("empty prior sample")
    if r.size < min_size:
        raise ValueError(f"need at least {min_size} prior distances, got {r.size}")
    if r[0] < 0:
        raise ValueError("distances must be nonnegative")
    m = r.size
    knots, first, counts = np.unique(r, return_index=True, return_counts=True)
    # midrank (1-based) of each tie group
    midrank = first + (counts + 1) / 2.0
    cdf = (midrank - 0.5) / m
    cdf[-1] = 1.0
    if exponent is None:
        exponent = tail_exponent(n, alpha)
    return EnergyCdf(knots, cdf, float(exponent))


def energy(g: EnergyCdf, r):
    """Evaluate ``u = G(rho)``, monotone and clamped to ``[0, 1]``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be nonnegative")
    out = np.interp(r, g.knots, g.cdf)
    k0 = g.knots[0]
    if k0 > 0:
        low = r < k0
        if np.any(low):
            out = np.where(low, g.cdf[0] * (np.where(low, r, k0) / k0) ** g.exponent, out)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out
