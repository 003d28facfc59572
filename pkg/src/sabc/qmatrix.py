"""Binned matrix of attempted moves on the (rho, nu) plane.

Columns index the bin a particle tries to leave, rows the bin it tries to
enter. Once the columns are normalized, the matrix is stochastic and its
stationary vector discretizes the likelihood over the plane. That vector can
stand in for the prior sample when the latter no longer resolves small
distances.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .core import PriorSample


class ReducibleChainError(ValueError):
    pass


@dataclass(frozen=True)
class BinGrid:
    rho_edges: np.ndarray
    nu_edges: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rho_edges) - 1, len(self.nu_edges) - 1

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @classmethod
    def uniform(cls, rho_range, nu_range, n_rho: int = 50, n_nu: int = 50) -> "BinGrid":
        lo, hi = nu_range
        if hi <= lo:
            # constant potential: one bin of nominal width
            lo, hi = lo - 0.5, lo + 0.5
        return cls(np.linspace(rho_range[0], rho_range[1], n_rho + 1), np.linspace(lo, hi, n_nu + 1))

    @classmethod
    def from_prior_sample(cls, P: PriorSample, n_rho: int = 50, n_nu: int = 50) -> "BinGrid":
        """``[0, rho_q99] x [nu_q01, nu_q99]`` of the prior sample."""
        nu = P.nu[np.isfinite(P.nu)]
        return cls.uniform((0.0, float(np.quantile(P.rho, 0.99))),
                           (float(np.quantile(nu, 0.01)), float(np.quantile(nu, 0.99))), n_rho, n_nu)

    def index(self, rho, nu):
        """Flat bin index, or -1 outside the region (or for infinite ``nu``)."""
        rho = np.asarray(rho, dtype=float)
        nu = np.asarray(nu, dtype=float)
        nr, nn = self.shape
        i = np.searchsorted(self.rho_edges, rho, side="right") - 1
        j = np.searchsorted(self.nu_edges, nu, side="right") - 1
        # the upper edges belong to the last bins
        i = np.where(rho == self.rho_edges[-1], nr - 1, i)
        j = np.where(nu == self.nu_edges[-1], nn - 1, j)
        inside = (i >= 0) & (i < nr) & (j >= 0) & (j < nn) & np.isfinite(nu)
        out = np.where(inside, i * nn + j, -1)
        return int(out) if out.ndim == 0 else out

    def centers(self) -> np.ndarray:
        rc = 0.5 * (self.rho_edges[1:] + self.rho_edges[:-1])
        nc = 0.5 * (self.nu_edges[1:] + self.nu_edges[:-1])
        R, V = np.meshgrid(rc, nc, indexing="ij")
        return np.column_stack([R.ravel(), V.ravel()])


@dataclass
class QMatrix:
    grid: BinGrid
    counts: dict = field(default_factory=dict)
    dropped: int = 0

    def record(self, src: int, dst: int) -> None:
        if src < 0:
            self.dropped += 1
            return
        key = (dst if dst >= 0 else src, src)
        self.counts[key] = self.counts.get(key, 0) + 1

    def to_sparse(self) -> sparse.csc_matrix:
        n = self.grid.size
        if not self.counts:
            return sparse.csc_matrix((n, n))
        keys = np.array(list(self.counts.keys()), dtype=np.int64)
        vals = np.array(list(self.counts.values()), dtype=float)
        return sparse.csc_matrix((vals, (keys[:, 0], keys[:, 1])), shape=(n, n))

    def normalized(self) -> sparse.csc_matrix:
        """Column-stochastic matrix over the visited bins (other columns are zero)."""
        C = self.to_sparse()
        col = np.asarray(C.sum(axis=0)).ravel()
        scale = np.divide(1.0, col, out=np.zeros_like(col), where=col > 0)
        return sparse.csc_matrix(C @ sparse.diags(scale))

    def column_counts(self) -> np.ndarray:
        return np.asarray(self.to_sparse().sum(axis=0)).ravel()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["from_bin", "to_bin", "count"])
            for (dst, src), c in sorted(self.counts.items(), key=lambda kv: (kv[0][1], kv[0][0])):
                out.writerow([src, dst, c])


def record_attempt(q: QMatrix, src, dst) -> None:
    """Count an attempted move ``src -> dst`` given as ``(rho, nu)`` pairs.

    ``dst=None`` (or a destination outside the grid) counts as staying put.
    Sources outside the grid are dropped.
    """
    s = q.grid.index(*src)
    d = -1 if dst is None else q.grid.index(*dst)
    q.record(s, d)


def stationary_vector(q, *, prefer=None, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary distribution of a column-stochastic matrix by power iteration.

    ``q`` is a :class:`QMatrix` or a (dense or sparse) column-stochastic matrix.
    Only states with outgoing mass take part. With ``prefer`` (the bins holding
    the current ensemble) the chain is restricted to the communicating class
    containing most of them; attempts leaving that class count as staying put,
    as attempts leaving the grid do. Without ``prefer`` a unique closed class
    is used. Ambiguity raises :class:`ReducibleChainError`.
    """
    Q = q.normalized() if isinstance(q, QMatrix) else sparse.csc_matrix(q, dtype=float)
    n = Q.shape[0]
    col = np.asarray(Q.sum(axis=0)).ravel()
    active = np.flatnonzero(col > 0)
    if active.size == 0:
        raise ValueError("empty transition matrix")
    if not np.allclose(col[active], 1.0, atol=1e-12):
        raise ValueError("matrix is not column-stochastic")
    sub = Q[active][:, active]
    ncomp, labels = connected_components(sub, directed=True, connection="strong")
    chosen = 0 if ncomp == 1 else None
    if chosen is None and prefer is not None:
        pref = np.zeros(n, dtype=bool)
        pref[np.asarray(prefer, dtype=np.int64)] = True
        hits = np.bincount(labels, weights=pref[active], minlength=ncomp)
        best = hits.max()
        if best > 0 and np.sum(hits == best) == 1:
            chosen = int(np.argmax(hits))
    if chosen is None:
        # a class is closed when no mass leaves it
        coo = sub.tocoo()
        leaks = labels[coo.row] != labels[coo.col]
        leaking = set(labels[coo.col[leaks]].tolist())
        closed = [c for c in range(ncomp) if c not in leaking]
        if len(closed) != 1:
            classes = [active[labels == c].tolist() for c in closed]
            raise ReducibleChainError(f"reducible chain; closed classes: {classes}")
        chosen = closed[0]
    states = active[labels == chosen]
    S = sparse.csc_matrix(Q[states][:, states])
    stay = 1.0 - np.asarray(S.sum(axis=0)).ravel()
    S = sparse.csc_matrix(S + sparse.diags(np.clip(stay, 0.0, None)))
    g = np.full(states.size, 1.0 / states.size)
    for _ in range(max_iter):
        # lazy step: same fixed point, no periodic oscillation
        g_new = 0.5 * (g + S @ g)
        g_new /= g_new.sum()
        if np.abs(S @ g_new - g_new).sum() < tol:
            g = g_new
            break
        g = g_new
    else:
        raise RuntimeError("power iteration did not converge")
    out = np.zeros(n)
    out[states] = g
    return out


def moments_from_g(g, grid: BinGrid, eps, Q=None) -> tuple[np.ndarray, np.ndarray | None]:
    """Equilibrium means of ``(rho, nu)`` and an Onsager-matrix proxy from ``g``.

    ``g`` carries no prior factor, so each bin centre is weighted by
    ``g * exp(-rho_c/eps1 - (1 + eps2) nu_c)``. With a normalized ``Q`` the
    Onsager proxy sums ``du_i du_j`` over attempted bin-to-bin moves that go
    downhill in the equilibrium energy; time is counted in attempts per particle.
    """
    g = np.asarray(g, dtype=float)
    eps1, eps2 = float(eps[0]), float(eps[1])
    c = grid.centers()
    energy = c[:, 0] / eps1 + (1 + eps2) * c[:, 1]
    support = g > 0
    if not np.any(support):
        raise ValueError("stationary vector has empty support")
    a = np.where(support, -energy, -np.inf)
    w = g * np.exp(a - a[support].max())
    if not w.sum() > 0:
        raise ValueError("effective support of the weights is empty")
    p = w / w.sum()
    U = p @ c
    if Q is None:
        return U, None
    Qc = sparse.coo_matrix(Q)
    dst, src = Qc.row, Qc.col
    du = c[src] - c[dst]
    down = energy[src] >= energy[dst]
    mass = p[src] * Qc.data * down
    L = np.einsum("k,ki,kj->ij", mass, du, du)
    return U, L
