"""KNN kernel density, distance-to-denser-point and mode detection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .geometry import _SCREEN_RTOL, DiffusionEmbedding, _sqnorms, exact_sqdist
from .graph import knn_search

logger = logging.getLogger(__name__)

K_SELECTION = ("ratio-max", "ratio-min")


@dataclass(frozen=True, eq=False)
class DensityProfile:
    """Normalised KDE values and the strict density order.

    ``order[0]`` is the densest pixel; equal densities are ordered by flat
    index. ``rank`` is the inverse permutation, so pixel ``y`` is denser
    than ``x`` iff ``rank[y] < rank[x]``.
    """

    p: np.ndarray
    order: np.ndarray
    rank: np.ndarray
    sigma0: float
    n_neighbors: int


@dataclass(frozen=True, eq=False)
class ModeSet:
    t: float
    rho: np.ndarray
    parent: np.ndarray
    dscore: np.ndarray
    modes: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return int(self.modes.size)


def density_order(p):
    order = np.lexsort((np.arange(p.size), -p))
    rank = np.empty_like(order)
    rank[order] = np.arange(p.size)
    return order, rank


def kde(points, n_neighbors, sigma0) -> DensityProfile:
    """Gaussian KDE summed over the ``n_neighbors`` nearest pixels (self excluded).

    The neighbour search ignores image geometry.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 3:
        x = x.reshape(-1, x.shape[-1])
    if not sigma0 > 0:
        raise ConfigError(f"KDE bandwidth must be positive, got {sigma0}")
    if not 1 <= n_neighbors < x.shape[0]:
        raise ConfigError(f"KDE needs 1 <= N < n, got N={n_neighbors}, n={x.shape[0]}")
    _, d2 = knn_search(x, n_neighbors)
    mass = np.exp(-d2 / sigma0**2).sum(axis=1)
    dead = np.flatnonzero(mass == 0)
    if dead.size:
        raise NumericError(
            f"KDE underflows to 0 at {dead.size} pixels (first: {int(dead[0])}); "
            f"sigma0={sigma0:g} is too small for this data, use a larger bandwidth"
        )
    p = mass / mass.sum()
    order, rank = density_order(p)
    return DensityProfile(p=p, order=order, rank=rank, sigma0=float(sigma0),
                          n_neighbors=int(n_neighbors))


def _block_size(n):
    return max(1, min(n, 4_000_000 // n))


def rho(emb: DiffusionEmbedding, prof: DensityProfile):
    """Diffusion distance from each pixel to its nearest denser pixel.

    Returns ``(rho, parent)``. The densest pixel gets the largest distance
    to any pixel and ``parent = -1``; every other pixel's ``parent`` is the
    nearest denser pixel, ties to the lowest flat index.
    """
    n = emb.n
    order = prof.order
    coords = emb.coords
    sq = _sqnorms(emb)
    out = np.empty(n)
    parent = np.full(n, -1, dtype=np.int64)
    top = order[0]
    out[top] = np.sqrt(exact_sqdist(coords, top, slice(None)).max()) if n > 1 else 0.0
    C = coords[order]
    sq_o = sq[order]
    bs = _block_size(n)
    for s in range(1, n, bs):
        e = min(s + bs, n)
        approx = sq_o[s:e, None] - 2.0 * (C[s:e] @ C[:e].T) + sq_o[None, :e]
        ranks = np.arange(s, e)
        approx[np.arange(e)[None, :] >= ranks[:, None]] = np.inf
        lo = approx.min(axis=1)
        margin = _SCREEN_RTOL * (sq_o[s:e] + sq_o[:e].max()) + 1e-300
        rr, cc = np.nonzero(approx <= (lo + margin)[:, None])
        diff = C[s + rr] - C[cc]
        d2 = np.einsum("ij,ij->i", diff, diff)
        flat = order[cc]
        # per row: smallest exact distance, then smallest flat index
        pick = np.lexsort((flat, d2, rr))
        first = np.ones(pick.size, dtype=bool)
        first[1:] = rr[pick][1:] != rr[pick][:-1]
        pick = pick[first]
        px = order[s + rr[pick]]
        out[px] = np.sqrt(d2[pick])
        parent[px] = flat[pick]
    return out, parent


def detect_modes(emb: DiffusionEmbedding, prof: DensityProfile, k_selection="ratio-max",
                 rho_parent=None) -> ModeSet:
    """Rank pixels by ``p * rho`` and cut at the largest consecutive ratio.

    ``k_selection="ratio-min"`` cuts at the smallest ratio instead.
    """
    if k_selection not in K_SELECTION:
        raise ConfigError(f"k_selection must be one of {K_SELECTION}, got {k_selection!r}")
    r, parent = rho(emb, prof) if rho_parent is None else rho_parent
    dscore = prof.p * r
    n = dscore.size
    warnings = []
    if n < 2:
        raise ConfigError("mode detection needs at least two pixels")
    srt = np.lexsort((np.arange(n), -dscore))
    num, den = dscore[srt[:-1]], dscore[srt[1:]]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 1.0))
    if np.all(ratios == 1.0):
        warnings.append("all decision scores are equal; no gap to select K, using K=1")
        K = 1
    elif k_selection == "ratio-max":
        K = int(np.argmax(ratios)) + 1
    else:
        K = int(np.argmin(ratios)) + 1
    for w in warnings:
        logger.warning(w)
    return ModeSet(t=emb.t, rho=r, parent=parent, dscore=dscore, modes=srt[:K].copy(),
                   warnings=warnings)
