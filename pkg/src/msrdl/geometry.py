"""Diffusion-map embeddings, diffusion distances and the multiscale horizon."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .graph import PERIODIC_TOL, DiffusionModel

MAX_HORIZON = 64
# relative slack for Gram-expansion screening; rounding error is orders smaller
_SCREEN_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class DiffusionEmbedding:
    """Rows are ``Psi_t(x_i)`` truncated to the ``kept`` leading coordinates."""

    t: float
    coords: np.ndarray
    scales: np.ndarray

    @property
    def kept(self) -> int:
        return self.coords.shape[1]

    @property
    def n(self) -> int:
        return self.coords.shape[0]


def embed(model: DiffusionModel, t, trunc_eps=1e-8) -> DiffusionEmbedding:
    """Scale eigenvector ``k`` by ``|lambda_k|**t``.

    Coordinates ``k >= 2`` whose scale falls below ``trunc_eps * |lambda_2|**t``
    are dropped; ``trunc_eps <= 0`` disables truncation.
    """
    if t < 0:
        raise ConfigError(f"diffusion time must be non-negative, got {t}")
    scales = np.abs(model.eigvals) ** t
    keep = np.ones(scales.size, dtype=bool)
    if trunc_eps > 0 and scales.size > 1:
        keep[1:] = scales[1:] >= trunc_eps * scales[1]
    coords = model.eigvecs[:, keep] * scales[keep]
    return DiffusionEmbedding(t=t, coords=coords, scales=scales[keep])


def _sqnorms(emb):
    sq = emb.__dict__.get("_sq")
    if sq is None:
        sq = np.einsum("ij,ij->i", emb.coords, emb.coords)
        object.__setattr__(emb, "_sq", sq)
    return sq


def exact_sqdist(coords, i, targets):
    d = coords[targets] - coords[i]
    return np.einsum("ij,ij->i", d, d)


def nearest(emb: DiffusionEmbedding, i, candidates):
    """Closest candidate to pixel ``i``; ties go to the lowest flat index.

    Large candidate sets are screened with the Gram expansion and the
    survivors re-evaluated by direct differences, so the answer equals a
    direct scan.
    """
    cand = np.asarray(candidates)
    if cand.size > 64:
        sq = _sqnorms(emb)
        approx = sq[cand] - 2.0 * (emb.coords[cand] @ emb.coords[i]) + sq[i]
        margin = _SCREEN_RTOL * (sq[i] + sq[cand].max()) + 1e-300
        cand = cand[approx <= approx.min() + margin]
    d2 = exact_sqdist(emb.coords, i, cand)
    best = d2.min()
    return int(cand[d2 == best].min()), float(np.sqrt(best))


def diffusion_distance(emb: DiffusionEmbedding, i, j) -> float:
    d = emb.coords[i] - emb.coords[j]
    return float(np.sqrt(d @ d))


def distances_from(emb: DiffusionEmbedding, i, targets=None) -> np.ndarray:
    """Diffusion distances from pixel ``i`` to ``targets`` (default: all pixels)."""
    other = emb.coords if targets is None else emb.coords[targets]
    d = other - emb.coords[i]
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def horizon_time(model: DiffusionModel, tau, rule="paper") -> int:
    """Exponent ``T`` of the last grid time ``2**T``.

    ``rule="paper"``: ``T = ceil(log2(log_{|lambda_2|}(2 tau / min q)))``.
    ``rule="certified"`` replaces ``2 tau / min q`` by ``tau * sqrt(min q / 2)``,
    which does bound every diffusion distance at ``t = 2**T`` by ``tau``
    (``D_t(x, y) <= |lambda_2|**t * sqrt(1/q_x + 1/q_y)``).
    ``T`` is 0 when the argument of either logarithm leaves the range where
    it is positive, and capped at :data:`MAX_HORIZON`.
    """
    if not 0 < tau < 1:
        raise ConfigError(f"tau must lie in (0, 1), got {tau}")
    lam2 = model.lambda2
    periodic = model.m > 1 and model.eigvals[1:].min() <= -(1.0 - PERIODIC_TOL)
    if lam2 >= 1.0 or periodic:
        raise NumericError(f"|lambda_2| = {lam2!r} >= 1; the chain is reducible or periodic")
    qmin = float(model.q.min())
    if rule == "paper":
        ratio = 2.0 * tau / qmin
    elif rule == "certified":
        ratio = tau * math.sqrt(qmin / 2.0)
    else:
        raise ConfigError(f"unknown horizon rule {rule!r}")
    if ratio >= 1.0 or lam2 == 0.0:
        return 0
    inner = math.log(ratio) / math.log(lam2)
    if inner <= 1.0:
        return 0
    return min(MAX_HORIZON, max(0, math.ceil(math.log2(inner))))
