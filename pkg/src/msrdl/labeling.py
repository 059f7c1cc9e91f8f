"""Two-stage label propagation with spatial consensus, and the full SRDL pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .density import DensityProfile, ModeSet, detect_modes, kde, rho
from .errors import ConfigError, NumericError
from .geometry import DiffusionEmbedding, embed, nearest
from .graph import DiffusionModel, GraphConfig, diffusion_model, window_knn
from .hsi import HsiCube

CONSENSUS_MODES = ("graph", "window")


@dataclass(frozen=True)
class SRDLConfig:
    """All parameters of one SRDL / M-SRDL run.

    Defaults are the Salinas A settings. ``window=None`` gives the
    non-spatial (LUND) variant: plain KNN graph and no consensus step.

    ``consensus="graph"`` lets each pixel's graph neighbours vote (its
    ``n_neighbors`` spectrally nearest pixels inside the window);
    ``consensus="window"`` lets every pixel of the window vote.
    ``consensus_window`` overrides the consensus radius (defaults to ``window``).
    """

    n_neighbors: int = 100
    sigma: float = 1.30
    sigma0: float = 3.6e-3
    window: int | None = 12
    consensus_window: int | None = None
    consensus: str = "graph"
    kde_neighbors: int | None = None
    symmetrize: bool = True
    k_selection: str = "ratio-max"
    m_max: int = 100
    eig_tol: float = 1e-12
    trunc_eps: float = 1e-8

    @property
    def graph(self) -> GraphConfig:
        return GraphConfig(self.n_neighbors, self.sigma, self.window, self.symmetrize)

    @property
    def consensus_radius(self):
        if self.window is None:
            return None
        return self.window if self.consensus_window is None else self.consensus_window

    @property
    def kde_n(self) -> int:
        return self.n_neighbors if self.kde_neighbors is None else self.kde_neighbors

    def __post_init__(self):
        if self.consensus not in CONSENSUS_MODES:
            raise ConfigError(f"consensus must be one of {CONSENSUS_MODES}, got {self.consensus!r}")

    def non_spatial(self) -> "SRDLConfig":
        return replace(self, window=None, consensus_window=None)


@dataclass(frozen=True, eq=False)
class Clustering:
    labels: np.ndarray
    K: int
    t: float = 0.0
    modes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    stage1_labeled: int = 0
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.labels.size

    def is_complete(self) -> bool:
        lab = self.labels
        return bool(lab.min() >= 1 and lab.max() <= self.K
                    and np.unique(lab).size == self.K)


def spatial_consensus(labels, pixel, neighbors, shape=None):
    """Strict-plurality label among the labelled spatial neighbours of ``pixel``.

    ``neighbors`` is either a window radius (every pixel of the square window
    around ``pixel`` votes; needs ``shape``) or an ``(n, k)`` array of
    neighbour lists padded with -1. The pixel itself never votes. Returns
    ``None`` without labelled neighbours or on a tie.
    """
    labels = np.asarray(labels)
    if np.ndim(neighbors) == 0:
        radius = int(neighbors)
        grid = labels.reshape(shape)
        r, c = divmod(int(pixel), shape[1])
        votes = grid[max(0, r - radius):r + radius + 1, max(0, c - radius):c + radius + 1]
        counts = np.bincount(votes.ravel())
        counts[grid[r, c]] -= 1
    else:
        nb = neighbors[pixel]
        nb = nb[(nb >= 0) & (nb != pixel)]
        counts = np.bincount(labels[nb], minlength=1)
    counts[0] = 0
    best = counts.max()
    if best == 0 or np.count_nonzero(counts == best) > 1:
        return None
    return int(np.argmax(counts))


def find_xstar(emb: DiffusionEmbedding, prof: DensityProfile, labels, pixel, parent=None):
    """Nearest (in diffusion distance) labelled pixel that is denser than ``pixel``.

    If ``parent`` (nearest denser pixel overall) is supplied and already
    labelled it is the answer, which skips the scan.
    """
    if parent is not None and parent >= 0 and labels[parent] != 0:
        return int(parent)
    before = prof.order[:prof.rank[pixel]]
    cand = before[labels[before] != 0]
    if cand.size == 0:
        raise NumericError(f"pixel {pixel} has no labelled denser pixel; processing order violated")
    return nearest(emb, pixel, cand)[0]


def _seed(n, modes):
    labels = np.zeros(n, dtype=np.int64)
    labels[modes] = np.arange(1, modes.size + 1)
    return labels


def label_stage1(emb, prof, modeset: ModeSet, neighbors, shape=None) -> Clustering:
    """Label pixels whose consensus agrees with their ``x*``; skip the rest.

    ``neighbors`` is as for :func:`spatial_consensus`; ``None`` means
    non-spatial, where every pixel takes the label of ``x*``.
    """
    labels = _seed(emb.n, modeset.modes)
    parent = modeset.parent
    done = 0
    for x in prof.order:
        if labels[x]:
            continue
        if neighbors is None:
            labels[x] = labels[find_xstar(emb, prof, labels, x, parent[x])]
            done += 1
            continue
        cons = spatial_consensus(labels, x, neighbors, shape)
        if cons is None:
            continue
        if labels[find_xstar(emb, prof, labels, x, parent[x])] == cons:
            labels[x] = cons
            done += 1
    return Clustering(labels=labels, K=modeset.K, t=modeset.t, modes=modeset.modes,
                      stage1_labeled=done, warnings=list(modeset.warnings))


def label_stage2(emb, prof, partial: Clustering, neighbors, shape=None, parent=None) -> Clustering:
    """Give each still-unlabelled pixel its consensus label, else the label of ``x*``."""
    labels = partial.labels.copy()
    for x in prof.order:
        if labels[x]:
            continue
        cons = None if neighbors is None else spatial_consensus(labels, x, neighbors, shape)
        if cons is None:
            cons = labels[find_xstar(emb, prof, labels, x, None if parent is None else parent[x])]
        labels[x] = cons
    assert labels.min() >= 1, "stage 2 left unlabelled pixels"
    return replace(partial, labels=labels)


def consensus_neighbors(cube: HsiCube, config: SRDLConfig):
    """What :func:`spatial_consensus` should vote over for this configuration."""
    radius = config.consensus_radius
    if radius is None:
        return None
    if config.consensus == "window":
        return radius
    return window_knn(cube, config.n_neighbors, radius)[0]


def srdl_at(model: DiffusionModel, prof: DensityProfile, t, config: SRDLConfig, shape,
            neighbors=None) -> Clustering:
    """One SRDL clustering at time ``t`` from a precomputed model, density and
    consensus neighbourhood (see :func:`consensus_neighbors`)."""
    emb = embed(model, t, config.trunc_eps)
    rp = rho(emb, prof)
    modeset = detect_modes(emb, prof, config.k_selection, rho_parent=rp)
    part = label_stage1(emb, prof, modeset, neighbors, shape)
    return label_stage2(emb, prof, part, neighbors, shape, parent=modeset.parent)


def srdl(cube: HsiCube, t, config: SRDLConfig = SRDLConfig(), cache_dir=None) -> Clustering:
    """Cluster ``cube`` at diffusion time ``t``."""
    if t < 0:
        raise ConfigError(f"diffusion time must be non-negative, got {t}")
    model = diffusion_model(cube, config.graph, config.m_max, config.eig_tol, cache_dir)
    prof = kde(cube.pixels, config.kde_n, config.sigma0)
    return srdl_at(model, prof, t, config, (cube.rows, cube.cols), consensus_neighbors(cube, config))
