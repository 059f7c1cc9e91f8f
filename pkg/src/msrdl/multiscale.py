"""Multiscale SRDL: clusterings over a dyadic time grid and their VI-barycenter."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .density import kde
from .errors import ConfigError, DataError, NumericError
from .geometry import horizon_time
from .graph import DiffusionModel, diffusion_model
from .hsi import HsiCube
from .labeling import Clustering, SRDLConfig, consensus_neighbors, srdl_at

logger = logging.getLogger(__name__)

NMI_NORMS = ("sqrt", "max", "min", "avg")


def _labels(c):
    return np.asarray(getattr(c, "labels", c)).reshape(-1)


def _joint(a, b):
    a, b = _labels(a), _labels(b)
    if a.size != b.size:
        raise DataError(f"clusterings cover different pixel counts: {a.size} vs {b.size}")
    if a.size == 0:
        raise DataError("cannot compare empty clusterings")
    n = a.size
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    pairs, counts = np.unique(np.stack([ia, ib]), axis=1, return_counts=True)
    pa = np.bincount(ia) / n
    pb = np.bincount(ib) / n
    return pairs[0], pairs[1], counts / n, pa, pb


def _entropy(p):
    return math.fsum(-x * math.log(x) for x in p if x > 0)


def vi(a, b) -> float:
    """Variation of information (natural log) between two complete labelings."""
    ia, ib, r, pa, pb = _joint(a, b)
    lr = np.log(r)
    terms = r * ((np.log(pa[ia]) - lr) + (np.log(pb[ib]) - lr))
    # fsum is exactly rounded, so the result does not depend on term order
    return max(0.0, math.fsum(terms.tolist()))


def mutual_information(a, b) -> float:
    ia, ib, r, pa, pb = _joint(a, b)
    terms = r * ((np.log(r) - np.log(pa[ia])) - np.log(pb[ib]))
    return max(0.0, math.fsum(terms.tolist()))


def nmi(a, b, norm="sqrt", warnings=None) -> float:
    """Normalised mutual information; 0 (with a warning) if either side is a single cluster."""
    if norm not in NMI_NORMS:
        raise ConfigError(f"nmi norm must be one of {NMI_NORMS}, got {norm!r}")
    _, _, _, pa, pb = _joint(a, b)
    ha, hb = _entropy(pa), _entropy(pb)
    if ha == 0 or hb == 0:
        msg = "NMI undefined for a single-cluster labeling; reporting 0"
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        return 0.0
    den = {"sqrt": math.sqrt(ha * hb), "max": max(ha, hb), "min": min(ha, hb),
           "avg": 0.5 * (ha + hb)}[norm]
    return min(1.0, mutual_information(a, b) / den)


def against_truth(pred, truth):
    """Restrict ``pred`` and ``truth`` to pixels with a positive truth label."""
    p, t = _labels(pred), _labels(truth)
    if p.size != t.size:
        raise DataError(f"prediction has {p.size} pixels, truth has {t.size}")
    keep = t > 0
    if not keep.any():
        raise DataError("ground truth has no labelled pixels")
    return p[keep], t[keep]


def time_grid(model: DiffusionModel, tau, rule="paper"):
    T = horizon_time(model, tau, rule)
    return [0, 1] + [2**j for j in range(1, T + 1)]


@dataclass
class MultiscaleResult:
    grid: list
    clusterings: list
    J: list
    vi_totals: dict
    t_star: int | None
    K_star: int | None
    T: int
    lazy: bool = False
    runtimes_ms: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def Ks(self):
        return [c.K for c in self.clusterings]

    @property
    def barycenter(self) -> Clustering:
        return self.clusterings[self.grid.index(self.t_star)]


class NoNontrivialScale(NumericError):
    """Every scale produced a trivial clustering; ``result`` keeps the per-scale data."""

    def __init__(self, msg, result):
        super().__init__(msg)
        self.result = result


def barycenter(clusterings, n):
    """Indices of nontrivial clusterings, their VI totals, and the argmin index.

    Ties go to the earliest (finest-scale) clustering.
    """
    J = [i for i, c in enumerate(clusterings) if 2 <= c.K < n / 2]
    if not J:
        return J, {}, None
    D = np.zeros((len(J), len(J)))
    for a in range(len(J)):
        for b in range(a + 1, len(J)):
            D[a, b] = D[b, a] = vi(clusterings[J[a]], clusterings[J[b]])
    totals = [math.fsum(row) for row in D.tolist()]
    best = J[int(np.argmin(totals))]
    return J, dict(zip(J, totals)), best


def msrdl(cube: HsiCube, config: SRDLConfig = SRDLConfig(), tau=1e-5, threads=1,
          horizon_rule="paper", cache_dir=None, model=None) -> MultiscaleResult:
    """Run SRDL at every grid time and select the VI-barycenter clustering."""
    n = cube.n
    if model is None:
        model = diffusion_model(cube, config.graph, config.m_max, config.eig_tol, cache_dir)
    prof = kde(cube.pixels, config.kde_n, config.sigma0)
    T = horizon_time(model, tau, horizon_rule)
    grid = time_grid(model, tau, horizon_rule)
    shape = (cube.rows, cube.cols)
    neighbors = consensus_neighbors(cube, config)

    def run(t):
        t0 = time.perf_counter()
        c = srdl_at(model, prof, t, config, shape, neighbors)
        return c, (time.perf_counter() - t0) * 1e3

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(run, grid))
    else:
        out = [run(t) for t in grid]
    clusterings = [c for c, _ in out]
    warnings = [f"t={c.t}: {w}" for c in clusterings for w in c.warnings]
    if model.lazy:
        warnings.append("periodic chain: lazy walk (P + I) / 2 used")
    J, totals, best = barycenter(clusterings, n)
    res = MultiscaleResult(
        grid=grid, clusterings=clusterings, J=[grid[j] for j in J],
        vi_totals={grid[j]: v for j, v in totals.items()},
        t_star=None if best is None else grid[best],
        K_star=None if best is None else clusterings[best].K,
        T=T, lazy=model.lazy, runtimes_ms=[ms for _, ms in out], warnings=warnings,
    )
    if best is None:
        raise NoNontrivialScale(
            f"no grid time gave a nontrivial clustering (2 <= K < {n / 2:g}); per-scale K: "
            + ", ".join(f"t={t}: K={c.K}" for t, c in zip(grid, clusterings))
            + ". Try other sigma, sigma0, n_neighbors or window values",
            res,
        )
    return res
