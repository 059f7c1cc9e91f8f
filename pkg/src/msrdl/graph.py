"""Spatially-windowed KNN graphs, Markov transition matrices and their spectra."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from scipy.spatial.distance import cdist

from .errors import ConfigError, DataError, NumericError
from .hsi import HsiCube

logger = logging.getLogger(__name__)

# below this size a dense symmetric eigensolver is cheaper and exact
DENSE_CUTOFF = 1500
# an eigenvalue this close to -1 marks a periodic chain
PERIODIC_TOL = 1e-10


@dataclass(frozen=True)
class GraphConfig:
    """Graph parameters.

    ``window=None`` means unbounded: a plain (non-spatial) KNN graph.
    """

    n_neighbors: int = 100
    sigma: float = 1.30
    window: int | None = 12
    symmetrize: bool = True

    def __post_init__(self):
        if int(self.n_neighbors) < 1:
            raise ConfigError(f"n_neighbors must be >= 1, got {self.n_neighbors}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.window is not None and int(self.window) < 0:
            raise ConfigError(f"window radius must be >= 0, got {self.window}")

    @property
    def spatial(self) -> bool:
        return self.window is not None

    def validate_for(self, cube: HsiCube):
        if self.spatial:
            side_r = min(2 * self.window + 1, cube.rows)
            side_c = min(2 * self.window + 1, cube.cols)
            if self.n_neighbors > side_r * side_c - 1:
                raise ConfigError(
                    f"n_neighbors={self.n_neighbors} exceeds the {side_r * side_c - 1} "
                    f"candidates of a radius-{self.window} window on a {cube.rows}x{cube.cols} image"
                )
        elif self.n_neighbors > cube.n - 1:
            raise ConfigError(f"n_neighbors={self.n_neighbors} but only {cube.n} pixels")


@dataclass(frozen=True, eq=False)
class DiffusionModel:
    """Transition matrix, stationary distribution and retained eigenpairs.

    ``eigvecs[:, k]`` is a right eigenvector of ``P`` normalised to unit
    length in the ``q``-weighted inner product, so diffusion distances are
    plain Euclidean distances between rows of ``eigvecs * |eigvals|**t``.
    """

    P: sp.csr_matrix
    q: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    lazy: bool = False
    residual: float = 0.0

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.eigvals.size

    @property
    def lambda2(self) -> float:
        return float(abs(self.eigvals[1])) if self.m > 1 else 0.0


def _sorted_knn(d2, cand, k):
    """Pick the ``k`` smallest entries per row, ties broken by candidate index."""
    order = np.lexsort((cand, d2), axis=-1)[:, :k]
    return np.take_along_axis(cand, order, -1), np.take_along_axis(d2, order, -1)


def knn_search(points, k, chunk=512):
    """Exact brute-force KNN (self excluded) in squared Euclidean distance.

    Returns ``(idx, d2)`` of shape ``(n, k)`` sorted by distance, then by index.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n - 1:
        raise ConfigError(f"need 1 <= k <= n-1 neighbours, got k={k}, n={n}")
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    cols = np.broadcast_to(np.arange(n), (min(chunk, n), n))
    for s in range(0, n, chunk):
        e = min(s + chunk, n)
        d2 = cdist(x[s:e], x, "sqeuclidean")
        d2[np.arange(e - s), np.arange(s, e)] = np.inf
        idx[s:e], dist[s:e] = _sorted_knn(d2, cols[: e - s], k)
    return idx, dist


def window_knn(cube: HsiCube, k, radius):
    """KNN restricted to the (2R+1)x(2R+1) spatial window around each pixel.

    Pixels whose window holds fewer than ``k`` candidates keep all of them;
    missing slots carry index -1 and distance inf.
    """
    rows, cols = cube.rows, cube.cols
    x = cube.values
    offsets = [(dr, dc) for dr in range(-radius, radius + 1) for dc in range(-radius, radius + 1)
               if (dr, dc) != (0, 0) and abs(dr) < rows and abs(dc) < cols]
    n = cube.n
    d2 = np.full((rows, cols, len(offsets)), np.inf)
    cand = np.full((rows, cols, len(offsets)), -1, dtype=np.int64)
    flat = np.arange(n).reshape(rows, cols)
    for j, (dr, dc) in enumerate(offsets):
        rs = slice(max(0, -dr), rows - max(0, dr))
        cs = slice(max(0, -dc), cols - max(0, dc))
        rt = slice(max(0, dr), rows - max(0, -dr))
        ct = slice(max(0, dc), cols - max(0, -dc))
        diff = x[rs, cs] - x[rt, ct]
        d2[rs, cs, j] = np.einsum("ijk,ijk->ij", diff, diff)
        cand[rs, cs, j] = flat[rt, ct]
    d2 = d2.reshape(n, -1)
    cand = cand.reshape(n, -1)
    # invalid slots sort last: inf distance, then index -1 would sort first among infs
    cand_key = np.where(cand < 0, n, cand)
    k = min(k, cand.shape[1])
    order = np.lexsort((cand_key, d2), axis=-1)[:, :k]
    return np.take_along_axis(cand, order, -1), np.take_along_axis(d2, order, -1)


def build_graph(cube: HsiCube, config: GraphConfig) -> sp.csr_matrix:
    """Gaussian-weighted KNN graph, optionally confined to a spatial window."""
    config.validate_for(cube)
    n = cube.n
    if config.spatial:
        idx, d2 = window_knn(cube, config.n_neighbors, config.window)
    else:
        idx, d2 = knn_search(cube.pixels, config.n_neighbors)
    rows = np.repeat(np.arange(n), idx.shape[1])
    ok = idx.reshape(-1) >= 0
    w = np.exp(-d2.reshape(-1) / config.sigma**2)
    W = sp.csr_matrix((w[ok], (rows[ok], idx.reshape(-1)[ok])), shape=(n, n))
    if config.symmetrize:
        W = W.maximum(W.T).tocsr()
    W.setdiag(0)
    W.eliminate_zeros()
    W.sort_indices()
    return W


def _is_symmetric(A):
    return abs(A - A.T).max() == 0 if A.nnz else True


def stationary_power(P, tol=1e-12, max_iter=100_000):
    """Stationary distribution by power iteration on ``P^T``."""
    n = P.shape[0]
    q = np.full(n, 1.0 / n)
    PT = P.T.tocsr()
    for _ in range(max_iter):
        # lazy step keeps periodic chains convergent; same fixed point
        nxt = 0.5 * (q + PT @ q)
        nxt /= nxt.sum()
        if np.abs(nxt - q).max() < tol:
            return nxt
        q = nxt
    raise NumericError(f"power iteration for the stationary distribution did not reach {tol:g}")


def transition_matrix(W):
    """Row-normalise ``W`` into ``P = D^-1 W`` and find its stationary ``q``."""
    W = sp.csr_matrix(W, dtype=np.float64)
    deg = np.asarray(W.sum(axis=1)).ravel()
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size:
        raise NumericError(
            f"{isolated.size} isolated vertices (zero weight row), e.g. {isolated[:10].tolist()}; "
            "increase sigma, n_neighbors or the window"
        )
    ncomp, _ = connected_components(W, directed=True, connection="strong")
    if ncomp > 1:
        raise NumericError(
            f"graph splits into {ncomp} strongly connected components; the random walk is "
            "reducible. Use a larger n_neighbors or window, or a larger sigma"
        )
    P = sp.diags(1.0 / deg) @ W
    P = P.tocsr()
    if _is_symmetric(W):
        q = deg / deg.sum()
    else:
        q = stationary_power(P)
    return P, q


def _fix_signs(vecs):
    # largest-magnitude entry positive; first index wins on ties
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def eigendecompose(P, q, m_max=100, tol=1e-12) -> DiffusionModel:
    """Top eigenpairs of a reversible ``P`` by absolute eigenvalue.

    Solves the symmetric conjugate ``Q^1/2 P Q^-1/2`` and maps eigenvectors
    back with ``Q^-1/2``. ``tol <= 0`` keeps every computed pair.
    """
    P = sp.csr_matrix(P)
    q = np.asarray(q, dtype=np.float64)
    n = q.size
    sq = np.sqrt(q)
    S = (sp.diags(sq) @ P @ sp.diags(1.0 / sq)).tocsr()
    asym = abs(S - S.T).max() if S.nnz else 0.0
    if asym > 1e-9 * max(1.0, abs(S).max()):
        raise NumericError(
            f"transition matrix is not reversible w.r.t. q (asymmetry {asym:.2e}); "
            "enable graph symmetrization"
        )
    S = 0.5 * (S + S.T)
    # the trivial pair (1, sqrt q) is known exactly; deflate it so nearly
    # disconnected graphs (several eigenvalues ~1) cannot mix it with others
    k = min(int(m_max), n)
    if n <= DENSE_CUTOFF or k >= n - 1:
        # Householder reflection H maps sqrt(q) to e_1; the trailing block of
        # H S H is S restricted to the orthogonal complement of sqrt(q)
        v = sq.copy()
        v[0] += 1.0 if sq[0] >= 0 else -1.0
        H = np.eye(n) - (2.0 / (v @ v)) * np.outer(v, v)
        B = H @ S.toarray() @ H
        vals, y = np.linalg.eigh(0.5 * (B[1:, 1:] + B[1:, 1:].T))
        vecs = H[:, 1:] @ y
    else:
        op = LinearOperator((n, n), matvec=lambda v: S @ v - sq * (sq @ v), dtype=np.float64)
        v0 = np.random.default_rng(0).uniform(0.5, 1.5, n)
        v0 -= sq * (sq @ v0)
        try:
            vals, vecs = eigsh(op, k=k - 1, which="LM", v0=v0, maxiter=max(5000, 50 * n))
        except ArpackNoConvergence as exc:
            raise NumericError(f"eigensolver did not converge: {exc}") from None
    order = np.argsort(-np.abs(vals), kind="stable")[:k - 1]
    vals, vecs = vals[order], vecs[:, order]
    if tol > 0:
        keep = np.abs(vals) > tol
        vals, vecs = vals[keep], vecs[:, keep]
    if vals.size and abs(vals[0]) > 1.0 + 1e-10:
        raise NumericError(f"eigenvalue {vals[0]!r} exceeds 1 in magnitude")
    psi = np.column_stack([np.ones(n), _fix_signs(vecs / sq[:, None])])
    vals = np.concatenate([[1.0], vals])
    residual = float(np.abs(P @ psi - psi * vals).max())
    return DiffusionModel(P=P, q=q, eigvals=vals, eigvecs=psi, residual=residual)


def diffusion_model(cube: HsiCube, config: GraphConfig, m_max=100, tol=1e-12,
                    cache_dir=None) -> DiffusionModel:
    """Build graph, transition matrix and spectrum for ``cube``.

    If the chain turns out to be periodic (an eigenvalue at -1) the lazy walk
    ``(P + I) / 2`` is used instead and ``model.lazy`` is set.
    """
    if cache_dir is not None:
        path = Path(cache_dir) / f"model-{cache_key(cube, config, m_max, tol)}.npz"
        if path.exists():
            logger.info("loading cached diffusion model %s", path)
            return load_model(path)
    W = build_graph(cube, config)
    P, q = transition_matrix(W)
    model = eigendecompose(P, q, m_max=m_max, tol=tol)
    if model.m > 1 and model.eigvals[1:].min() <= -(1.0 - PERIODIC_TOL):
        logger.warning("periodic chain detected; switching to the lazy walk (P + I) / 2")
        lazy_P = (0.5 * (P + sp.identity(P.shape[0]))).tocsr()
        model = eigendecompose(lazy_P, q, m_max=m_max, tol=tol)
        model = DiffusionModel(model.P, model.q, model.eigvals, model.eigvecs, True, model.residual)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_model(model, path)
    return model


def cache_key(cube: HsiCube, config: GraphConfig, m_max, tol) -> str:
    blob = json.dumps({"cube": cube.digest(), "config": asdict(config), "m_max": int(m_max),
                       "tol": float(tol)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def save_model(model: DiffusionModel, path):
    """Store a model as ``.npz``: CSR arrays of P plus q, eigvals, eigvecs, flags."""
    P = model.P.tocsr()
    np.savez(path, P_data=P.data, P_indices=P.indices, P_indptr=P.indptr,
             P_shape=np.asarray(P.shape), q=model.q, eigvals=model.eigvals,
             eigvecs=model.eigvecs, lazy=np.asarray(model.lazy),
             residual=np.asarray(model.residual))


def load_model(path) -> DiffusionModel:
    try:
        z = np.load(path)
        P = sp.csr_matrix((z["P_data"], z["P_indices"], z["P_indptr"]), shape=tuple(z["P_shape"]))
        return DiffusionModel(P, z["q"], z["eigvals"], z["eigvecs"], bool(z["lazy"]),
                              float(z["residual"]))
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"unreadable model cache {path}: {exc}") from None
