"""Hyperspectral cube and label-map containers, file formats and synthetic scenes.

Cube files are a small JSON header plus a raw little-endian payload::

    {"rows": 2, "cols": 3, "bands": 4, "dtype": "f32", "payload": "cube.bin"}

The payload holds ``rows * cols * bands`` values, pixel-major: all bands of
pixel (0, 0), then all bands of pixel (0, 1), and so on along the row.
Label maps are plain CSV grids of non-negative integers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
NORMALIZE_MODES = ("none", "unit-norm-pixels", "per-band-zscore")


@dataclass(frozen=True, eq=False)
class HsiCube:
    """A rows x cols x bands reflectance cube held in float64.

    Pixel ``(r, c)`` has flat index ``r * cols + c``; :attr:`pixels` is the
    ``(n, bands)`` point cloud in that order.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 3 or min(v.shape) < 1:
            raise DataError(f"cube must be a non-empty 3-D array, got shape {v.shape}")
        bad = np.argwhere(~np.isfinite(v))
        if len(bad):
            r, c, b = (int(x) for x in bad[0])
            raise DataError(f"non-finite reflectance at pixel ({r}, {c}), band {b}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def pixels(self) -> np.ndarray:
        return self.values.reshape(self.n, self.bands)

    def flat_index(self, r, c):
        return np.asarray(r) * self.cols + np.asarray(c)

    def pixel_of(self, i):
        return divmod(i, self.cols)

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.asarray(self.values.shape, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Integer label per pixel; 0 means unlabeled / background."""

    rows: int
    cols: int
    labels: np.ndarray

    def __post_init__(self):
        lab = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        if self.rows < 1 or self.cols < 1:
            raise DataError(f"label map dimensions must be positive, got {self.rows}x{self.cols}")
        if lab.size != self.rows * self.cols:
            raise DataError(
                f"label map has {lab.size} entries, expected {self.rows}x{self.cols}"
            )
        if lab.size and lab.min() < 0:
            raise DataError("label map contains negative entries")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def complete(self) -> bool:
        return bool(np.all(self.labels > 0))

    def grid(self) -> np.ndarray:
        return self.labels.reshape(self.rows, self.cols)


def save_cube(cube: HsiCube, path, dtype: str = "f32", payload: str | None = None) -> Path:
    """Write ``cube`` as a header at ``path`` plus a raw payload next to it."""
    if dtype not in _DTYPES:
        raise DataError(f"unsupported dtype {dtype!r}; use one of {sorted(_DTYPES)}")
    path = Path(path)
    payload = payload or path.with_suffix(".bin").name
    data = np.ascontiguousarray(cube.values, dtype=_DTYPES[dtype])
    (path.parent / payload).write_bytes(data.tobytes())
    header = {"rows": cube.rows, "cols": cube.cols, "bands": cube.bands, "dtype": dtype, "payload": payload}
    path.write_text(json.dumps(header, indent=1) + "\n")
    return path


def load_cube(path) -> HsiCube:
    path = Path(path)
    try:
        header = json.loads(path.read_text())
        rows, cols, bands = (int(header[k]) for k in ("rows", "cols", "bands"))
        dtype = _DTYPES[header.get("dtype", "f32")]
        payload = path.parent / header["payload"]
    except FileNotFoundError:
        raise DataError(f"cube header not found: {path}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"garbled cube header {path}: {exc!r}") from None
    if min(rows, cols, bands) < 1:
        raise DataError(f"cube header {path} declares empty dimensions {rows}x{cols}x{bands}")
    try:
        raw = payload.read_bytes()
    except FileNotFoundError:
        raise DataError(f"cube payload not found: {payload}") from None
    expected = rows * cols * bands
    if len(raw) != expected * dtype.itemsize:
        raise DataError(
            f"payload {payload.name} holds {len(raw) / dtype.itemsize:g} values, "
            f"header declares {rows}x{cols}x{bands} = {expected}"
        )
    values = np.frombuffer(raw, dtype=dtype).reshape(rows, cols, bands)
    return HsiCube(values)


def save_labels(labels: LabelMap, path) -> Path:
    path = Path(path)
    np.savetxt(path, labels.grid(), fmt="%d", delimiter=",")
    return path


def load_labels(path, cube: HsiCube | None = None) -> LabelMap:
    """Parse a CSV grid of integers; optionally check it against ``cube``."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise DataError(f"label file not found: {path}") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"label file {path} is empty; cannot infer dimensions")
    try:
        grid = [[int(tok) for tok in ln.split(",")] for ln in lines]
    except ValueError as exc:
        raise DataError(f"non-integer entry in {path}: {exc}") from None
    widths = {len(row) for row in grid}
    if len(widths) != 1:
        raise DataError(f"ragged rows in {path}: row widths {sorted(widths)}")
    lm = LabelMap(len(grid), widths.pop(), np.array(grid).reshape(-1))
    if cube is not None and (lm.rows, lm.cols) != (cube.rows, cube.cols):
        raise DataError(
            f"label map is {lm.rows}x{lm.cols} but cube is {cube.rows}x{cube.cols}"
        )
    return lm


def normalize_cube(cube: HsiCube, mode: str = "none", constant_band: str = "zero") -> HsiCube:
    """Return a preprocessed copy of ``cube``.

    ``per-band-zscore`` maps constant bands to zero unless
    ``constant_band="error"``.
    """
    if mode == "none":
        return cube
    x = cube.values
    if mode == "unit-norm-pixels":
        norms = np.linalg.norm(x, axis=2, keepdims=True)
        zero = np.argwhere(norms[..., 0] == 0)
        if len(zero):
            r, c = (int(v) for v in zero[0])
            raise DataError(f"pixel ({r}, {c}) has zero norm; cannot unit-normalize")
        return HsiCube(x / norms)
    if mode == "per-band-zscore":
        mu = x.mean(axis=(0, 1))
        sd = x.std(axis=(0, 1))
        flat = sd == 0
        if flat.any() and constant_band == "error":
            raise DataError(f"band {int(np.flatnonzero(flat)[0])} is constant; z-score undefined")
        out = (x - mu) / np.where(flat, 1.0, sd)
        out[..., flat] = 0.0
        return HsiCube(out)
    raise DataError(f"unknown normalization mode {mode!r}; choose from {NORMALIZE_MODES}")


@dataclass(frozen=True)
class Block:
    """Axis-aligned spatial block ``[r0, r1) x [c0, c1)`` with a mean spectrum."""

    r0: int
    r1: int
    c0: int
    c1: int
    mean: tuple


def synth_gaussian_scene(layout, rows: int, cols: int, noise: float, seed: int = 0):
    """Piecewise-constant scene plus i.i.d. Gaussian noise.

    Block ``k`` of ``layout`` gets label ``k + 1``; uncovered pixels keep label
    0 and a zero mean spectrum.

    Returns
    -------
    cube : HsiCube
    truth : LabelMap
    """
    layout = list(layout)
    if not layout:
        raise DataError("layout must contain at least one block")
    bands = len(layout[0].mean)
    means = np.zeros((rows, cols, bands))
    labels = np.zeros((rows, cols), dtype=np.int64)
    for k, blk in enumerate(layout, start=1):
        if len(blk.mean) != bands:
            raise DataError(f"block {k} has {len(blk.mean)} bands, expected {bands}")
        if not (0 <= blk.r0 < blk.r1 <= rows and 0 <= blk.c0 < blk.c1 <= cols):
            raise DataError(f"block {k} lies outside the {rows}x{cols} image")
        region = labels[blk.r0:blk.r1, blk.c0:blk.c1]
        if region.any():
            raise DataError(f"block {k} overlaps block {int(region.max())}")
        region[:] = k
        means[blk.r0:blk.r1, blk.c0:blk.c1] = blk.mean
    rng = np.random.default_rng(seed)
    values = means + noise * rng.standard_normal(means.shape)
    return HsiCube(values), LabelMap(rows, cols, labels.reshape(-1))


def quadrant_layout(rows: int, cols: int, means) -> list[Block]:
    """Four blocks tiling the image as quadrants, in reading order."""
    means = [tuple(float(v) for v in m) for m in means]
    if len(means) != 4:
        raise DataError("quadrant layout needs exactly four mean spectra")
    hr, hc = rows // 2, cols // 2
    boxes = [(0, hr, 0, hc), (0, hr, hc, cols), (hr, rows, 0, hc), (hr, rows, hc, cols)]
    return [Block(*box, mean=m) for box, m in zip(boxes, means)]
