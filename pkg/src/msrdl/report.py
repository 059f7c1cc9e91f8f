"""Label-map rendering, smoothness proxy and the JSON run report."""

from __future__ import annotations

import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# fixed 20-colour qualitative palette; label k uses entry (k - 1) mod 20
PALETTE = (
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40), (148, 103, 189),
    (140, 86, 75), (227, 119, 194), (127, 127, 127), (188, 189, 34), (23, 190, 207),
    (174, 199, 232), (255, 187, 120), (152, 223, 138), (255, 152, 150), (197, 176, 213),
    (196, 156, 148), (247, 182, 210), (199, 199, 199), (219, 219, 141), (158, 218, 229),
)


def _grid(labels, rows, cols):
    lab = np.asarray(getattr(labels, "labels", labels)).reshape(-1)
    if lab.size != rows * cols:
        raise DataError(f"{lab.size} labels do not fill a {rows}x{cols} grid")
    return lab.reshape(rows, cols)


def colorize(labels, rows, cols, palette=PALETTE, warnings=None) -> np.ndarray:
    """RGB array (rows, cols, 3); label 0 is black."""
    grid = _grid(labels, rows, cols)
    pal = np.asarray(palette, dtype=np.uint8)
    if grid.max() > len(pal):
        msg = f"{int(grid.max())} labels exceed the {len(pal)}-colour palette; colours repeat"
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)
    rgb = pal[(np.maximum(grid, 1) - 1) % len(pal)]
    rgb[grid == 0] = 0
    return rgb


def render_label_map(labels, rows, cols, palette=PALETTE, warnings=None) -> bytes:
    """PNG bytes with one image pixel per scene pixel."""
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(colorize(labels, rows, cols, palette, warnings), "RGB").save(buf, format="PNG")
    return buf.getvalue()


def boundary_disagreement(labels, rows, cols) -> float:
    """Fraction of horizontally/vertically adjacent pixel pairs with different labels."""
    g = _grid(labels, rows, cols)
    diff = np.count_nonzero(g[:, 1:] != g[:, :-1]) + np.count_nonzero(g[1:] != g[:-1])
    pairs = rows * (cols - 1) + (rows - 1) * cols
    return diff / pairs if pairs else 0.0


def write_label_csv(labels, rows, cols, path):
    np.savetxt(path, _grid(labels, rows, cols), fmt="%d", delimiter=",")


@dataclass
class ScaleSummary:
    t: int
    K: int
    modes: list
    stage1_labeled: int
    boundary_disagreement: float
    runtime_ms: float = 0.0


@dataclass
class RunReport:
    """Everything needed to replay and audit a run.

    ``timing`` holds wall-clock data and is the only part expected to differ
    between identical runs.
    """

    command: str
    parameters: dict
    dataset: dict
    scales: list = field(default_factory=list)
    grid: list = field(default_factory=list)
    T: int | None = None
    J: list = field(default_factory=list)
    vi_totals: dict = field(default_factory=dict)
    t_star: int | None = None
    K_star: int | None = None
    metrics: dict = field(default_factory=dict)
    lazy_walk: bool = False
    warnings: list = field(default_factory=list)
    error: str | None = None
    timing: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self, timing=True) -> dict:
        d = asdict(self)
        d["vi_totals"] = {str(k): v for k, v in self.vi_totals.items()}
        if not timing:
            d.pop("timing")
            for s in d["scales"]:
                s.pop("runtime_ms", None)
        return d

    def to_json(self, timing=True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text) -> "RunReport":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise DataError(f"unsupported report schema {d.get('schema_version')!r}")
        d["scales"] = [ScaleSummary(**s) for s in d.get("scales", [])]
        d["vi_totals"] = {int(k): v for k, v in d.get("vi_totals", {}).items()}
        return cls(**d)

    def save(self, path):
        Path(path).write_text(self.to_json())
