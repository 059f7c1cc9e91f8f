"""Spatially regularized diffusion learning (SRDL) and its multiscale variant
for unsupervised clustering of hyperspectral images."""

from .density import DensityProfile, ModeSet, detect_modes, kde, rho
from .errors import ConfigError, DataError, MsrdlError, NumericError
from .geometry import DiffusionEmbedding, diffusion_distance, embed, horizon_time
from .graph import (DiffusionModel, GraphConfig, build_graph, diffusion_model, eigendecompose,
                    transition_matrix)
from .hsi import (Block, HsiCube, LabelMap, load_cube, load_labels, normalize_cube,
                  quadrant_layout, save_cube, save_labels, synth_gaussian_scene)
from .labeling import (Clustering, SRDLConfig, label_stage1, label_stage2, spatial_consensus,
                       srdl)
from .multiscale import (MultiscaleResult, NoNontrivialScale, against_truth, barycenter, msrdl,
                         nmi, time_grid, vi)
from .report import RunReport, ScaleSummary, boundary_disagreement, render_label_map

__version__ = "0.1.0"
