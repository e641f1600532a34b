"""Minimal spanning trees, invasion and near-critical percolation on planar lattices."""

from .errors import (
    CalibrationError,
    ConfigurationError,
    FitError,
    FormatError,
    InfiniteLambdaError,
    IntegrityError,
    NearcritError,
    UnreachableError,
    UsageError,
)
from .geometry import BOX, SQUARE, TORUS, TRIANGULAR, LatticeSpec, box_cover, build_geometry, neighbors
from .ensemble import (
    Calibration,
    Window,
    calibrate_r,
    config_at,
    edge_lex_label,
    lambda_to_p,
    p_to_lambda,
    sample_labels,
)
from .forest import SpanningTree, StopRule, clusters_at, invade, mst_kruskal, tree_path
from .pivnet import build_network, cutoff_forest, cutoff_invasion, find_important, giant, switches
from .treespace import d_omega_truncated, extract_sample, frechet, tree_dist
from .stats import (
    ArmSpec,
    arm_probability,
    cluster_volume_law,
    degree_census,
    minkowski_fit,
    stability_ratio,
    trunk_curve,
)

__version__ = "0.1.0"
