"""Grain-growth surrogate workbench.

Pipeline: Potts Monte Carlo coarsening data -> smooth order-parameter
fields -> lossless spatial compression -> latent-space graph-network
dynamics -> autoregressive rollout + grain-statistics validation.
"""

from .errors import ConfigError, DataError, NumericalError
from .lattice import McConfig, SpinLattice, init_lattice, run_trajectory
from .coarsen import CoarsenConfig, postprocess
from .invertible import AeParams, encode, decode, space_to_depth, depth_to_space
from .graph import GridGraph, build_grid_graph
from .gnn import GnnParams, init_gnn_params, gnn_forward
from .training import TrainConfig, train, multi_step_loss
from .rollout import rollout_original, rollout_latent, rollout_gnn_only, extrapolate
from .grainstats import label_grains, grain_metrics, trajectory_statistics, rmse
from .estimator import GrainGrowthSurrogate, InvertibleCompressor, LatticeCoarsener

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "NumericalError",
    "McConfig", "SpinLattice", "init_lattice", "run_trajectory",
    "CoarsenConfig", "postprocess",
    "AeParams", "encode", "decode", "space_to_depth", "depth_to_space",
    "GridGraph", "build_grid_graph",
    "GnnParams", "init_gnn_params", "gnn_forward",
    "TrainConfig", "train", "multi_step_loss",
    "rollout_original", "rollout_latent", "rollout_gnn_only", "extrapolate",
    "label_grains", "grain_metrics", "trajectory_statistics", "rmse",
    "GrainGrowthSurrogate", "InvertibleCompressor", "LatticeCoarsener",
]
