"""Distributed Bayesian matrix decomposition on simulated workers."""

from .cluster import Cluster, CommLedger, OwnershipError
from .h_solver import assign_clusters, update_h
from .metrics import hungarian_accuracy
from .model import DataShard, Hyperparams, ModelState, objective
from .runtime import FitReport, RunConfig, fit, fit_matrix, partition
from .w_solvers import STRATEGIES, run_w_update, solve_w

__all__ = [
    "Cluster", "CommLedger", "OwnershipError", "DataShard", "Hyperparams", "ModelState",
    "FitReport", "RunConfig", "STRATEGIES", "assign_clusters", "fit", "fit_matrix",
    "hungarian_accuracy", "objective", "partition", "run_w_update", "solve_w", "update_h",
]
__version__ = "0.1.0"
