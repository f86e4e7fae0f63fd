"""Adaptive meta-aggregation for federated intrusion detection.

A desk-scale simulator: synthetic or CSV flow data is split across clients
with Dirichlet label skew, each client trains a small MLP under a hybrid
cross-entropy/Dice loss, and the server aggregates with weights derived from
data quality and validation performance (or plain FedAvg for comparison).
"""

from amafed.aggregator import (
    MetaObjectiveCfg,
    aggregate,
    amafed_weights,
    anomaly_bonus,
    fedavg_weights,
    init_weights,
    project_simplex,
    refine_weights,
    utility,
)
from amafed.config import ExperimentConfig, load_config, parse_config
from amafed.dataio import DatasetTable, dirichlet_partition, load_csv, synth_generate
from amafed.federation import compare_runs, run_experiment, run_round
from amafed.metrics import classification_metrics, confusion, ecdf, fleet_stats
from amafed.model import Architecture, ModelParams, TrainConfig, init_params, train_local

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "DatasetTable",
    "ExperimentConfig",
    "MetaObjectiveCfg",
    "ModelParams",
    "TrainConfig",
    "aggregate",
    "amafed_weights",
    "anomaly_bonus",
    "classification_metrics",
    "compare_runs",
    "confusion",
    "dirichlet_partition",
    "ecdf",
    "fedavg_weights",
    "fleet_stats",
    "init_params",
    "init_weights",
    "load_config",
    "load_csv",
    "parse_config",
    "project_simplex",
    "refine_weights",
    "run_experiment",
    "run_round",
    "synth_generate",
    "train_local",
    "utility",
]
