"""Distributed neighbor-expansion edge partitioning."""

from .baselines import partition_dbh, partition_grid, partition_random, partition_sequential_ne
from .engine import DneResult, partition_dne
from .expansion import ExpansionConfig
from .graph import Graph, RmatParams, generate_rmat, load_edge_list
from .metrics import (
    PartitionAssignment,
    edge_balance,
    powerlaw_expected_ub,
    replication_factor,
    theoretical_upper_bound,
    validate_assignment,
    vertex_balance,
)

__version__ = "0.1.0"

__all__ = [
    "DneResult",
    "ExpansionConfig",
    "Graph",
    "PartitionAssignment",
    "RmatParams",
    "edge_balance",
    "generate_rmat",
    "load_edge_list",
    "partition_dbh",
    "partition_dne",
    "partition_grid",
    "partition_random",
    "partition_sequential_ne",
    "powerlaw_expected_ub",
    "replication_factor",
    "theoretical_upper_bound",
    "validate_assignment",
    "vertex_balance",
]
