"""Discrete-continuous dense image matching.

A grid MRF solved in the dual by parallel minorize-maximize over horizontal
and vertical chains, followed by a non-linear primal-dual refinement of the
same truncated-norm energy in the continuous domain.
"""

from .energy import (
    CostVolume,
    FlowCostVolume2D,
    GridGraph,
    GridProblem,
    PairwiseModel,
    PenaltyParams,
    build_grid_graph,
    decouple_flow_costs,
    energy_evaluate,
    pairwise_cost,
    penalty_value,
)
from .errors import (
    CapacityError,
    ConfigurationError,
    ConvergenceError,
    DimensionError,
    ImageFormatError,
)

__version__ = "0.1.0"

__all__ = [
    "CostVolume",
    "FlowCostVolume2D",
    "GridGraph",
    "GridProblem",
    "PairwiseModel",
    "PenaltyParams",
    "build_grid_graph",
    "decouple_flow_costs",
    "energy_evaluate",
    "pairwise_cost",
    "penalty_value",
    "CapacityError",
    "ConfigurationError",
    "ConvergenceError",
    "DimensionError",
    "ImageFormatError",
]
