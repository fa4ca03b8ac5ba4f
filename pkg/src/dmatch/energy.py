"""Grid graph, truncated penalty and the discretized pairwise energy.

Pixels are indexed in raster order, ``i = y * width + x``.  Edges connect
each pixel with its right and its lower neighbour; all horizontal edges come
first (raster order), then all vertical edges.  Labels are stored as integer
indices into ``label_values``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError

__all__ = [
    "PenaltyParams",
    "GridGraph",
    "CostVolume",
    "FlowCostVolume2D",
    "PairwiseModel",
    "GridProblem",
    "penalty_value",
    "pairwise_cost",
    "energy_evaluate",
    "decouple_flow_costs",
    "build_grid_graph",
]


@dataclass(frozen=True)
class PenaltyParams:
    """Truncated penalty with a shallow segment near zero.

    ``r(t) = epsilon*|t|`` for ``|t| <= delta``, then slope one until it
    reaches ``C``, and constant ``C`` beyond.
    """

    epsilon: float = 0.25
    delta: float = 2.0
    C: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.C < self.delta * self.epsilon:
            raise ValueError("truncation C must be at least epsilon * delta")

    @classmethod
    def truncated_linear(cls, C: float) -> "PenaltyParams":
        return cls(epsilon=1.0, delta=0.0, C=C)

    @classmethod
    def potts(cls, spacing: float = 1.0) -> "PenaltyParams":
        """Penalty whose samples on a grid of step ``spacing`` are Potts."""
        return cls(epsilon=1.0, delta=0.0, C=spacing)

    @property
    def outer_knee(self) -> float:
        """Point where the slope-one segment reaches the truncation."""
        return self.C + self.delta - self.epsilon * self.delta

    @property
    def is_truncated_linear(self) -> bool:
        return self.epsilon == 1.0 or self.delta == 0.0

    def __call__(self, t):
        a = np.abs(np.asarray(t, dtype=np.float64))
        inner = np.where(a <= self.delta, self.epsilon * a,
                         a - self.delta * (1.0 - self.epsilon))
        return np.minimum(inner, self.C)


def penalty_value(params: PenaltyParams, t):
    """Evaluate the truncated penalty ``r(t)``; works elementwise on arrays."""
    r = params(t)
    return float(r) if np.ndim(r) == 0 else r


@dataclass(frozen=True)
class GridGraph:
    width: int
    height: int
    edges: np.ndarray
    edge_weights: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        w = np.asarray(self.edge_weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != edges.shape[0]:
            raise DimensionError("one weight per edge is required")
        if np.any(w < 0):
            raise ValueError("edge weights must be nonnegative")
        i, j = edges[:, 0], edges[:, 1]
        n = self.width * self.height
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint outside the grid")
        adjacent = ((j - i == 1) & (i // self.width == j // self.width)) | (j - i == self.width)
        if not np.all(adjacent):
            raise ValueError("edges must join right or lower neighbours")
        if len(np.unique(i * n + j)) != len(i):
            raise ValueError("duplicate edge")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_weights", w)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def n_horizontal(self) -> int:
        return self.height * (self.width - 1)

    @property
    def is_standard(self) -> bool:
        """True when edges are the full right/down set in canonical order."""
        ref = _grid_edges(self.width, self.height)
        return ref.shape == self.edges.shape and np.array_equal(ref, self.edges)

    def horizontal_weights(self) -> np.ndarray:
        """Weights of horizontal edges as an array of shape (H, W-1)."""
        self._require_standard()
        return self.edge_weights[: self.n_horizontal].reshape(self.height, self.width - 1)

    def vertical_weights(self) -> np.ndarray:
        """Weights of vertical edges as an array of shape (H-1, W)."""
        self._require_standard()
        return self.edge_weights[self.n_horizontal:].reshape(self.height - 1, self.width)

    def with_weights(self, weights) -> "GridGraph":
        return GridGraph(self.width, self.height, self.edges, weights)

    def _require_standard(self):
        if not self.is_standard:
            raise ValueError("operation needs the canonical 4-neighbourhood edge set")


def _grid_edges(width: int, height: int) -> np.ndarray:
    idx = np.arange(width * height).reshape(height, width)
    h = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    v = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return np.concatenate([h, v]).astype(np.int64).reshape(-1, 2)


def build_grid_graph(width: int, height: int, weights=None) -> GridGraph:
    """4-connected grid with unit weights unless ``weights`` is given."""
    if width < 1 or height < 1:
        raise ValueError(f"grid dimensions must be positive, got {width}x{height}")
    edges = _grid_edges(width, height)
    if weights is None:
        weights = np.ones(len(edges))
    return GridGraph(width, height, edges, weights)


@dataclass
class CostVolume:
    """Sampled unary costs, ``costs[y, x, k]`` for label ``k``."""

    costs: np.ndarray
    label_values: Optional[np.ndarray] = None

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=np.float32)
        if costs.ndim != 3:
            raise DimensionError("costs must have shape (height, width, K)")
        if costs.shape[2] < 1:
            raise ValueError("at least one label is required")
        if not np.all(np.isfinite(costs)):
            raise ValueError("costs must be finite")
        if self.label_values is None:
            values = np.arange(costs.shape[2], dtype=np.float64)
        else:
            values = np.asarray(self.label_values, dtype=np.float64).reshape(-1)
        if values.shape[0] != costs.shape[2]:
            raise DimensionError("one label value per label is required")
        if np.any(np.diff(values) <= 0):
            raise ValueError("label values must be strictly increasing")
        self.costs = costs
        self.label_values = values

    @property
    def height(self) -> int:
        return self.costs.shape[0]

    @property
    def width(self) -> int:
        return self.costs.shape[1]

    @property
    def K(self) -> int:
        return self.costs.shape[2]


@dataclass
class FlowCostVolume2D:
    """Joint flow costs ``costs[y, x, a, b]`` over horizontal label ``a``
    and vertical label ``b``."""

    costs: np.ndarray
    values1: Optional[np.ndarray] = None
    values2: Optional[np.ndarray] = None

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=np.float32)
        if costs.ndim != 4:
            raise DimensionError("costs must have shape (height, width, K1, K2)")
        if not np.all(np.isfinite(costs)):
            raise ValueError("costs must be finite")
        self.costs = costs
        self.values1 = _default_values(self.values1, costs.shape[2])
        self.values2 = _default_values(self.values2, costs.shape[3])


def _default_values(values, k):
    if values is None:
        return np.arange(k, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.shape[0] != k or np.any(np.diff(values) <= 0):
        raise ValueError("component label grid must be strictly increasing, one value per label")
    return values


def decouple_flow_costs(vol2d: FlowCostVolume2D):
    """Optimistic per-component costs: minimize the joint table over the
    other component."""
    f1 = vol2d.costs.min(axis=3)
    f2 = vol2d.costs.min(axis=2)
    return CostVolume(f1, vol2d.values1), CostVolume(f2, vol2d.values2)


@dataclass(frozen=True)
class PairwiseModel:
    """Pairwise cost ``w_ij * table[a, b]`` shared by all edges.

    ``trunc`` is set when the table is a truncated linear function of the
    label values, ``min(|v_a - v_b|, trunc)``, which enables the linear-time
    message recurrence.
    """

    table: np.ndarray
    label_values: np.ndarray
    trunc: Optional[float] = None

    @classmethod
    def from_params(cls, params: PenaltyParams, label_values) -> "PairwiseModel":
        v = np.asarray(label_values, dtype=np.float64)
        table = params(v[:, None] - v[None, :])
        return cls(table, v, params.C if params.is_truncated_linear else None)

    @classmethod
    def from_table(cls, table) -> "PairwiseModel":
        table = np.asarray(table, dtype=np.float64)
        return cls(table, np.arange(table.shape[0], dtype=np.float64), None)

    @property
    def K(self) -> int:
        return self.table.shape[0]


def pairwise_cost(params: PenaltyParams, weight: float, a: int, b: int, label_values) -> float:
    v = np.asarray(label_values, dtype=np.float64)
    return float(weight * params(v[a] - v[b]))


def _as_labels(x, volume: CostVolume) -> np.ndarray:
    x = np.asarray(x)
    if x.size != volume.width * volume.height:
        raise DimensionError(
            f"labeling has {x.size} entries, grid has {volume.width * volume.height}")
    x = x.reshape(volume.height, volume.width).astype(np.int64)
    if x.size and (x.min() < 0 or x.max() >= volume.K):
        raise ValueError("label index out of range")
    return x


def energy_evaluate(volume: CostVolume, graph: GridGraph, params: PenaltyParams, x) -> float:
    """Total unary plus pairwise energy of labeling ``x`` (64-bit sums)."""
    if (graph.width, graph.height) != (volume.width, volume.height):
        raise DimensionError("graph and cost volume sizes differ")
    x = _as_labels(x, volume)
    rows, cols = np.indices(x.shape)
    unary = volume.costs[rows, cols, x].astype(np.float64).sum()
    flat = volume.label_values[x.ravel()]
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    pair = np.dot(graph.edge_weights, params(flat[i] - flat[j]))
    return float(unary + pair)


@dataclass
class GridProblem:
    """A discretized energy ready for the chain-based solvers.

    The horizontal subproblem holds every unary term; the vertical one
    starts with pairwise terms only.
    """

    volume: CostVolume
    graph: GridGraph
    params: PenaltyParams
    pairwise: PairwiseModel = field(init=False)

    def __post_init__(self):
        if (self.graph.width, self.graph.height) != (self.volume.width, self.volume.height):
            raise DimensionError("graph and cost volume sizes differ")
        self.pairwise = PairwiseModel.from_params(self.params, self.volume.label_values)
        self.unary = self.volume.costs.astype(np.float64)
        self.hweights = self.graph.horizontal_weights()
        self.vweights = self.graph.vertical_weights()

    @classmethod
    def from_arrays(cls, costs, params: PenaltyParams, weights=None, label_values=None):
        vol = CostVolume(costs, label_values)
        return cls(vol, build_grid_graph(vol.width, vol.height, weights), params)

    @property
    def shape(self):
        return self.volume.height, self.volume.width

    @property
    def K(self) -> int:
        return self.volume.K

    def energy(self, x) -> float:
        return energy_evaluate(self.volume, self.graph, self.params, x)
