"""Dynamic programming on chains.

All routines operate on a batch of equally long chains stored as arrays
``unary[b, i, k]`` and ``weights[b, i]`` (weight of the edge ``i, i+1``), so
that every horizontal (or vertical) chain of a grid is processed at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .energy import CostVolume, GridGraph, PairwiseModel, PenaltyParams
from .errors import CapacityError, DimensionError

__all__ = [
    "ChainView",
    "pass_message",
    "left_messages",
    "right_messages",
    "min_marginals",
    "chain_argmin",
    "chain_energy",
    "normalize_min_marginals",
    "brute_force_chain",
    "brute_force_min",
]

# Above this label count the lower-envelope recurrence beats the dense table.
LINEAR_MESSAGE_MIN_K = 4
MAX_ENUMERATION = 10**7


@dataclass
class ChainView:
    """A batch of chains sharing one pairwise table.

    ``unary`` has shape (B, n, K) or (n, K) for a single chain, ``weights``
    (B, n-1) or (n-1,).  ``reversed_`` records whether node order has been
    flipped relative to the grid.
    """

    unary: np.ndarray
    weights: np.ndarray
    pairwise: PairwiseModel
    reversed_: bool = False

    def __post_init__(self):
        unary = np.asarray(self.unary, dtype=np.float64)
        self.batched = unary.ndim == 3
        if not self.batched:
            unary = unary[None]
        if unary.ndim != 3:
            raise DimensionError("unary must have shape (B, n, K) or (n, K)")
        B, n, K = unary.shape
        if n < 1:
            raise ValueError("a chain needs at least one node")
        weights = np.asarray(self.weights, dtype=np.float64).reshape(B, n - 1)
        if K != self.pairwise.K:
            raise DimensionError("unary label count differs from the pairwise table")
        self.unary = unary
        self.weights = weights

    @property
    def n(self) -> int:
        return self.unary.shape[1]

    @property
    def K(self) -> int:
        return self.unary.shape[2]

    def with_unary(self, unary) -> "ChainView":
        """Same chain structure with replaced (e.g. reparametrized) unaries."""
        unary = np.asarray(unary, dtype=np.float64)
        if not self.batched and unary.ndim == 3:
            unary = unary[0]
        return ChainView(unary, self.weights if self.batched else self.weights[0],
                         self.pairwise, self.reversed_)

    def reversed(self) -> "ChainView":
        c = ChainView(self.unary[:, ::-1], self.weights[:, ::-1], self.pairwise,
                      not self.reversed_)
        c.batched = self.batched
        return c

    def squeeze(self, a):
        return a if self.batched else a[0]


def pass_message(source, weights, pairwise: PairwiseModel, transpose=False, method="auto"):
    """``out[b] = min_a source[a] + w * table[a, b]`` over the last axis.

    With ``transpose`` the table is indexed ``table[b, a]`` (message sent
    against the edge orientation).  ``method`` is ``"dense"``, ``"linear"``
    (truncated-linear tables only) or ``"auto"``.
    """
    source = np.asarray(source, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if method == "auto":
        method = ("linear" if pairwise.trunc is not None and pairwise.K > LINEAR_MESSAGE_MIN_K
                  else "dense")
    if method == "linear":
        if pairwise.trunc is None:
            raise ValueError("linear-time messages need a truncated-linear table")
        return _linear_message(source, w, pairwise.label_values, pairwise.trunc)
    table = pairwise.table.T if transpose else pairwise.table
    w = np.broadcast_to(w, source.shape[:-1])
    return (source[..., :, None] + w[..., None, None] * table).min(axis=-2)


def _linear_message(source, w, values, trunc):
    w = np.broadcast_to(w, source.shape[:-1])
    out = source.copy()
    steps = np.diff(values)
    for k in range(1, out.shape[-1]):
        np.minimum(out[..., k], out[..., k - 1] + w * steps[k - 1], out=out[..., k])
    for k in range(out.shape[-1] - 2, -1, -1):
        np.minimum(out[..., k], out[..., k + 1] + w * steps[k], out=out[..., k])
    floor = source.min(axis=-1) + w * trunc
    return np.minimum(out, floor[..., None])


def kernel_args(pairwise: PairwiseModel):
    """Table arguments shared by the compiled kernels."""
    linear = pairwise.trunc is not None and pairwise.K > LINEAR_MESSAGE_MIN_K
    trunc = pairwise.trunc if pairwise.trunc is not None else 0.0
    return (np.ascontiguousarray(pairwise.table, dtype=np.float64),
            np.asarray(pairwise.label_values, dtype=np.float64), float(trunc), linear)


def left_messages(chain: ChainView, upto=None) -> np.ndarray:
    """Messages ``phi_{i-1,i}`` into every node from its left, (B, n, K)."""
    last = chain.n - 1 if upto is None else upto
    return _kernels.left_messages(np.ascontiguousarray(chain.unary),
                                  np.ascontiguousarray(chain.weights),
                                  *kernel_args(chain.pairwise), last)


def right_messages(chain: ChainView, downto=0) -> np.ndarray:
    """Messages ``phi_{i+1,i}`` into every node from its right, (B, n, K)."""
    return _kernels.right_messages(np.ascontiguousarray(chain.unary),
                                   np.ascontiguousarray(chain.weights),
                                   *kernel_args(chain.pairwise), downto)


def min_marginals(chain: ChainView) -> np.ndarray:
    """Exact min-marginals ``m_i(k)`` of every node of every chain."""
    m = left_messages(chain) + chain.unary + right_messages(chain)
    return chain.squeeze(m)


def normalize_min_marginals(m):
    """Subtract the per-node minimum (display convention)."""
    m = np.asarray(m, dtype=np.float64)
    return m - m.min(axis=-1, keepdims=True)


def chain_argmin(chain: ChainView):
    """Minimizing labeling and optimal value of every chain.

    Among several optima the lexicographically smallest labeling is returned:
    labels are decoded front to back, each time taking the smallest label
    that still completes to an optimum.
    """
    R = right_messages(chain)
    x, value = _kernels.decode(np.ascontiguousarray(chain.unary),
                               np.ascontiguousarray(chain.weights),
                               np.ascontiguousarray(chain.pairwise.table, dtype=np.float64), R)
    return chain.squeeze(x), chain.squeeze(value) if chain.batched else float(value[0])


def chain_energy(chain: ChainView, x) -> np.ndarray:
    """Energy of labeling(s) ``x`` (shape (B, n) or (n,)) on each chain."""
    x = np.asarray(x, dtype=np.int64).reshape(chain.unary.shape[0], chain.n)
    U, W, table = chain.unary, chain.weights, chain.pairwise.table
    unary = np.take_along_axis(U, x[..., None], axis=2)[..., 0].sum(axis=1)
    pair = (W * table[x[:, :-1], x[:, 1:]]).sum(axis=1)
    e = unary + pair
    return e if chain.batched else float(e[0])


def brute_force_chain(chain: ChainView):
    """Exhaustive optimum and min-marginals of a single small chain.

    Returns ``(labeling, value, min_marginals)``; test oracle only.
    """
    if chain.unary.shape[0] != 1:
        raise ValueError("brute force works on a single chain")
    n, K = chain.n, chain.K
    if K ** n > MAX_ENUMERATION:
        raise CapacityError(f"{K}^{n} labelings exceed the enumeration limit")
    X = np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64)
    U, W, table = chain.unary[0], chain.weights[0], chain.pairwise.table
    e = U[np.arange(n), X].sum(axis=1)
    if n > 1:
        e = e + (W * table[X[:, :-1], X[:, 1:]]).sum(axis=1)
    m = np.full((n, K), np.inf)
    for i in range(n):
        np.minimum.at(m[i], X[:, i], e)
    best = int(np.argmin(e))
    return X[best], float(e[best]), m


def brute_force_min(volume: CostVolume, graph: GridGraph, params: PenaltyParams,
                    chunk: int = 1 << 16):
    """Exact global optimum of a grid energy by enumeration.

    Labelings are visited in lexicographic order (pixel 0 most significant)
    and the first optimum is returned.
    """
    N, K = volume.width * volume.height, volume.K
    total = K ** N
    if total > MAX_ENUMERATION:
        raise CapacityError(f"{K}^{N} = {total} labelings exceed the limit of {MAX_ENUMERATION}")
    unary = volume.costs.reshape(N, K).astype(np.float64)
    values = volume.label_values
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    powers = K ** np.arange(N - 1, -1, -1, dtype=np.int64)
    best_value, best_x = np.inf, None
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        X = (idx[:, None] // powers) % K
        e = unary[np.arange(N), X].sum(axis=1)
        if len(i):
            e = e + (params(values[X[:, i]] - values[X[:, j]]) * graph.edge_weights).sum(axis=1)
        k = int(np.argmin(e))
        if e[k] < best_value:
            best_value, best_x = float(e[k]), X[k].copy()
    return best_x.reshape(volume.height, volume.width), best_value
