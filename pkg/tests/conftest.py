import numpy as np
import pytest

from dmatch.chain import ChainView
from dmatch.energy import PairwiseModel, PenaltyParams

# Unary table of the 3-label, 6-node worked chain; rows are labels.
WORKED_UNARY = np.array([[0, 0, 1, 0, 0, 8],
                         [9, 7, 0, 3, 2, 8],
                         [7, 3, 6, 9, 1, 0]], dtype=np.float64)

PENALTIES = [
    PenaltyParams.potts(),
    PenaltyParams.truncated_linear(2.0),
    PenaltyParams(0.25, 1.0, 2.0),
    PenaltyParams(0.5, 2.0, 3.0),
]


def worked_chain(potts_cost):
    pw = PairwiseModel.from_params(PenaltyParams.potts(), np.arange(3))
    return ChainView(WORKED_UNARY.T.copy(), np.full(5, float(potts_cost)), pw)


def random_chain(rng, n=None, K=None, integer=True, params=None):
    n = int(rng.integers(1, 9)) if n is None else n
    K = int(rng.integers(1, 5)) if K is None else K
    if integer:
        U = rng.integers(0, 10, (n, K)).astype(np.float64)
        W = rng.integers(0, 4, max(n - 1, 0)).astype(np.float64)
    else:
        U = rng.uniform(0, 10, (n, K))
        W = rng.uniform(0, 3, max(n - 1, 0))
    if params is None:
        params = PENALTIES[int(rng.integers(len(PENALTIES)))]
    pw = PairwiseModel.from_params(params, np.arange(K))
    return ChainView(U, W, pw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grid_optimum(problem):
    """Exact grid minimum by dynamic programming over a raster frontier.

    The state holds the labels of the last W pixels; each step adds one
    pixel and forgets the one above it.  Cost is O(H W K^(W+1)).
    """
    H, W = problem.shape
    K = problem.K
    U, T = problem.unary, problem.pairwise.table
    hw, vw = problem.hweights, problem.vweights
    # axis 0 is the oldest frontier pixel, the last axis the newest
    V = np.zeros((K,) * W)
    for r in range(H):
        for c in range(W):
            up = vw[r - 1, c] if r > 0 else 0.0
            # min over the forgotten pixel o: V[o, rest] + up * T[o, x]
            flat = V.reshape(K, -1)
            best = np.min(flat[:, :, None] + up * T[:, None, :], axis=0)  # (rest, x)
            best += U[r, c][None, :]
            if c > 0:
                newest = np.arange(best.shape[0]) % K
                best += hw[r, c - 1] * T[newest]
            V = best.reshape((K,) * W)
    return float(V.min())
