import itertools

import numpy as np
import pytest

from dmatch.energy import GridProblem, PenaltyParams
from dmatch.errors import ConfigurationError
from dmatch.solvers import (SolverConfig, dmm_iterate, dual_bound, horizontal_chains,
                            init_state, pmm_iterate, solve, trws_iterate, vertical_chains)
from dmatch.chain import chain_argmin

from conftest import PENALTIES, grid_optimum

STUCK = np.array([[[0.0, 3.0], [2.0, 3.0]], [[2.0, 2.0], [3.0, 2.0]]])


def random_problem(rng, H=3, W=3, K=3, params=None):
    costs = rng.integers(0, 10, (H, W, K)).astype(np.float64)
    n_edges = H * (W - 1) + W * (H - 1)
    weights = rng.uniform(0.5, 3.0, n_edges)
    params = params or PENALTIES[int(rng.integers(len(PENALTIES)))]
    return GridProblem.from_arrays(costs, params, weights=weights)


def brute_force(problem):
    H, W = problem.shape
    best = np.inf
    for x in itertools.product(range(problem.K), repeat=H * W):
        best = min(best, problem.energy(np.array(x).reshape(H, W)))
    return best


def test_grid_oracle_matches_enumeration(rng):
    for H, W in [(1, 4), (4, 1), (2, 3), (3, 3)]:
        for _ in range(3):
            p = random_problem(rng, H, W, 3)
            assert grid_optimum(p) == pytest.approx(brute_force(p), abs=1e-9)


@pytest.mark.parametrize("method,kind", [("dmm", "uniform"), ("dmm", "hierarchical"),
                                         ("dmm", "iterative"), ("trws", "hierarchical")])
def test_bound_monotone_and_weak_duality(method, kind, rng):
    for _ in range(4):
        p = random_problem(rng)
        opt = brute_force(p)
        res = solve(p, SolverConfig(method=method, minorant=kind, iterations=6))
        b = np.array(res.bound_history)
        assert np.all(np.diff(b) >= -1e-9)
        assert np.all(b <= opt + 1e-9)
        assert np.all(np.array(res.energy_history) >= opt - 1e-9)
        assert p.energy(res.labeling) == pytest.approx(res.energy_history[-1])


def test_zero_pairwise_is_solved_in_one_iteration(rng):
    costs = rng.uniform(0, 5, (4, 5, 3))
    p = GridProblem.from_arrays(costs, PenaltyParams.potts(), weights=np.zeros(4 * 4 + 5 * 3))
    opt = costs.min(axis=2).sum()
    for method in ("dmm", "trws"):
        res = solve(p, SolverConfig(method=method, iterations=1))
        assert res.bound_history[0] == pytest.approx(opt)
        assert res.energy_history[0] == pytest.approx(opt)


def test_single_pixel():
    p = GridProblem.from_arrays(np.array([[[3.0, 1.0, 2.0]]]), PenaltyParams.potts())
    for method in ("dmm", "trws", "pmm"):
        res = solve(p, SolverConfig(method=method, iterations=2))
        assert res.labeling.tolist() == [[1]]
        assert res.energy_history[-1] == 1.0
        if method != "pmm":
            assert res.bound_history == [1.0, 1.0]


def test_stuck_point_escaped_by_maximal_minorants():
    p = GridProblem.from_arrays(STUCK, PenaltyParams.potts(), weights=np.full(4, 2.0))
    stuck = solve(p, SolverConfig(iterations=3, minorant="unary")).bound_history
    assert stuck == [6.0, 6.0, 6.0]
    for kind in ("uniform", "hierarchical"):
        b = solve(p, SolverConfig(iterations=2, minorant=kind)).bound_history
        assert b[-1] > stuck[-1]
        assert b[-1] == pytest.approx(brute_force(p))


def test_pmm_energy_nonincreasing(rng):
    for _ in range(5):
        p = random_problem(rng, 5, 6, 4)
        x, _ = chain_argmin(horizontal_chains(p))
        e = [p.energy(x)]
        for _ in range(5):
            x = pmm_iterate(x, p)
            e.append(p.energy(x))
        assert np.all(np.diff(e) <= 1e-9)
        res = solve(p, SolverConfig(method="pmm", iterations=3))
        assert np.isnan(res.bound_history).all()


def _split_energy(p, lam, x):
    h = horizontal_chains(p, lam)
    v = vertical_chains(p, -lam)

    def chain_energy(c, xs):
        U = c.unary[np.arange(c.unary.shape[0])[:, None], np.arange(c.n)[None], xs]
        pair = c.weights * c.pairwise.table[xs[:, :-1], xs[:, 1:]]
        return U.sum() + pair.sum()

    return chain_energy(h, x) + chain_energy(v, x.T)


@pytest.mark.parametrize("method", ["dmm", "trws"])
def test_reparametrization_preserves_energy(method, rng):
    p = random_problem(rng, 4, 5, 3)
    state = init_state(p)
    for _ in range(2):
        if method == "dmm":
            dmm_iterate(state, p, "hierarchical")
        else:
            trws_iterate(state, p, "forward")
    for _ in range(10):
        x = rng.integers(0, p.K, p.shape)
        assert _split_energy(p, state.lam, x) == pytest.approx(p.energy(x), abs=1e-9)
    assert dual_bound(state.lam, p) == pytest.approx(state.phase_bounds[-1])


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(iterations=0)
    with pytest.raises(ConfigurationError):
        SolverConfig(method="icm")
    with pytest.raises(ConfigurationError):
        SolverConfig(minorant="bogus")
    p = GridProblem.from_arrays(np.zeros((1, 1, 2)), PenaltyParams.potts())
    with pytest.raises(ConfigurationError):
        solve(p, {"iterations": 2})


def test_deterministic(rng):
    p = random_problem(rng, 6, 7, 4)
    a = solve(p, SolverConfig(iterations=3))
    b = solve(p, SolverConfig(iterations=3))
    assert a.bound_history == b.bound_history
    assert np.array_equal(a.labeling, b.labeling)
