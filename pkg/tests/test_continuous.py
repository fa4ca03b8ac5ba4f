import numpy as np
import pytest

from dmatch.continuous import (ContinuousProblem, ConvexPart, FlowApprox, StereoApprox,
                               build_flow_approx, build_stereo_approx, conjugate_value,
                               dc_decompose, edge_difference, edge_divergence,
                               init_continuous_state, interp_cost, interp_flow_cost,
                               nonlinear_op_apply, nonlinear_op_gradient_adjoint,
                               nonlinear_op_jvp, operator_norm, pd_iterate, prox_data_flow,
                               prox_data_stereo, prox_p, prox_q, psd_part, refine,
                               set_step_sizes)
from dmatch.energy import CostVolume, FlowCostVolume2D, PenaltyParams, build_grid_graph
from dmatch.errors import ConfigurationError, DimensionError


def random_params(rng):
    eps = float(rng.uniform(0, 1))
    delta = float(rng.uniform(0, 3))
    C = float(rng.uniform(eps * delta, eps * delta + 5))
    return PenaltyParams(eps, delta, C)


def stereo_problem(rng, H=4, W=5, K=8, weights=None, params=None):
    vol = CostVolume(rng.uniform(0, 10, (H, W, K)))
    g = build_grid_graph(W, H, weights)
    return ContinuousProblem(vol, g, params or PenaltyParams(0.25, 2, 4))


def flow_problem(rng, H=3, W=4, K=5):
    vol = FlowCostVolume2D(rng.uniform(0, 10, (H, W, K, K)), np.arange(K) - 2.0,
                           np.arange(K) - 2.0)
    return ContinuousProblem(vol, build_grid_graph(W, H), PenaltyParams(0.5, 1, 3))


# ------------------------------------------------------------ penalty split

def test_dc_identity(rng):
    t = np.linspace(-12, 12, 2001)
    for _ in range(20):
        params = random_params(rng)
        split = dc_decompose(params)
        assert np.max(np.abs(split(t) - params(t))) <= 1e-12


def test_dc_examples():
    split = dc_decompose(PenaltyParams(0.25, 2, 4))
    assert split.plus == ConvexPart(0.25, 2)
    assert split.minus == ConvexPart(0.0, 5.5)


def test_conjugate_matches_legendre(rng):
    t = np.linspace(-40, 40, 80001)
    for _ in range(20):
        part = ConvexPart(float(rng.uniform(0, 1)), float(rng.uniform(0, 3)))
        w = float(rng.uniform(0.2, 3))
        for s in rng.uniform(-w, w, 5):
            tt = np.concatenate([t, [-part.beta, part.beta]])
            oracle = np.max(s * tt - w * part(tt))
            assert conjugate_value(s, w, part) == pytest.approx(oracle, abs=1e-6)
    assert np.isinf(conjugate_value(2.0, 1.0, ConvexPart(0.5, 1)))


def _prox_oracle(t_hat, w, part, step):
    s = np.linspace(-w, w, 400001)
    obj = step * conjugate_value(s, w, part) + 0.5 * (s - t_hat) ** 2
    return s[np.argmin(obj)]


def test_prox_p_and_q_match_grid_search(rng):
    for _ in range(30):
        plus = ConvexPart(float(rng.uniform(0, 1)), float(rng.uniform(0, 3)))
        minus = ConvexPart(0.0, float(rng.uniform(0, 5)))
        w, step = float(rng.uniform(0.2, 3)), float(rng.uniform(0.05, 2))
        t = float(rng.uniform(-2 * w - 3, 2 * w + 3))
        assert prox_p(t, w, plus, step) == pytest.approx(_prox_oracle(t, w, plus, step), abs=1e-4)
        assert prox_q(t, w, minus, step) == pytest.approx(_prox_oracle(t, w, minus, step), abs=1e-4)


def test_prox_nonexpansive(rng):
    plus = ConvexPart(0.3, 1.5)
    a, b = rng.uniform(-5, 5, (2, 1000))
    w = rng.uniform(0.1, 3, 1000)
    for prox in (lambda x: prox_p(x, w, plus, 0.7), lambda x: prox_q(x, w, plus, 0.7)):
        assert np.all(np.abs(prox(a) - prox(b)) <= np.abs(a - b) + 1e-12)


def test_prox_zero_weight():
    t = np.array([-3.0, 0.0, 2.5])
    assert np.all(prox_p(t, 0.0, ConvexPart(0.5, 1), 0.3) == 0)
    assert np.all(prox_q(t, 0.0, ConvexPart(0.0, 2), 0.3) == 0)
    with pytest.raises(ValueError):
        prox_p(t, 1.0, ConvexPart(0.5, 1), 0.0)


# ------------------------------------------------------------ operator

def test_edge_difference_adjoint(rng):
    g = build_grid_graph(5, 4)
    u = rng.standard_normal((4, 5, 2))
    p = rng.standard_normal((len(g.edges), 2))
    lhs = np.sum(edge_difference(u, g) * p)
    rhs = np.sum(u * edge_divergence(p, g))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_operator_derivative_by_finite_differences(rng):
    g = build_grid_graph(4, 3)
    E = len(g.edges)
    u, du = rng.standard_normal((2, 3, 4, 1))
    q, dq = rng.standard_normal((2, E, 1))
    h = 1e-6
    ap, dp = nonlinear_op_apply(u + h * du, q + h * dq, g)
    am, dm = nonlinear_op_apply(u - h * du, q - h * dq, g)
    jp, jd = nonlinear_op_jvp(u, q, du, dq, g)
    assert np.allclose((ap - am) / (2 * h), jp, atol=1e-4)
    assert (dp - dm) / (2 * h) == pytest.approx(jd, rel=1e-4, abs=1e-4)


def test_operator_gradient_adjoint(rng):
    g = build_grid_graph(4, 3)
    E = len(g.edges)
    for c in (1, 2):
        u, du = rng.standard_normal((2, 3, 4, c))
        q, dq, p = rng.standard_normal((3, E, c))
        d = float(rng.standard_normal())
        jp, jd = nonlinear_op_jvp(u, q, du, dq, g)
        gu, gq = nonlinear_op_gradient_adjoint(u, q, p, d, g)
        lhs = np.sum(jp * p) + jd * d
        rhs = np.sum(du * gu) + np.sum(dq * gq)
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_operator_norm_bounds(rng):
    g = build_grid_graph(6, 5)
    u = rng.standard_normal((5, 6, 1))
    q = np.zeros((len(g.edges), 1))
    L = operator_norm(u, q, g)
    Au = edge_difference(u, g)
    # the dummy row alone contributes |Au|, the difference operator at most sqrt(8)
    assert np.linalg.norm(Au) - 1e-9 <= L <= np.sqrt(8 + np.sum(Au ** 2)) + 1e-9
    assert L == operator_norm(u, q, g)
    with pytest.raises(DimensionError):
        nonlinear_op_apply(np.zeros((2, 2)), q, g)


# ------------------------------------------------------------ data models

def test_interpolation_examples():
    vol = CostVolume(np.array([[[4.0, 0.0, 2.0]]]), [0.0, 1.0, 3.0])
    u = np.array([[[0.5]], [[2.0]], [[-1.0]], [[9.0]]]).reshape(4, 1, 1)
    out = [float(interp_cost(vol, v[..., 0])[0, 0]) for v in u]
    assert out == [2.0, 1.0, 4.0, 2.0]
    fvol = FlowCostVolume2D(np.array([[[[0.0, 1.0], [2.0, 3.0]]]]))
    assert interp_flow_cost(fvol, np.array([[[0.5, 0.5]]]))[0, 0] == pytest.approx(1.5)


def test_stereo_approx_examples():
    k = np.arange(11.0)
    cases = [(np.abs(k - 5), -1.0, 1.0), (-(k - 5) ** 2, 0.0, 0.0), (np.zeros(11), 0.0, 0.0)]
    for costs, s1, s2 in cases:
        vol = CostVolume(costs.reshape(1, 1, 11))
        a = build_stereo_approx(vol, np.array([[5.0]]), h=0.5)
        assert (a.s1[0, 0], a.s2[0, 0]) == (s1, s2)
        assert a.s1[0, 0] <= a.s2[0, 0]
    a = build_stereo_approx(CostVolume(np.zeros((1, 1, 3))), np.array([[7.0]]))
    assert a.anchor[0, 0] == 2.0 and a.flagged[0, 0]


def test_flow_approx_examples():
    a, b = np.meshgrid(np.arange(5.0), np.arange(5.0), indexing="ij")
    bowl = FlowCostVolume2D(((a - 2) ** 2 + (b - 2) ** 2)[None, None])
    m = build_flow_approx(bowl, np.array([[[2.0, 2.0]]]), h=1.0)
    assert np.allclose(m.L, 0) and np.allclose(m.Q[0, 0], 2 * np.eye(2))
    saddle = FlowCostVolume2D(((a - 2) ** 2 - (b - 2) ** 2)[None, None])
    m = build_flow_approx(saddle, np.array([[[2.0, 2.0]]]), h=1.0)
    assert np.allclose(m.Q[0, 0], np.diag([2.0, 0.0]))
    Q = np.array([[1.0, 3.0], [3.0, 1.0]])
    assert np.all(np.linalg.eigvalsh(psd_part(Q)) >= -1e-12)


def _stereo_model(u, a, s1, s2):
    return np.where(u < a, s1 * (u - a), s2 * (u - a))


def test_stereo_prox_matches_grid_search(rng):
    for _ in range(40):
        a = float(rng.uniform(0, 10))
        s1, s2 = np.sort(rng.uniform(-5, 5, 2))
        h, tau = float(rng.uniform(0.1, 1)), float(rng.uniform(0.05, 1))
        u_hat = a + float(rng.uniform(-3, 3))
        approx = StereoApprox(np.array(a), np.array(s1), np.array(s2), h)
        grid = np.linspace(a - h, a + h, 200001)
        obj = (grid - u_hat) ** 2 / (2 * tau) + _stereo_model(grid, a, s1, s2)
        assert float(prox_data_stereo(u_hat, approx, tau)) == pytest.approx(
            grid[np.argmin(obj)], abs=1e-4)


def test_stereo_prox_nonexpansive_and_contained(rng):
    a = rng.uniform(0, 10, 500)
    s1 = rng.uniform(-5, 0, 500)
    approx = StereoApprox(a, s1, s1 + rng.uniform(0, 5, 500), 0.5)
    x, y = a + rng.uniform(-4, 4, (2, 500))
    px, py = prox_data_stereo(x, approx, 0.3), prox_data_stereo(y, approx, 0.3)
    assert np.all(np.abs(px - py) <= np.abs(x - y) + 1e-12)
    assert np.all(np.abs(px - a) <= 0.5 + 1e-12)


def _flow_obj(z, z_hat, L, Q, tau):
    r = z - z_hat
    return (0.5 * np.sum(r * r, -1) + tau * (np.sum(L * z, -1)
                                             + 0.5 * np.einsum("...i,ij,...j->...", z, Q, z)))


def test_flow_prox_matches_grid_search(rng):
    g = np.linspace(-1, 1, 801)
    Z = np.stack(np.meshgrid(g, g, indexing="ij"), -1)
    for _ in range(20):
        B = rng.standard_normal((2, 2))
        Q = B @ B.T
        L = rng.uniform(-4, 4, 2)
        h, tau = float(rng.uniform(0.2, 1)), float(rng.uniform(0.05, 1))
        anchor = rng.uniform(-2, 2, 2)
        u_hat = anchor + rng.uniform(-2, 2, 2)
        approx = FlowApprox(anchor, L, Q, h)
        z = prox_data_flow(u_hat, approx, tau) - anchor
        assert np.all(np.abs(z) <= h + 1e-12)
        obj = _flow_obj(h * Z, u_hat - anchor, L, Q, tau)
        best = np.unravel_index(np.argmin(obj), obj.shape)
        assert _flow_obj(z, u_hat - anchor, L, Q, tau) <= obj.min() + 1e-12
        assert np.allclose(z, h * Z[best], atol=5e-3)


def test_flow_prox_nonexpansive(rng):
    n = 300
    B = rng.standard_normal((n, 2, 2))
    approx = FlowApprox(rng.uniform(-2, 2, (n, 2)), rng.uniform(-3, 3, (n, 2)),
                        B @ np.swapaxes(B, 1, 2), 0.5)
    x, y = approx.anchor + rng.uniform(-2, 2, (2, n, 2))
    px, py = prox_data_flow(x, approx, 0.4), prox_data_flow(y, approx, 0.4)
    dist = np.linalg.norm(px - py, axis=-1)
    assert np.all(dist <= np.linalg.norm(x - y, axis=-1) + 1e-9)


# ------------------------------------------------------------ iteration

def test_pd_iteration_invariants(rng):
    prob = stereo_problem(rng)
    u0 = rng.uniform(1, 6, (4, 5))
    state = init_continuous_state(u0, prob)
    approx = prob.approximate(state.u)
    set_step_sizes(state, prob)
    assert state.tau * state.sigma * state.op_norm ** 2 <= 1
    w = prob.graph.edge_weights[:, None]
    for _ in range(30):
        pd_iterate(state, prob, approx)
        assert state.d_dummy == 1.0
        assert np.all(np.abs(state.p) <= w + 1e-12)
        assert np.all(np.abs(state.q) <= w + 1e-12)
        assert np.all(np.abs(state.u[..., 0] - approx.anchor) <= prob.h + 1e-12)


def test_zero_weights_keep_duals_at_zero(rng):
    prob = stereo_problem(rng, weights=np.zeros(4 * 4 + 5 * 3))
    state = init_continuous_state(rng.uniform(1, 6, (4, 5)), prob)
    approx = prob.approximate(state.u)
    set_step_sizes(state, prob)
    for _ in range(10):
        pd_iterate(state, prob, approx)
    assert np.all(state.p == 0) and np.all(state.q == 0)


@pytest.mark.parametrize("kind", ["stereo", "flow"])
def test_refine_stays_within_warp_radius(kind, rng):
    if kind == "stereo":
        prob = stereo_problem(rng)
        u0 = rng.integers(1, 6, (4, 5)).astype(float)
    else:
        prob = flow_problem(rng)
        u0 = rng.integers(-1, 2, (3, 4, 2)).astype(float)
    for warps in (1, 3):
        u = refine(u0, prob, warps=warps, iters_per_warp=15)
        assert u.shape == u0.shape
        assert np.all(np.abs(u - u0) <= warps * prob.h + 1e-9)
    assert np.array_equal(refine(u0, prob, warps=0), u0)


def test_step_size_violation_rejected(rng):
    prob = stereo_problem(rng)
    state = init_continuous_state(rng.uniform(1, 6, (4, 5)), prob)
    set_step_sizes(state, prob)
    state.tau *= 2
    with pytest.raises(ConfigurationError):
        pd_iterate(state, prob, prob.approximate(state.u))
    with pytest.raises(ConfigurationError):
        refine(np.zeros((4, 5)), prob, warps=-1)
    with pytest.raises(DimensionError):
        init_continuous_state(np.zeros((3, 5)), prob)


def test_energy_at_integers_matches_discrete(rng):
    prob = stereo_problem(rng)
    from dmatch.energy import energy_evaluate
    x = rng.integers(0, 8, (4, 5))
    assert prob.energy(x.astype(float)[..., None]) == pytest.approx(
        energy_evaluate(prob.data, prob.graph, prob.params, x), rel=1e-6)
