"""Continuous refinement of a discrete labeling.

The truncated penalty is split as ``r = r_plus - r_minus`` with both parts
convex, and the energy ``D(u) + sum_ij w_ij r((Au)_ij)`` is written as the
saddle problem over ``x = (u, q)`` and ``y = (p, d)``

    min_x max_y <Op(x), y> + G(x) - F*(y),
    Op(x) = [Au; -<Au, q>],  G(x) = R_minus*(q) + D(u),  F*(y) = R_plus*(p),

with the dummy ``d`` pinned to one.  The iteration is a primal-dual scheme
whose primal step linearizes ``Op`` at the current point.  The data term
``D`` is replaced by a convex model valid on a box of radius ``h`` around
an anchor, which is rebuilt at every warp.

Edge differences are ``(Au)_ij = u_i - u_j`` with ``i`` the left or upper
pixel.  ``u`` has shape (H, W, c), with ``c = 1`` for stereo and ``c = 2``
for flow.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .energy import CostVolume, FlowCostVolume2D, GridGraph, PenaltyParams
from .errors import ConfigurationError, DimensionError

__all__ = [
    "ConvexPart",
    "DCSplit",
    "dc_decompose",
    "conjugate_value",
    "prox_p",
    "prox_q",
    "edge_difference",
    "edge_divergence",
    "nonlinear_op_apply",
    "nonlinear_op_jvp",
    "nonlinear_op_gradient_adjoint",
    "operator_norm",
    "StereoApprox",
    "FlowApprox",
    "interp_cost",
    "interp_flow_cost",
    "build_stereo_approx",
    "build_flow_approx",
    "prox_data_stereo",
    "prox_data_flow",
    "ContinuousProblem",
    "ContinuousState",
    "init_continuous_state",
    "set_step_sizes",
    "psd_part",
    "pd_iterate",
    "refine",
]

log = logging.getLogger(__name__)

POWER_STEPS = 20
STEP_SCALE = 0.95


@dataclass(frozen=True)
class ConvexPart:
    """``r_{alpha,beta}(t)``: slope ``alpha`` up to ``beta``, slope one after."""

    alpha: float
    beta: float

    def __call__(self, t):
        a = np.abs(np.asarray(t, dtype=np.float64))
        return np.where(a <= self.beta, self.alpha * a, a - self.beta * (1.0 - self.alpha))


@dataclass(frozen=True)
class DCSplit:
    plus: ConvexPart
    minus: ConvexPart

    def __call__(self, t):
        return self.plus(t) - self.minus(t)


def dc_decompose(params: PenaltyParams) -> DCSplit:
    """``r = r_{eps,delta} - r_{0, C + delta - eps*delta}``."""
    return DCSplit(ConvexPart(params.epsilon, params.delta),
                   ConvexPart(0.0, params.outer_knee))


def conjugate_value(s, weight, part: ConvexPart):
    """``(w * r_{alpha,beta})*(s)``: ``max(0, beta*|s| - w*alpha*beta)`` on
    ``|s| <= w`` and ``+inf`` outside."""
    s = np.abs(np.asarray(s, dtype=np.float64))
    w = np.asarray(weight, dtype=np.float64)
    val = np.maximum(0.0, part.beta * s - w * part.alpha * part.beta)
    return np.where(s <= w, val, np.inf)


def _prox_conjugate(t, weight, alpha, beta, step):
    t = np.asarray(t, dtype=np.float64)
    w = np.asarray(weight, dtype=np.float64)
    a = np.abs(t)
    shrunk = np.sign(t) * np.maximum(alpha * w, a - beta * step)
    out = np.where(a <= alpha * w, t, shrunk)
    return np.clip(out, -w, w)


def prox_p(t_hat, weight, plus: ConvexPart, sigma):
    """Proximal point of ``sigma * (w * r_plus)*`` at ``t_hat``."""
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be positive")
    return _prox_conjugate(t_hat, weight, plus.alpha, plus.beta, sigma)


def prox_q(q_hat, weight, minus: ConvexPart, tau):
    """Proximal point of ``tau * (w * r_minus)*``; the minus part has zero
    inner slope, so this is a soft threshold clamped to ``[-w, w]``."""
    if np.any(np.asarray(tau) <= 0):
        raise ValueError("tau must be positive")
    return _prox_conjugate(q_hat, weight, 0.0, minus.beta, tau)


def edge_difference(u, graph: GridGraph):
    """``Au``: per-edge differences, shape (E, c)."""
    flat = np.asarray(u, dtype=np.float64).reshape(graph.n_pixels, -1)
    return flat[graph.edges[:, 0]] - flat[graph.edges[:, 1]]


def edge_divergence(p, graph: GridGraph):
    """``A^T p`` laid out per pixel, shape (H, W, c)."""
    p = np.asarray(p, dtype=np.float64).reshape(len(graph.edges), -1)
    N, c = graph.n_pixels, p.shape[1]
    out = np.empty((N, c))
    for k in range(c):
        out[:, k] = (np.bincount(graph.edges[:, 0], p[:, k], minlength=N)
                     - np.bincount(graph.edges[:, 1], p[:, k], minlength=N))
    return out.reshape(graph.height, graph.width, c)


def _check_shapes(u, q, graph):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 2:
        u = u[..., None]
    if u.shape[:2] != (graph.height, graph.width):
        raise DimensionError("u does not match the grid")
    q = np.asarray(q, dtype=np.float64).reshape(len(graph.edges), -1)
    if q.shape[1] != u.shape[2]:
        raise DimensionError("q and u have different component counts")
    return u, q


def nonlinear_op_apply(u, q, graph: GridGraph):
    """``(Au, -<Au, q>)``."""
    u, q = _check_shapes(u, q, graph)
    Au = edge_difference(u, graph)
    return Au, -float(np.sum(Au * q))


def nonlinear_op_jvp(u, q, du, dq, graph: GridGraph):
    """Derivative of the operator at ``(u, q)`` applied to ``(du, dq)``."""
    u, q = _check_shapes(u, q, graph)
    du, dq = _check_shapes(du, dq, graph)
    Au, Adu = edge_difference(u, graph), edge_difference(du, graph)
    return Adu, -float(np.sum(Adu * q) + np.sum(Au * dq))


def nonlinear_op_gradient_adjoint(u, q, p, d_dummy, graph: GridGraph):
    """Transposed derivative applied to ``y = (p, d)``:
    ``(A^T p - d A^T q, -d Au)``."""
    u, q = _check_shapes(u, q, graph)
    p = np.asarray(p, dtype=np.float64).reshape(q.shape)
    grad_u = edge_divergence(p - d_dummy * q, graph)
    grad_q = -d_dummy * edge_difference(u, graph)
    return grad_u, grad_q


def operator_norm(u, q, graph: GridGraph, steps: int = POWER_STEPS, seed: int = 0) -> float:
    """Power-iteration estimate of the norm of the operator derivative."""
    u, q = _check_shapes(u, q, graph)
    rng = np.random.default_rng(seed)
    vu, vq = rng.standard_normal(u.shape), rng.standard_normal(q.shape)
    norm = 0.0
    for _ in range(steps):
        s = np.sqrt(np.sum(vu ** 2) + np.sum(vq ** 2))
        if s == 0:
            return 0.0
        vu, vq = vu / s, vq / s
        yp, yd = nonlinear_op_jvp(u, q, vu, vq, graph)
        norm = np.sqrt(np.sum(yp ** 2) + yd ** 2)
        vu, vq = nonlinear_op_gradient_adjoint(u, q, yp, yd, graph)
    return float(norm)


# ---------------------------------------------------------------- data models

def _bracket(values, t):
    """Left grid index and fraction of ``t`` on a sorted grid (clamped)."""
    K = len(values)
    t = np.clip(t, values[0], values[-1])
    if K == 1:
        return np.zeros(t.shape, dtype=np.int64), np.zeros(t.shape), t
    i = np.clip(np.searchsorted(values, t, side="right") - 1, 0, K - 2)
    frac = (t - values[i]) / (values[i + 1] - values[i])
    return i, frac, t


def interp_cost(volume: CostVolume, u):
    """Piecewise-linear interpolation of ``volume`` at real labels ``u``
    (H, W); arguments outside the label range are clamped."""
    u = np.asarray(u, dtype=np.float64).reshape(volume.height, volume.width)
    i, frac, _ = _bracket(volume.label_values, u)
    c = volume.costs.astype(np.float64)
    lo = np.take_along_axis(c, i[..., None], axis=2)[..., 0]
    if volume.K == 1:
        return lo
    hi = np.take_along_axis(c, (i + 1)[..., None], axis=2)[..., 0]
    return lo + frac * (hi - lo)


def interp_flow_cost(volume: FlowCostVolume2D, u):
    """Bilinear interpolation of a joint flow volume at ``u`` (H, W, 2)."""
    u = np.asarray(u, dtype=np.float64)
    c = volume.costs.astype(np.float64)
    H, W, K1, K2 = c.shape
    i, fi, _ = _bracket(volume.values1, u[..., 0])
    j, fj, _ = _bracket(volume.values2, u[..., 1])
    i1, j1 = np.minimum(i + 1, K1 - 1), np.minimum(j + 1, K2 - 1)
    yy, xx = np.mgrid[0:H, 0:W]

    def at(a, b):
        return c[yy, xx, a, b]

    top = at(i, j) + fi * (at(i1, j) - at(i, j))
    bottom = at(i, j1) + fi * (at(i1, j1) - at(i, j1))
    return top + fj * (bottom - top)


@dataclass
class StereoApprox:
    """Two-slope convex model ``D(anchor) + s1*(u - a)`` left of the anchor,
    ``s2*(u - a)`` right of it, valid on ``[a - h, a + h]``."""

    anchor: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    h: float
    flagged: Optional[np.ndarray] = None

    def lower(self):
        return self.anchor - self.h

    def upper(self):
        return self.anchor + self.h


@dataclass
class FlowApprox:
    """Quadratic model ``L^T z + z^T Q z / 2`` in ``z = u - anchor``, valid
    on the box ``|z_k| <= h``."""

    anchor: np.ndarray  # (H, W, 2)
    L: np.ndarray  # (H, W, 2)
    Q: np.ndarray  # (H, W, 2, 2)
    h: float


def build_stereo_approx(volume: CostVolume, u, h: float = 0.5) -> StereoApprox:
    """Left and right difference quotients of the interpolated cost at
    ``u``; slopes are averaged where they would make the model concave."""
    if h <= 0:
        raise ValueError("trust radius h must be positive")
    u = np.asarray(u, dtype=np.float64).reshape(volume.height, volume.width)
    lo, hi = volume.label_values[0], volume.label_values[-1]
    anchor = np.clip(u, lo, hi)
    flagged = anchor != u
    d0 = interp_cost(volume, anchor)
    s1 = (d0 - interp_cost(volume, anchor - h)) / h
    s2 = (interp_cost(volume, anchor + h) - d0) / h
    bad = s2 < s1
    mean = 0.5 * (s1 + s2)
    s1 = np.where(bad, mean, s1)
    s2 = np.where(bad, mean, s2)
    return StereoApprox(anchor, s1, s2, float(h), flagged)


def build_flow_approx(volume: FlowCostVolume2D, u, h: float = 0.5) -> FlowApprox:
    """Central-difference gradient and Hessian with step ``h``; the Hessian
    keeps only its positive semidefinite part."""
    if h <= 0:
        raise ValueError("trust radius h must be positive")
    u = np.asarray(u, dtype=np.float64)
    lo = np.array([volume.values1[0], volume.values2[0]])
    hi = np.array([volume.values1[-1], volume.values2[-1]])
    a = np.clip(u, lo, hi)

    def D(dx, dy):
        return interp_flow_cost(volume, a + np.array([dx, dy]))

    d0 = D(0, 0)
    dxp, dxm, dyp, dym = D(h, 0), D(-h, 0), D(0, h), D(0, -h)
    L = np.stack([(dxp - dxm) / (2 * h), (dyp - dym) / (2 * h)], axis=-1)
    qxx = (dxp - 2 * d0 + dxm) / h ** 2
    qyy = (dyp - 2 * d0 + dym) / h ** 2
    qxy = (D(h, h) - D(h, -h) - D(-h, h) + D(-h, -h)) / (4 * h ** 2)
    Q = np.stack([np.stack([qxx, qxy], -1), np.stack([qxy, qyy], -1)], -2)
    return FlowApprox(a, L, psd_part(Q), float(h))


def psd_part(Q):
    """Clip negative eigenvalues of symmetric 2x2 blocks to zero."""
    evals, evecs = np.linalg.eigh(Q)
    evals = np.maximum(evals, 0.0)
    return np.einsum("...ik,...k,...jk->...ij", evecs, evals, evecs)


def prox_data_stereo(u_hat, approx: StereoApprox, tau: float):
    """``argmin_u (u - u_hat)^2 / (2 tau) + model(u)`` on the trust box."""
    u_hat = np.asarray(u_hat, dtype=np.float64)
    a = approx.anchor
    right = u_hat - tau * approx.s2
    left = u_hat - tau * approx.s1
    u = np.where(right > a, right, np.where(left < a, left, a))
    return np.clip(u, a - approx.h, a + approx.h)


def _flow_objective(z, z_hat, L, Q, tau):
    r = z - z_hat
    quad = np.einsum("...i,...ij,...j->...", z, Q, z)
    return 0.5 * np.sum(r * r, axis=-1) + tau * (np.sum(L * z, axis=-1) + 0.5 * quad)


def prox_data_flow(u_hat, approx: FlowApprox, tau: float):
    """``argmin_u |u - u_hat|^2 / (2 tau) + model(u)`` on the trust box,
    solved exactly: the unconstrained minimizer if it is feasible, otherwise
    the best of the minimizers restricted to each box edge."""
    u_hat = np.asarray(u_hat, dtype=np.float64)
    L, Q, h = approx.L, approx.Q, approx.h
    z_hat = u_hat - approx.anchor
    M = np.eye(2) + tau * Q
    rhs = z_hat - tau * L
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    z0 = np.stack([M[..., 1, 1] * rhs[..., 0] - M[..., 0, 1] * rhs[..., 1],
                   M[..., 0, 0] * rhs[..., 1] - M[..., 1, 0] * rhs[..., 0]], -1) / det[..., None]
    inside = np.all(np.abs(z0) <= h, axis=-1)
    best = np.clip(z0, -h, h)
    best_val = np.full(det.shape, np.inf)
    for k in (0, 1):
        o = 1 - k
        for side in (-h, h):
            # fix z_k = side and minimize the 1-D quadratic in z_o
            zo = (rhs[..., o] - M[..., o, k] * side) / M[..., o, o]
            z = np.empty_like(z0)
            z[..., k] = side
            z[..., o] = np.clip(zo, -h, h)
            val = _flow_objective(z, z_hat, L, Q, tau)
            better = val < best_val
            best = np.where(better[..., None], z, best)
            best_val = np.where(better, val, best_val)
    z = np.where(inside[..., None], z0, best)
    return approx.anchor + z


# ---------------------------------------------------------------- iteration

@dataclass
class ContinuousProblem:
    """Data volume (stereo or joint flow), graph weights and penalty."""

    data: Union[CostVolume, FlowCostVolume2D]
    graph: GridGraph
    params: PenaltyParams
    h: float = 0.5

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("trust radius h must be positive")
        shape = self.data.costs.shape[:2]
        if shape != (self.graph.height, self.graph.width):
            raise DimensionError("cost volume and graph sizes differ")
        self.split = dc_decompose(self.params)

    @property
    def components(self) -> int:
        return 2 if isinstance(self.data, FlowCostVolume2D) else 1

    def approximate(self, u):
        if self.components == 2:
            return build_flow_approx(self.data, u, self.h)
        return build_stereo_approx(self.data, u[..., 0], self.h)

    def data_prox(self, u_hat, approx, tau):
        if self.components == 2:
            return prox_data_flow(u_hat, approx, tau)
        return prox_data_stereo(u_hat[..., 0], approx, tau)[..., None]

    def data_term(self, u):
        if self.components == 2:
            return float(np.sum(interp_flow_cost(self.data, u)))
        return float(np.sum(interp_cost(self.data, u[..., 0])))

    def energy(self, u):
        """Continuous energy: interpolated data plus weighted penalty."""
        u = np.asarray(u, dtype=np.float64).reshape(self.graph.height, self.graph.width, -1)
        Au = edge_difference(u, self.graph)
        reg = np.sum(self.graph.edge_weights[:, None] * self.params(Au))
        return self.data_term(u) + float(reg)


@dataclass
class ContinuousState:
    u: np.ndarray  # (H, W, c)
    q: np.ndarray  # (E, c)
    p: np.ndarray  # (E, c)
    d_dummy: float = 1.0
    tau: float = 1.0
    sigma: float = 1.0
    op_norm: float = 0.0
    iteration: int = 0
    history: list = field(default_factory=list)


def init_continuous_state(u, problem: ContinuousProblem) -> ContinuousState:
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 2:
        u = u[..., None]
    if u.shape != (problem.graph.height, problem.graph.width, problem.components):
        raise DimensionError("initial u has the wrong shape")
    E = len(problem.graph.edges)
    zeros = np.zeros((E, problem.components))
    return ContinuousState(u.copy(), zeros.copy(), zeros.copy())


def set_step_sizes(state: ContinuousState, problem: ContinuousProblem):
    """``tau = sigma = 0.95 / L`` with ``L`` the estimated operator norm."""
    L = operator_norm(state.u, state.q, problem.graph)
    state.op_norm = L
    step = STEP_SCALE / L if L > 0 else 1.0
    state.tau = state.sigma = step
    return state


def pd_iterate(state: ContinuousState, problem: ContinuousProblem, approx) -> ContinuousState:
    """One primal step on ``(u, q)`` and one extrapolated dual step on ``p``."""
    if state.tau <= 0 or state.sigma <= 0:
        raise ConfigurationError("step sizes must be positive")
    if state.tau * state.sigma * state.op_norm ** 2 > 1.0 + 1e-12:
        raise ConfigurationError(
            f"step sizes violate tau*sigma*L^2 <= 1 (L = {state.op_norm:.4g})")
    g = problem.graph
    w = g.edge_weights[:, None]
    grad_u, grad_q = nonlinear_op_gradient_adjoint(state.u, state.q, state.p, state.d_dummy, g)
    u_new = problem.data_prox(state.u - state.tau * grad_u, approx, state.tau)
    q_new = prox_q(state.q - state.tau * grad_q, w, problem.split.minus, state.tau)
    Au_bar = edge_difference(2.0 * u_new - state.u, g)
    state.p = prox_p(state.p + state.sigma * Au_bar, w, problem.split.plus, state.sigma)
    state.u, state.q = u_new, q_new
    state.d_dummy = 1.0
    state.iteration += 1
    return state


def refine(u_init, problem: ContinuousProblem, warps: int = 5, iters_per_warp: int = 40,
           state: Optional[ContinuousState] = None) -> np.ndarray:
    """Warping loop: rebuild the data model at the current ``u``, then run
    ``iters_per_warp`` primal-dual steps.  Returns ``u`` with the shape of
    ``u_init``."""
    if warps < 0 or iters_per_warp < 0:
        raise ConfigurationError("warps and iterations must be nonnegative")
    u0 = np.asarray(u_init, dtype=np.float64)
    if state is None:
        state = init_continuous_state(u0, problem)
    for k in range(warps):
        approx = problem.approximate(state.u)
        set_step_sizes(state, problem)
        for _ in range(iters_per_warp):
            pd_iterate(state, problem, approx)
        state.history.append(problem.energy(state.u))
        log.debug("warp %d energy %.6g step %.3g", k, state.history[-1], state.tau)
    return state.u.reshape(u0.shape)
