"""Grid solvers over the horizontal/vertical chain decomposition.

The energy is split as ``E = f + g`` with ``f`` the horizontal chains
(carrying every unary term) and ``g`` the vertical chains.  A dual point
``lam`` of shape (H, W, K) gives the lower bound

    D(lam) = sum_h min (f + lam) + sum_v min (g - lam).

``dmm_iterate`` is the parallel dual minorize-maximize scheme,
``trws_iterate`` the sequential per-pixel baseline and ``pmm_iterate`` the
primal majorize-minimize scheme.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import _kernels
from .chain import ChainView, chain_argmin, kernel_args
from .energy import GridProblem
from .errors import ConfigurationError
from .minorants import MINORANT_KINDS, build_minorant

__all__ = [
    "SolverConfig",
    "DualState",
    "SolveResult",
    "horizontal_chains",
    "vertical_chains",
    "dual_bound",
    "init_state",
    "dmm_phase",
    "dmm_iterate",
    "trws_iterate",
    "pmm_iterate",
    "round_primal",
    "solve",
]

log = logging.getLogger(__name__)

METHODS = ("dmm", "trws", "pmm")


@dataclass
class SolverConfig:
    method: str = "dmm"
    iterations: int = 4
    minorant: str = "hierarchical"
    minorant_options: dict = field(default_factory=dict)
    # relative bound change below which the loop stops early; None disables
    rel_tol: Optional[float] = None
    rounding: str = "best"

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be at least 1, got {self.iterations}")
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.minorant not in MINORANT_KINDS:
            raise ConfigurationError(f"unknown minorant {self.minorant!r}")
        if self.rounding not in ("best", "last"):
            raise ConfigurationError(f"unknown rounding policy {self.rounding!r}")


@dataclass
class DualState:
    lam: np.ndarray
    f_minorant: Optional[np.ndarray] = None
    g_minorant: Optional[np.ndarray] = None
    iteration: int = 0
    labeling: Optional[np.ndarray] = None
    best_labeling: Optional[np.ndarray] = None
    best_energy: float = np.inf
    bounds: List[float] = field(default_factory=list)
    phase_bounds: List[float] = field(default_factory=list)

    def offer(self, x, energy):
        self.labeling = x
        if energy < self.best_energy:
            self.best_energy = energy
            self.best_labeling = x.copy()


@dataclass
class SolveResult:
    labeling: np.ndarray
    bound_history: List[float]
    energy_history: List[float]
    millis: List[float]
    state: object


def horizontal_chains(problem: GridProblem, extra=None) -> ChainView:
    """Rows as chains, unaries plus ``extra`` (H, W, K)."""
    unary = problem.unary if extra is None else problem.unary + extra
    return ChainView(unary, problem.hweights, problem.pairwise)


def vertical_chains(problem: GridProblem, extra=None) -> ChainView:
    """Columns as chains with unary ``extra`` (zero if omitted)."""
    H, W = problem.shape
    unary = np.zeros((W, H, problem.K)) if extra is None else np.transpose(extra, (1, 0, 2))
    return ChainView(unary, problem.vweights.T, problem.pairwise)


def dual_bound(lam, problem: GridProblem) -> float:
    _, vh = chain_argmin(horizontal_chains(problem, lam))
    _, vv = chain_argmin(vertical_chains(problem, -lam))
    return float(np.sum(vh) + np.sum(vv))


def init_state(problem: GridProblem) -> DualState:
    H, W = problem.shape
    lam = np.zeros((H, W, problem.K))
    return DualState(lam=lam, g_minorant=np.zeros_like(lam))


def dmm_phase(state: DualState, problem: GridProblem, orientation: str, kind: str,
              **options) -> DualState:
    """Minimize the active chains under the current reparametrization,
    minorize them and hand the minorant to the other orientation."""
    if orientation == "horizontal":
        chains = horizontal_chains(problem, state.g_minorant)
        x, _ = chain_argmin(chains)
        mu = build_minorant(chains, kind, **options)
        state.f_minorant = mu - state.g_minorant
        state.lam = -state.f_minorant
    else:
        chains = vertical_chains(problem, state.f_minorant)
        x, _ = chain_argmin(chains)
        x = x.T
        mu = np.transpose(build_minorant(chains, kind, **options), (1, 0, 2))
        state.g_minorant = mu - state.f_minorant
        state.lam = state.g_minorant
    x = np.ascontiguousarray(x)
    state.offer(x, problem.energy(x))
    state.phase_bounds.append(dual_bound(state.lam, problem))
    return state


def dmm_iterate(state: DualState, problem: GridProblem, kind: str = "hierarchical",
                **options) -> DualState:
    """One iteration: a horizontal then a vertical phase."""
    dmm_phase(state, problem, "horizontal", kind, **options)
    horizontal_x = state.labeling
    dmm_phase(state, problem, "vertical", kind, **options)
    state.labeling = horizontal_x
    state.iteration += 1
    state.bounds.append(state.phase_bounds[-1])
    return state


def _trws_pass(U, lam, hw, vw, pw):
    """Scanline sweep updating one pixel at a time (in place on ``lam``)."""
    work = np.ascontiguousarray(lam)
    _kernels.trws_pass(np.ascontiguousarray(U), work, np.ascontiguousarray(hw),
                       np.ascontiguousarray(vw), *kernel_args(pw))
    lam[...] = work


def trws_iterate(state: DualState, problem: GridProblem, pass_direction: str = "forward"):
    """One sequential pass of per-pixel dual updates.

    ``"forward"`` visits pixels in raster order, ``"backward"`` in reverse.
    """
    U = problem.unary
    lam = state.lam
    hw, vw = problem.hweights, problem.vweights
    if pass_direction == "forward":
        _trws_pass(U, lam, hw, vw, problem.pairwise)
    elif pass_direction == "backward":
        _trws_pass(U[::-1, ::-1], lam[::-1, ::-1], hw[::-1, ::-1], vw[::-1, ::-1],
                   problem.pairwise)
    else:
        raise ValueError("pass_direction must be 'forward' or 'backward'")
    state.phase_bounds.append(dual_bound(lam, problem))
    return state


def _majorant(x, weights, table, axis):
    """Modular majorant of the pairwise terms along ``axis``, exact at ``x``.

    Edge ``(i, j)`` contributes ``w * table[:, x_j]`` to node ``i`` and
    ``w * max_a (table[a, :] - table[a, x_j])`` to node ``j``.
    """
    if axis == 1:
        xi, xj = x[:, :-1], x[:, 1:]
    else:
        xi, xj = x[:-1, :], x[1:, :]
    col = table[:, xj]  # (K, ...) values table[a, x_j]
    to_i = weights[..., None] * np.moveaxis(col, 0, -1)
    delta = (table[:, None, :] - table[:, :, None]).max(axis=0)  # delta[c, b]
    to_j = weights[..., None] * delta[xj]
    H, W = x.shape
    out = np.zeros((H, W, table.shape[0]))
    if axis == 1:
        out[:, :-1] += to_i
        out[:, 1:] += to_j
    else:
        out[:-1, :] += to_i
        out[1:, :] += to_j
    return out


def pmm_iterate(x, problem: GridProblem):
    """Two majorize-minimize steps: majorize the rows and minimize over the
    columns, then majorize the columns and minimize over the rows."""
    x = np.asarray(x, dtype=np.int64).reshape(problem.shape)
    table = problem.pairwise.table
    f_bar = problem.unary + _majorant(x, problem.hweights, table, axis=1)
    x1, _ = chain_argmin(vertical_chains(problem, f_bar))
    x1 = np.ascontiguousarray(x1.T)
    g_bar = _majorant(x1, problem.vweights, table, axis=0)
    x2, _ = chain_argmin(horizontal_chains(problem, g_bar))
    return x2


def round_primal(state: DualState, problem: GridProblem):
    """Labeling from the last horizontal minimization, or the best seen
    so far when no iteration has run yet."""
    if state.labeling is not None:
        return state.labeling
    x, _ = chain_argmin(horizontal_chains(problem, state.lam))
    return x


def solve(problem: GridProblem, config: SolverConfig) -> SolveResult:
    """Run ``config.iterations`` iterations, recording the lower bound and
    the best primal energy after each."""
    if not isinstance(config, SolverConfig):
        raise ConfigurationError("config must be a SolverConfig")
    bounds, energies, millis = [], [], []
    t0 = time.perf_counter()
    if config.method == "pmm":
        x, _ = chain_argmin(horizontal_chains(problem))
        best_x, best_e = x, problem.energy(x)
        for it in range(config.iterations):
            x = pmm_iterate(x, problem)
            e = problem.energy(x)
            if e < best_e:
                best_x, best_e = x, e
            bounds.append(float("nan"))
            energies.append(best_e)
            millis.append(1e3 * (time.perf_counter() - t0))
        return SolveResult(best_x, bounds, energies, millis, x)

    state = init_state(problem)
    for it in range(config.iterations):
        if config.method == "dmm":
            dmm_iterate(state, problem, config.minorant, **config.minorant_options)
        else:
            trws_iterate(state, problem, "forward")
            trws_iterate(state, problem, "backward")
            x, _ = chain_argmin(horizontal_chains(problem, state.lam))
            state.offer(x, problem.energy(x))
            state.iteration += 1
            state.bounds.append(state.phase_bounds[-1])
        bounds.append(state.bounds[-1])
        energies.append(state.best_energy)
        millis.append(1e3 * (time.perf_counter() - t0))
        log.debug("%s iter %d bound %.6g energy %.6g", config.method, it, bounds[-1],
                  energies[-1])
        if config.rel_tol is not None and it > 0:
            prev = bounds[-2]
            if abs(bounds[-1] - prev) <= config.rel_tol * max(1.0, abs(prev)):
                break
    x = state.best_labeling if config.rounding == "best" else round_primal(state, problem)
    return SolveResult(x, bounds, energies, millis, state)
