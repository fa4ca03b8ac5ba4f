"""Modular minorants of chain energies.

A minorant ``lam`` (same shape as the unaries) satisfies
``sum_i lam_i(x_i) <= f(x)`` for every labeling ``x`` of the chain.  The
maximal constructions below (uniform, iterative, hierarchical) first spread
the chain optimum evenly over the nodes, so that the remainder has optimum
zero, and then drain min-marginals of the remainder into ``lam``.  Draining
never removes an optimal labeling, hence the result is exact on every
optimum of ``f``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chain import (
    ChainView,
    MAX_ENUMERATION,
    chain_argmin,
    chain_energy,
    min_marginals,
    pass_message,
    right_messages,
)
from .errors import CapacityError, ConvergenceError

__all__ = [
    "MINORANT_KINDS",
    "naive_minorant",
    "unary_minorant",
    "uniform_minorant",
    "min_ratio_step",
    "iterative_minorant",
    "handshake",
    "hierarchical_minorant",
    "build_minorant",
    "verify_minorant",
    "MinorantReport",
]

MINORANT_KINDS = ("naive", "uniform", "iterative", "hierarchical", "unary")


def _batched(chain: ChainView, lam):
    return lam if chain.batched else lam[0]


def _spread_optimum(chain: ChainView):
    """Per-node share ``f*/n`` of each chain optimum, shape (B, n, K)."""
    m0 = min_marginals(chain)
    m0 = m0 if chain.batched else m0[None]
    opt = m0[:, 0].min(axis=1)
    return np.broadcast_to((opt / chain.n)[:, None, None], chain.unary.shape).copy(), opt


def naive_minorant(chain: ChainView):
    """Min-marginals divided by the chain length."""
    return min_marginals(chain) / chain.n


def unary_minorant(chain: ChainView):
    """The unary terms alone.

    A minorant whenever pairwise costs are nonnegative, but it never moves
    slack along the chain; kept as the degenerate choice that lets the dual
    method stall.
    """
    return _batched(chain, chain.unary.copy())


def min_ratio_step(chain: ChainView, support, tol: float = 1e-12, max_steps: int = 200,
                   marginals=None):
    """Largest ``eps`` with ``eps * <1 - O, x> <= r(x)`` for all labelings.

    ``chain`` holds the residual ``r`` (optimum zero), ``support`` the boolean
    support set ``O``.  Solved by Dinkelbach's parametric iteration, each
    step one chain minimization with modified unaries.  Returns one value per
    chain (a float for a single chain).  ``marginals`` may pass in the
    already computed min-marginals of ``chain``.
    """
    R = chain.unary
    O = np.asarray(support, dtype=bool).reshape(R.shape)
    free = (~O).astype(np.float64)
    m = min_marginals(chain) if marginals is None else marginals
    m = m if chain.batched else m[None]
    opt = m[:, 0].min(axis=1)
    gap = np.where(O, np.inf, m - opt[:, None, None])
    # A labeling through the cheapest free label has ratio at most its gap.
    eps = gap.reshape(len(R), -1).min(axis=1)
    if not np.all(np.isfinite(eps)):
        raise ValueError("support set covers every label of some chain")
    R = R - (opt / chain.n)[:, None, None]
    thr = tol * (1.0 + np.abs(R).max(axis=(1, 2)))
    batch = ChainView(R, chain.weights, chain.pairwise)
    active = np.ones(len(R), dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        sub = ChainView(R[idx] - eps[idx, None, None] * free[idx], batch.weights[idx],
                        chain.pairwise)
        x, val = chain_argmin(sub)
        improving = val < -thr[idx]
        if not np.any(improving):
            break
        j = idx[improving]
        xr = x[improving]
        num = chain_energy(ChainView(R[j], batch.weights[j], chain.pairwise), xr)
        den = np.take_along_axis(free[j], xr[..., None], axis=2)[..., 0].sum(axis=1)
        eps[j] = num / den
        active[idx[~improving]] = False
    else:
        raise ConvergenceError("Dinkelbach iteration did not terminate")
    return eps if chain.batched else float(eps[0])


def uniform_minorant(chain: ChainView, tol: float = 1e-9, max_rounds: Optional[int] = None,
                     trace: Optional[list] = None, spread: bool = True):
    """Maximal uniform minorant.

    Each round raises every label outside the current optimal support set by
    the same amount, the largest that keeps ``lam`` a minorant, until all
    min-marginals of the remainder vanish.  If ``trace`` is a list, one
    ``(eps, support)`` pair per round is appended (batched arrays).

    The chain optimum is carried by the first node during the rounds, so
    integer costs stay in exact arithmetic; with ``spread`` it is moved to
    an equal share ``f*/n`` per node at the end.
    """
    U = chain.unary
    _, opt = _spread_optimum(chain)
    lam = np.zeros(U.shape)
    lam[:, 0] = opt[:, None]
    scale = tol * (1.0 + np.abs(opt))
    if max_rounds is None:
        max_rounds = chain.n * chain.K + 1
    active = np.arange(len(U))
    for _ in range(max_rounds):
        sub = ChainView(U[active] - lam[active], chain.weights[active], chain.pairwise)
        m = min_marginals(sub)
        gap = m - m[:, 0].min(axis=1)[:, None, None]
        done = gap.max(axis=(1, 2)) <= scale[active]
        if trace is not None:
            eps_round = np.zeros(len(U))
            support = np.ones(U.shape, dtype=bool)
            support[active] = gap <= scale[active, None, None]
        if np.all(done):
            break
        keep = ~done
        active, gap, m, sub = active[keep], gap[keep], m[keep], ChainView(
            sub.unary[keep], sub.weights[keep], chain.pairwise)
        O = gap <= scale[active, None, None]
        eps = min_ratio_step(sub, O, marginals=m)
        lam[active] += eps[:, None, None] * (~O)
        if trace is not None:
            eps_round[active] = eps
            trace.append((eps_round, support))
    else:
        residual = float(gap.max()) if len(active) else 0.0
        raise ConvergenceError(f"uniform minorant not maximal after {max_rounds} rounds",
                               residual=residual)
    if spread:
        lam[:, 0] -= opt[:, None]
        lam += (opt / chain.n)[:, None, None]
    return _batched(chain, lam)


def _sweep(U, W, pairwise, lam, incoming, gammas, transpose=False, counter=None):
    """Drain ``gammas[i]`` of each node's current residual min-marginal,
    front to back.  ``incoming`` holds the messages from the back, valid for
    the current residual; returns the front messages of the new residual."""
    n = U.shape[1]
    F = np.zeros_like(U)
    for i in range(n):
        m = F[:, i] + U[:, i] - lam[:, i] + incoming[:, i]
        lam[:, i] += gammas[i] * m
        if i < n - 1:
            F[:, i + 1] = pass_message(F[:, i] + U[:, i] - lam[:, i], W[:, i], pairwise,
                                       transpose=transpose)
            if counter is not None:
                counter.append(1)
    return F


def iterative_minorant(chain: ChainView, max_pass: int = 3, gamma=(0.25, 0.25, 1.0)):
    """Alternating forward/backward sweeps draining a fraction of each
    node's min-marginal; the last sweep drains fully, which makes the
    result maximal."""
    if max_pass < 1:
        raise ValueError("max_pass must be at least 1")
    gammas = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (max_pass,)).copy() \
        if np.ndim(gamma) == 0 else np.asarray(gamma, dtype=np.float64)
    if len(gammas) < max_pass:
        gammas = np.concatenate([gammas, np.full(max_pass - len(gammas), gammas[-1])])
    gammas = gammas[:max_pass].copy()
    if np.any(gammas <= 0) or np.any(gammas > 1):
        raise ValueError("gamma values must lie in (0, 1]")
    gammas[-1] = 1.0
    U, W = chain.unary, chain.weights
    lam, _ = _spread_optimum(chain)
    incoming = right_messages(ChainView(U - lam, W, chain.pairwise))
    forward = True
    for g in gammas:
        if forward:
            out = _sweep(U, W, chain.pairwise, lam, incoming, np.full(chain.n, g))
        else:
            out = _sweep(U[:, ::-1], W[:, ::-1], chain.pairwise, lam[:, ::-1],
                         incoming[:, ::-1], np.full(chain.n, g), transpose=True)[:, ::-1]
        incoming = out
        forward = not forward
    return _batched(chain, lam)


def handshake(f_i, f_j, weight, pairwise, phi_left, phi_right):
    """Split the slack at edge ``(i, j)`` between the two sides.

    Arguments are the unaries at ``i`` and ``j``, the edge weight, the
    message into ``i`` from its left and into ``j`` from its right.  Returns
    ``(phi_ji, phi_ij)``: the terms to add to the unary at ``i`` (left part)
    and at ``j`` (right part), after which the two parts are independent.
    """
    phi_ji = pass_message(f_j + phi_right, weight, pairwise, transpose=True)
    m_i = phi_left + f_i + phi_ji
    phi_ij = pass_message(m_i / 2 - phi_ji, weight, pairwise)
    phi_ji = pass_message(-phi_ij, weight, pairwise, transpose=True)
    return phi_ji, phi_ij


def hierarchical_minorant(chain: ChainView, leaf_size: int = 2, counter: Optional[dict] = None):
    """Minorant built by recursive handshakes at mid-chain edges.

    Messages computed at one level are reused by the next wherever the
    handshake left them valid.  Pieces of at most ``leaf_size`` nodes are
    drained directly: half of the first node, then every node fully front
    to back and back to front.  ``counter`` (a dict) receives the number of
    messages sent per recursion level.
    """
    if leaf_size < 2:
        raise ValueError("leaf_size must be at least 2")
    W, pw = chain.weights, chain.pairwise
    lam, _ = _spread_optimum(chain)
    U = chain.unary - lam
    F = np.zeros_like(U)
    R = np.zeros_like(U)

    def tally(level, k):
        if counter is not None:
            counter[level] = counter.get(level, 0) + k

    def leaf(s, e, level):
        u, w = U[:, s:e + 1], W[:, s:e]
        res = np.zeros_like(u)
        sub_incoming = right_messages(ChainView(u, w, pw))
        tally(level, e - s)
        gam = np.ones(e - s + 1)
        gam[0] = 0.5
        hits = []
        front = _sweep(u, w, pw, res, sub_incoming, gam, counter=hits)
        _sweep(u[:, ::-1], w[:, ::-1], pw, res[:, ::-1], front[:, ::-1],
               np.ones(e - s + 1), transpose=True, counter=hits)
        tally(level, len(hits))
        lam[:, s:e + 1] += res

    def process(s, e, f_to, r_from, level):
        length = e - s + 1
        if length <= leaf_size:
            leaf(s, e, level)
            return
        i = s + length // 2 - 1
        j = i + 1
        for k in range(f_to, i):
            F[:, k + 1] = pass_message(F[:, k] + U[:, k], W[:, k], pw)
        tally(level, max(i - f_to, 0))
        for k in range(r_from - 1, j - 1, -1):
            R[:, k] = pass_message(R[:, k + 1] + U[:, k + 1], W[:, k], pw, transpose=True)
        tally(level, max(r_from - j, 0))
        phi_ji, phi_ij = handshake(U[:, i], U[:, j], W[:, i], pw, F[:, i], R[:, j])
        tally(level, 3)
        U[:, i] += phi_ji
        U[:, j] += phi_ij
        R[:, i] = 0.0
        F[:, j] = 0.0
        # left part keeps its front messages, right part its back messages
        process(s, i, i, i, level + 1)
        process(j, e, j, j, level + 1)

    process(0, chain.n - 1, 0, chain.n - 1, 0)
    return _batched(chain, lam)


def build_minorant(chain: ChainView, kind: str, **options):
    """Dispatch on the minorant name used in solver configurations."""
    if kind == "naive":
        return naive_minorant(chain)
    if kind == "uniform":
        return uniform_minorant(chain, **options)
    if kind == "iterative":
        return iterative_minorant(chain, **options)
    if kind == "hierarchical":
        return hierarchical_minorant(chain, **options)
    if kind == "unary":
        return unary_minorant(chain)
    raise ValueError(f"unknown minorant kind {kind!r}; expected one of {MINORANT_KINDS}")


@dataclass
class MinorantReport:
    is_minorant: Optional[bool]
    is_maximal: bool
    max_violation: Optional[float]
    max_residual: float


def verify_minorant(chain: ChainView, lam, tol: float = 1e-6, exhaustive: bool = True):
    """Check the minorant inequality (by enumeration) and maximality.

    Maximality means every min-marginal of ``f - lam`` is zero up to ``tol``.
    The exhaustive part needs ``K**n <= 10**7`` and a single chain; pass
    ``exhaustive=False`` to skip it on large inputs.
    """
    lam = np.asarray(lam, dtype=np.float64).reshape(chain.unary.shape)
    residual = ChainView(chain.unary - lam, chain.weights, chain.pairwise)
    m = min_marginals(residual)
    max_residual = float(np.abs(m).max())
    is_min, violation = None, None
    if exhaustive:
        n, K = chain.n, chain.K
        if K ** n > MAX_ENUMERATION:
            raise CapacityError(f"{K}^{n} labelings exceed the enumeration limit")
        X = np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64)
        violation = 0.0
        for b in range(chain.unary.shape[0]):
            e = _enumerate_energy(chain.unary[b], chain.weights[b], chain.pairwise.table, X)
            lx = lam[b][np.arange(n), X].sum(axis=1)
            violation = max(violation, float(np.max(lx - e)))
        violation = max(violation, 0.0)
        is_min = violation <= tol
    return MinorantReport(is_min, max_residual <= tol, violation, max_residual)


def _enumerate_energy(U, W, table, X):
    n = U.shape[0]
    e = U[np.arange(n), X].sum(axis=1)
    if n > 1:
        e = e + (W * table[X[:, :-1], X[:, 1:]]).sum(axis=1)
    return e
