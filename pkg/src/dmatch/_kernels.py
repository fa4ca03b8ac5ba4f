"""Compiled inner loops for chain dynamic programming.

Each kernel mirrors a numpy routine in ``chain.py`` operation for
operation, so both paths give bit-identical results.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _message(src, w, table, transpose, values, trunc, linear, out):
    K = src.shape[0]
    if linear:
        for k in range(K):
            out[k] = src[k]
        for k in range(1, K):
            c = out[k - 1] + w * (values[k] - values[k - 1])
            if c < out[k]:
                out[k] = c
        for k in range(K - 2, -1, -1):
            c = out[k + 1] + w * (values[k + 1] - values[k])
            if c < out[k]:
                out[k] = c
        floor = src[0]
        for k in range(1, K):
            if src[k] < floor:
                floor = src[k]
        floor = floor + w * trunc
        for k in range(K):
            if floor < out[k]:
                out[k] = floor
        return
    for b in range(K):
        best = np.inf
        for a in range(K):
            t = table[b, a] if transpose else table[a, b]
            c = src[a] + w * t
            if c < best:
                best = c
        out[b] = best


@njit(cache=True)
def left_messages(U, W, table, values, trunc, linear, upto):
    B, n, K = U.shape
    F = np.zeros_like(U)
    src = np.empty(K)
    for b in range(B):
        for i in range(upto):
            for k in range(K):
                src[k] = F[b, i, k] + U[b, i, k]
            _message(src, W[b, i], table, False, values, trunc, linear, F[b, i + 1])
    return F


@njit(cache=True)
def right_messages(U, W, table, values, trunc, linear, downto):
    B, n, K = U.shape
    R = np.zeros_like(U)
    src = np.empty(K)
    for b in range(B):
        for i in range(n - 2, downto - 1, -1):
            for k in range(K):
                src[k] = R[b, i + 1, k] + U[b, i + 1, k]
            _message(src, W[b, i], table, True, values, trunc, linear, R[b, i])
    return R


@njit(cache=True)
def decode(U, W, table, R):
    """Front-to-back decoding with first-index ties; returns labels and values."""
    B, n, K = U.shape
    x = np.empty((B, n), dtype=np.int64)
    value = np.empty(B)
    for b in range(B):
        best, arg = np.inf, 0
        for k in range(K):
            c = U[b, 0, k] + R[b, 0, k]
            if c < best:
                best, arg = c, k
        x[b, 0] = arg
        value[b] = best
        for i in range(n - 1):
            prev = x[b, i]
            best, arg = np.inf, 0
            for k in range(K):
                c = W[b, i] * table[prev, k] + U[b, i + 1, k] + R[b, i + 1, k]
                if c < best:
                    best, arg = c, k
            x[b, i + 1] = arg
    return x, value


@njit(cache=True)
def trws_pass(U, lam, hw, vw, table, values, trunc, linear):
    """Scanline sweep of per-pixel averaging updates, in place on ``lam``."""
    H, W, K = U.shape
    Rv = np.zeros((H, W, K))
    src = np.empty(K)
    for y in range(H - 2, -1, -1):
        for x in range(W):
            for k in range(K):
                src[k] = Rv[y + 1, x, k] - lam[y + 1, x, k]
            _message(src, vw[y, x], table, True, values, trunc, linear, Rv[y, x])
    Fv = np.zeros((W, K))
    Rh = np.zeros((W, K))
    Fh = np.zeros(K)
    for y in range(H):
        Rh[W - 1, :] = 0.0
        for x in range(W - 2, -1, -1):
            for k in range(K):
                src[k] = Rh[x + 1, k] + U[y, x + 1, k] + lam[y, x + 1, k]
            _message(src, hw[y, x], table, True, values, trunc, linear, Rh[x])
        Fh[:] = 0.0
        for x in range(W):
            for k in range(K):
                mf = Fh[k] + U[y, x, k] + lam[y, x, k] + Rh[x, k]
                mg = Fv[x, k] - lam[y, x, k] + Rv[y, x, k]
                lam[y, x, k] += 0.5 * (mg - mf)
            if x < W - 1:
                for k in range(K):
                    src[k] = Fh[k] + U[y, x, k] + lam[y, x, k]
                _message(src, hw[y, x], table, False, values, trunc, linear, Fh)
        if y < H - 1:
            for x in range(W):
                for k in range(K):
                    src[k] = Fv[x, k] - lam[y, x, k]
                _message(src, vw[y, x], table, False, values, trunc, linear, Fv[x])
