"""Pure-Python/numpy implementations of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and the same floating-point summation order, so both backends return
identical bits.
"""
import numpy as np

NAME = "python"


def panjer_geometric(g, p):
    """Compound geometric lattice masses ``w = (1-p) sum_n p^n g^{*n}``."""
    n = len(g)
    w = np.zeros(n)
    if n == 0:
        return w
    c = 1.0 / (1.0 - p * g[0])
    w[0] = (1.0 - p) * c
    pc = p * c
    for k in range(1, n):
        # sum_{j=1}^{k} g[j] w[k-j], accumulated in increasing j
        w[k] = pc * _ordered_dot(g[1:k + 1], w[k - 1::-1])
    return w


def _ordered_dot(a, b):
    # sequential left-to-right accumulation, matching the compiled loop
    return float(np.add.accumulate(a * b)[-1]) if len(a) else 0.0


def ladder_backward(f, hm, hp):
    """Solve ``h(k) = (f(k) + sum_{i>=1} hm[i] h(k+i)) / (1 - hm[0])`` backwards.

    ``hp`` has length ``len(f) + len(hm) - 1``; its last ``len(hm) - 1``
    entries hold boundary values beyond the grid and are left untouched.
    """
    K, A = len(f), len(hm) - 1
    c = 1.0 / (1.0 - hm[0])
    tail = hm[1:]
    for k in range(K - 1, -1, -1):
        s = f[k]
        if A:
            s = s + _ordered_dot(tail, hp[k + 1:k + 1 + A])
        hp[k] = s * c
    return hp


def walk_sup_chunk(inc, S, M, alive, barrier):
    """Advance walks by the columns of ``inc``; track running maxima until ``S < -barrier``."""
    n, L = inc.shape
    rows = np.flatnonzero(alive)
    if len(rows) == 0 or L == 0:
        return
    path = np.cumsum(np.concatenate([S[rows, None], inc[rows]], axis=1), axis=1)[:, 1:]
    dead = path < -barrier
    any_dead = dead.any(axis=1)
    first = np.where(any_dead, dead.argmax(axis=1), L - 1)
    valid = np.arange(L)[None, :] <= first[:, None]
    masked = np.where(valid, path, -np.inf)
    M[rows] = np.maximum(M[rows], masked.max(axis=1))
    S[rows] = path[np.arange(len(rows)), first]
    alive[rows] = ~any_dead


def first_exit_chunk(inc, S, state, lower, upper):
    """Advance walks in ``state == 0`` until ``S > upper`` (state 1) or ``S < lower`` (state 2)."""
    n, L = inc.shape
    rows = np.flatnonzero(state == 0)
    if len(rows) == 0 or L == 0:
        return
    path = np.cumsum(np.concatenate([S[rows, None], inc[rows]], axis=1), axis=1)[:, 1:]
    up = path > upper
    down = path < lower
    hit = up | down
    any_hit = hit.any(axis=1)
    first = np.where(any_hit, hit.argmax(axis=1), L - 1)
    idx = np.arange(len(rows))
    S[rows] = path[idx, first]
    st = np.where(up[idx, first], 1, np.where(down[idx, first], 2, 0))
    state[rows] = np.where(any_hit, st, 0).astype(state.dtype)
