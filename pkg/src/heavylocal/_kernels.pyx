# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np

NAME = "cython"


def panjer_geometric(double[::1] g, double p):
    cdef Py_ssize_t n = g.shape[0], k, j
    w_arr = np.zeros(n)
    cdef double[::1] w = w_arr
    cdef double c, pc, s
    if n == 0:
        return w_arr
    c = 1.0 / (1.0 - p * g[0])
    w[0] = (1.0 - p) * c
    pc = p * c
    for k in range(1, n):
        s = 0.0
        for j in range(1, k + 1):
            s = s + g[j] * w[k - j]
        w[k] = pc * s
    return w_arr


def ladder_backward(double[::1] f, double[::1] hm, double[::1] hp):
    cdef Py_ssize_t K = f.shape[0], A = hm.shape[0] - 1, k, i
    cdef double c = 1.0 / (1.0 - hm[0]), s, acc
    for k in range(K - 1, -1, -1):
        s = f[k]
        if A > 0:
            acc = 0.0
            for i in range(A):
                acc = acc + hm[i + 1] * hp[k + 1 + i]
            s = s + acc
        hp[k] = s * c
    return np.asarray(hp)


def walk_sup_chunk(double[:, ::1] inc, double[::1] S, double[::1] M, unsigned char[::1] alive, double barrier):
    cdef Py_ssize_t n = inc.shape[0], L = inc.shape[1], i, j
    cdef double s, m
    for i in range(n):
        if not alive[i]:
            continue
        s = S[i]
        m = M[i]
        for j in range(L):
            s = s + inc[i, j]
            if s > m:
                m = s
            if s < -barrier:
                alive[i] = 0
                break
        S[i] = s
        M[i] = m


def first_exit_chunk(double[:, ::1] inc, double[::1] S, unsigned char[::1] state, double lower, double upper):
    cdef Py_ssize_t n = inc.shape[0], L = inc.shape[1], i, j
    cdef double s
    for i in range(n):
        if state[i] != 0:
            continue
        s = S[i]
        for j in range(L):
            s = s + inc[i, j]
            if s > upper:
                state[i] = 1
                break
            if s < lower:
                state[i] = 2
                break
        S[i] = s
