# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: the xoshiro256++ stream and the shortest-augmenting-path
assignment solver. ``_fallback`` mirrors every function here bit for bit."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, cos, sin, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t next_u64(uint64_t[::1] s) nogil:
    cdef uint64_t result = rotl(s[0] + s[3], 23) + s[0]
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = rotl(s[3], 45)
    return result


def fill_u64(uint64_t[::1] state, Py_ssize_t n):
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = next_u64(state)
    return out


def fill_uniform(uint64_t[::1] state, Py_ssize_t n):
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = <double>(next_u64(state) >> 11) * INV_2_53
    return out


def fill_normal(uint64_t[::1] state, Py_ssize_t n):
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i = 0
    cdef double u1, u2, r
    with nogil:
        while i < n:
            # 1 - u lies in (0, 1], so the log is finite
            u1 = 1.0 - <double>(next_u64(state) >> 11) * INV_2_53
            u2 = <double>(next_u64(state) >> 11) * INV_2_53
            r = sqrt(-2.0 * log(u1))
            o[i] = r * cos(TWO_PI * u2)
            if i + 1 < n:
                o[i + 1] = r * sin(TWO_PI * u2)
            i += 2
    return out


def solve_assignment(double[:, ::1] cost):
    """Minimum-cost perfect assignment on a square matrix.

    Returns ``(row_to_col, u, v)`` with row/column potentials such that
    ``cost[i, j] - u[i] - v[j] >= 0`` with equality on the assignment.
    """
    cdef Py_ssize_t n = cost.shape[0]
    cdef Py_ssize_t i, j, i0, j0, j1
    cdef double delta, cur
    u_arr = np.zeros(n + 1)
    v_arr = np.zeros(n + 1)
    p_arr = np.zeros(n + 1, dtype=np.int64)
    way_arr = np.zeros(n + 1, dtype=np.int64)
    minv_arr = np.empty(n + 1)
    used_arr = np.empty(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef int64_t[::1] p = p_arr
    cdef int64_t[::1] way = way_arr
    cdef double[::1] minv = minv_arr
    cdef unsigned char[::1] used = used_arr
    with nogil:
        for i in range(1, n + 1):
            p[0] = i
            j0 = 0
            for j in range(n + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                for j in range(1, n + 1):
                    if not used[j]:
                        cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                        if cur < minv[j]:
                            minv[j] = cur
                            way[j] = j0
                        if minv[j] < delta:
                            delta = minv[j]
                            j1 = j
                for j in range(n + 1):
                    if used[j]:
                        u[p[j]] += delta
                        v[j] -= delta
                    else:
                        minv[j] -= delta
                j0 = j1
                if p[j0] == 0:
                    break
            while True:
                j1 = way[j0]
                p[j0] = p[j1]
                j0 = j1
                if j0 == 0:
                    break
    row_to_col = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        row_to_col[p_arr[j] - 1] = j - 1
    return row_to_col, u_arr[1:].copy(), v_arr[1:].copy()
