"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Outputs are bitwise identical to the extension; only speed differs.
"""
import math

import numpy as np

_MASK = (1 << 64) - 1
_INV_2_53 = 1.0 / 9007199254740992.0
_TWO_PI = 6.283185307179586


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def _stream(state):
    s0, s1, s2, s3 = (int(w) for w in state)
    try:
        while True:
            result = (_rotl((s0 + s3) & _MASK, 23) + s0) & _MASK
            t = (s1 << 17) & _MASK
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = _rotl(s3, 45)
            yield result
    finally:
        state[:] = np.array([s0, s1, s2, s3], dtype=np.uint64)


def fill_u64(state, n):
    gen = _stream(state)
    out = np.fromiter((next(gen) for _ in range(n)), dtype=np.uint64, count=n)
    gen.close()
    return out


def fill_uniform(state, n):
    gen = _stream(state)
    out = np.fromiter(((next(gen) >> 11) * _INV_2_53 for _ in range(n)),
                      dtype=np.float64, count=n)
    gen.close()
    return out


def fill_normal(state, n):
    gen = _stream(state)
    out = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        u1 = 1.0 - (next(gen) >> 11) * _INV_2_53
        u2 = (next(gen) >> 11) * _INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        out[i] = r * math.cos(_TWO_PI * u2)
        if i + 1 < n:
            out[i + 1] = r * math.sin(_TWO_PI * u2)
        i += 2
    gen.close()
    return out


def solve_assignment(cost):
    """Shortest augmenting path solver, inner scan vectorized with numpy."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    padded = np.zeros((n + 1, n + 1))
    padded[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = padded[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            masked = np.where(free, minv, np.inf)
            # argmin returns the first minimum, matching the strict "<" scan
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
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
    row_to_col[p[1:] - 1] = np.arange(n)
    return row_to_col, u[1:].copy(), v[1:].copy()
