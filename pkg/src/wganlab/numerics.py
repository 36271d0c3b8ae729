"""Dense float64 helpers, the seeded random stream, and power iteration.

Matrices are plain 2-D ``numpy.float64`` arrays.
"""
import hashlib

import numpy as np

from wganlab._backend import kernels

_MASK = (1 << 64) - 1


class ShapeError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, estimate):
        super().__init__(msg)
        self.estimate = estimate


def as_matrix(a):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def splitmix64(x):
    """One splitmix64 step; returns ``(new_x, output)``."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


def purpose_tag(name):
    """Stable 64-bit tag for a named sub-stream (first 8 bytes of SHA-256)."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


class Rng:
    """xoshiro256++ seeded through splitmix64.

    ``Rng(seed).derive("data")`` gives an independent stream seeded with
    ``seed ^ purpose_tag("data")``.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK
        x = self.seed
        words = []
        for _ in range(4):
            x, out = splitmix64(x)
            words.append(out)
        self.state = np.array(words, dtype=np.uint64)

    def derive(self, purpose):
        return Rng(self.seed ^ purpose_tag(purpose))

    def u64(self, n):
        return kernels.fill_u64(self.state, int(n))

    def uniform(self, n):
        """``n`` draws from [0, 1) with 53-bit resolution."""
        return kernels.fill_uniform(self.state, int(n))

    def standard_normal(self, n):
        if n < 0:
            raise ValueError("n must be non-negative")
        return kernels.fill_normal(self.state, int(n))

    def normal_matrix(self, rows, cols):
        return self.standard_normal(rows * cols).reshape(rows, cols)

    def choice(self, k, n):
        """``n`` integers uniform on ``0..k-1`` (floor of a uniform draw)."""
        idx = np.floor(self.uniform(n) * k).astype(np.int64)
        return np.minimum(idx, k - 1)

    def get_state(self):
        return self.seed, self.state.copy()

    def set_state(self, seed, state):
        self.seed = int(seed)
        self.state = np.array(state, dtype=np.uint64).copy()


def standard_normal(rng, n):
    return rng.standard_normal(n)


def spectral_norm(a, tol=1e-12, max_iter=20000):
    """Largest singular value by power iteration on ``a.T @ a``.

    Starts from the normalized all-ones vector. A second run starts from the
    heaviest column of the Gram matrix, which covers the case where the top
    singular vector is orthogonal to all-ones; the larger estimate wins.
    Raises ``ConvergenceError`` (carrying the last estimate) if the relative
    change stays above ``tol`` after ``max_iter`` steps.
    """
    a = as_matrix(a)
    if a.size == 0:
        raise ShapeError("spectral_norm of an empty matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    gram = a.T @ a
    ones = np.ones(a.shape[1])
    heavy = gram[:, int(np.argmax(np.linalg.norm(gram, axis=0)))]
    return max(_power(gram, ones, tol, max_iter), _power(gram, heavy, tol, max_iter))


def _power(gram, z, tol, max_iter):
    nrm = np.linalg.norm(z)
    if nrm == 0.0:
        return 0.0
    z = z / nrm
    est = 0.0
    for _ in range(max_iter):
        w = gram @ z
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        z = w / nrm
        new = float(np.sqrt(nrm))
        if abs(new - est) <= tol * new:
            return new
        est = new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps", est)
