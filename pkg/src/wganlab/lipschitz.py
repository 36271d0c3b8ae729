"""Lipschitz bounds for weight-clipped ReLU networks.

Under |w| <= c_max a linear layer n_in -> n_out has operator norm at most
c_max * sqrt(n_in * n_out), reached only by sign-constant columns. The
product over layers is the common constant ``alpha_bar`` shared by every
clipped network of one architecture.
"""
import math
from dataclasses import dataclass

import numpy as np

from wganlab import nn


@dataclass(frozen=True)
class ArchSignature:
    widths: tuple
    c_max: float
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError(f"invalid widths {self.widths}")
        if self.c_max <= 0:
            raise ValueError("c_max must be positive")

    def mlp_spec(self):
        return nn.MlpSpec(self.widths, leaky_slope=0.0)


def alpha_bar(arch):
    w = arch.widths
    return math.prod(arch.c_max * math.sqrt(a * b) for a, b in zip(w[:-1], w[1:]))


def construct_exhausting_params(arch, first_layer_signs):
    """Network attaining ``alpha_bar`` and a witness pair ``(x, y)``.

    First layer: column k is constant ``signs[k] * c_max``; deeper layers are
    all ``c_max``; biases zero. With x = s and y = 2s every first-layer unit
    sees sum_k c_max * s_k^2 > 0, so both images lie in the positive orthant,
    ReLU acts as the identity on the segment, and each layer's difference
    vector is a multiple of the all-ones (or sign) vector, the direction in
    which that layer reaches its operator-norm bound.
    """
    signs = np.asarray(first_layer_signs, dtype=np.float64)
    w = arch.widths
    if signs.shape != (w[0],) or not np.all(np.abs(signs) == 1.0):
        raise ValueError(f"need {w[0]} signs in {{-1, +1}}")
    c = arch.c_max
    weights = [np.tile(signs * c, (w[1], 1))]
    weights += [np.full((b, a), c) for a, b in zip(w[1:-1], w[2:])]
    biases = [np.zeros(b) for b in w[1:]]
    params = nn.MlpParams(arch.mlp_spec(), weights, biases)
    return params, signs.copy(), 2.0 * signs


def witness_ratio(params, x, y):
    fx, _ = nn.forward(params, np.vstack([x, y]))
    return abs(float(fx[0, 0] - fx[1, 0])) / float(np.linalg.norm(np.asarray(x) - np.asarray(y)))


def random_clipped_params(arch, rng):
    """Uniform weights and biases in [-c_max, c_max]."""
    spec = arch.mlp_spec()
    c = arch.c_max
    weights, biases = [], []
    for a, b in zip(spec.widths[:-1], spec.widths[1:]):
        weights.append((2.0 * rng.uniform(a * b) - 1.0).reshape(b, a) * c)
        biases.append((2.0 * rng.uniform(b) - 1.0) * c)
    return nn.MlpParams(spec, weights, biases)


def empirical_lipschitz(params, lo, hi, n_samples, rng, include=None, chunk=512):
    """Sampled lower bound on the Lipschitz constant of a scalar network.

    Points are uniform in the box [lo, hi]^d (``include`` rows are added).
    Returns the larger of the maximal input-gradient norm and the maximal
    difference quotient over all pairs of points.
    """
    d = params.spec.widths[0]
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (d,))
    pts = lo + (hi - lo) * rng.uniform(n_samples * d).reshape(n_samples, d)
    if include is not None:
        pts = np.vstack([pts, np.asarray(include, dtype=np.float64).reshape(-1, d)])
    if len(pts) == 0:
        return 0.0
    vals, trace = nn.forward(params, pts)
    grad_max = float(np.sqrt((nn.input_gradient(params, trace) ** 2).sum(axis=1)).max())
    vals = vals[:, 0]
    ratio_max = 0.0
    for s in range(0, len(pts), chunk):
        blk = pts[s:s + chunk]
        dist = np.sqrt(((blk[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
        dv = np.abs(vals[s:s + chunk, None] - vals[None, :])
        ok = dist > 0
        if ok.any():
            ratio_max = max(ratio_max, float((dv[ok] / dist[ok]).max()))
    return max(grad_max, ratio_max)
