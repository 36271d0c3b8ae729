"""Lipschitz enforcement: weight clipping, gradient-norm penalties (two-sided
GP, one-sided LP), the pairwise Wasserstein-p ratio penalty, and the
sampling schemes for penalty points."""
from dataclasses import dataclass

import numpy as np

from wganlab.numerics import ShapeError, as_matrix

EPS_DIST = 1e-8
KINDS = ("none", "weight-clip", "gp", "lp", "ratio")
MODES = ("line", "noise-real", "noise-both")


@dataclass(frozen=True)
class RegularizerSpec:
    kind: str = "lp"
    lam: float = 10.0
    c_max: float = 0.01
    p: int = 1
    one_sided: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"regularizer kind must be one of {KINDS}, got {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.c_max <= 0:
            raise ValueError("c_max must be positive")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be an integer >= 1")


@dataclass(frozen=True)
class PerturbationScheme:
    mode: str = "line"
    sigma: float = 0.2

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"perturbation mode must be one of {MODES}, got {self.mode!r}")
        if self.mode != "line" and not self.sigma > 0:
            raise ValueError("noise modes need sigma > 0")


def sample_penalty_points(real, gen, scheme, rng, t=None):
    """Draw the points at which gradient penalties are evaluated.

    ``line``: x_hat = t*x + (1-t)*y with t ~ U[0,1] per row. ``noise-real``
    adds N(0, sigma^2 I) to the real points; ``noise-both`` takes real points
    on even rows and generated points on odd rows before adding noise.
    ``t`` overrides the drawn interpolation weights (line mode only).
    """
    real = as_matrix(real)
    gen = as_matrix(gen)
    if real.shape != gen.shape:
        raise ShapeError(f"real {real.shape} and generated {gen.shape} batches differ")
    n, d = real.shape
    if scheme.mode == "line":
        if t is None:
            t = rng.uniform(n)
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))[:, None]
        return t * real + (1.0 - t) * gen
    if scheme.mode == "noise-real":
        base = real
    else:
        base = real.copy()
        base[1::2] = gen[1::2]
    return base + scheme.sigma * rng.normal_matrix(n, d)


def grad_norm_penalty(norm, kind):
    if norm < 0:
        raise ValueError("gradient norm must be non-negative")
    if kind == "gp":
        return (norm - 1.0) ** 2
    if kind == "lp":
        return max(0.0, norm - 1.0) ** 2
    raise ValueError(f"unknown penalty kind {kind!r}")


class DegeneratePair(ValueError):
    pass


def ratio_penalty(f_x, f_y, dist, p=1, one_sided=True):
    if dist <= EPS_DIST:
        raise DegeneratePair(f"pair distance {dist} below {EPS_DIST}")
    r = abs(f_x - f_y) / dist ** p
    return max(0.0, r - 1.0) ** 2 if one_sided else (r - 1.0) ** 2


def ratio_penalty_batch(f_x, f_y, x, y, p, one_sided):
    """Mean ratio penalty over index-paired rows and its derivative with
    respect to every ``f_x`` and ``f_y``.

    Pairs closer than ``EPS_DIST`` are skipped; the mean runs over the kept
    pairs. Returns ``(value, d_fx, d_fy, n_skipped)``.
    """
    f_x = np.asarray(f_x, dtype=np.float64).ravel()
    f_y = np.asarray(f_y, dtype=np.float64).ravel()
    dist = np.sqrt(((as_matrix(x) - as_matrix(y)) ** 2).sum(axis=1))
    keep = dist > EPS_DIST
    m = int(keep.sum())
    d_fx = np.zeros_like(f_x)
    if m == 0:
        return 0.0, d_fx, d_fx.copy(), len(f_x)
    denom = np.where(keep, dist, 1.0) ** p
    diff = f_x - f_y
    r = np.abs(diff) / denom
    excess = r - 1.0
    if one_sided:
        excess = np.maximum(excess, 0.0)
    excess = np.where(keep, excess, 0.0)
    value = float((excess ** 2).sum() / m)
    d_fx = 2.0 * excess * np.sign(diff) / denom / m
    return value, d_fx, -d_fx, len(f_x) - m


def clip_weights(params, c_max):
    """Clamp every weight and bias to [-c_max, c_max]."""
    if c_max <= 0:
        raise ValueError("c_max must be positive")
    return params.with_arrays([np.clip(a, -c_max, c_max) for a in params.arrays()])
