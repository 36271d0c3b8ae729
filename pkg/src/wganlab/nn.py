"""Leaky-ReLU MLPs with hand-written backprop and double backprop.

Weights are stored as ``W_i`` of shape ``(n_i, n_{i-1})``; a batch is a
``(batch, n_0)`` matrix, so a layer computes ``Z = A @ W.T + b``.
"""
import struct
from dataclasses import dataclass

import numpy as np

from wganlab.numerics import ShapeError, as_matrix

EPS_NORM = 1e-12
MAGIC = b"WGLP"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple
    leaky_slope: float = 0.2
    activation: str = "leaky-relu"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError(f"invalid widths {self.widths}")
        if not 0.0 <= self.leaky_slope <= 1.0:
            raise ValueError("leaky_slope must lie in [0, 1]")
        if self.activation != "leaky-relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def n_layers(self):
        return len(self.widths) - 1


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: list
    biases: list

    def arrays(self):
        """All parameter arrays, weights first layer by layer, then biases."""
        return [*self.weights, *self.biases]

    def copy(self):
        return MlpParams(self.spec, [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def with_arrays(self, arrays):
        L = self.spec.n_layers
        return MlpParams(self.spec, list(arrays[:L]), list(arrays[L:]))

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def __eq__(self, other):
        if not isinstance(other, MlpParams) or self.spec != other.spec:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


@dataclass
class ForwardTrace:
    x: np.ndarray
    pre: list    # Z_i for every layer, including the output layer
    masks: list  # D_i for hidden layers, entries in {1, leaky_slope}
    acts: list   # A_0 = x, A_i for hidden layers


def zeros_like(params):
    return params.with_arrays([np.zeros_like(a) for a in params.arrays()])


def init_params(spec, rng):
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for n_in, n_out in zip(spec.widths[:-1], spec.widths[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        u = rng.uniform(n_in * n_out).reshape(n_out, n_in)
        weights.append((2.0 * u - 1.0) * bound)
        biases.append(np.zeros(n_out))
    return MlpParams(spec, weights, biases)


def check_params(params):
    spec = params.spec
    if len(params.weights) != spec.n_layers or len(params.biases) != spec.n_layers:
        raise ShapeError("layer count does not match spec")
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        want = (spec.widths[i + 1], spec.widths[i])
        if w.shape != want or b.shape != (want[0],):
            raise ShapeError(f"layer {i}: weight {w.shape} bias {b.shape}, expected {want}")


def forward(params, x):
    x = as_matrix(x)
    spec = params.spec
    if x.shape[1] != spec.widths[0]:
        raise ShapeError(f"input has {x.shape[1]} columns, network expects {spec.widths[0]}")
    slope = spec.leaky_slope
    acts, pre, masks = [x], [], []
    a = x
    L = spec.n_layers
    for i in range(L):
        z = a @ params.weights[i].T + params.biases[i]
        pre.append(z)
        if i < L - 1:
            d = np.where(z > 0.0, 1.0, slope)
            masks.append(d)
            a = z * d
            acts.append(a)
    return pre[-1], ForwardTrace(x, pre, masks, acts)


def backprop(params, trace, upstream):
    """Parameter gradients of ``sum(upstream * f(x))`` plus the input gradient.

    ``upstream`` has shape ``(batch, d_out)``. Returns ``(grads, dx)``.
    """
    L = params.spec.n_layers
    e = as_matrix(upstream)
    if e.shape != trace.pre[-1].shape:
        raise ShapeError(f"upstream shape {e.shape} != output shape {trace.pre[-1].shape}")
    gw = [None] * L
    gb = [None] * L
    for i in range(L - 1, -1, -1):
        gw[i] = e.T @ trace.acts[i]
        gb[i] = e.sum(axis=0)
        e = e @ params.weights[i]
        if i > 0:
            e = e * trace.masks[i - 1]
    return params.with_arrays(gw + gb), e


def _backward_chain(params, trace):
    """Per-layer backward signals ``E_i`` (gradient of f w.r.t. the layer
    ``i`` pre-activation) and the input gradient, for a scalar-output net."""
    L = params.spec.n_layers
    if params.spec.widths[-1] != 1:
        raise ShapeError("input gradients need a scalar-output network")
    n = trace.x.shape[0]
    signals = [None] * L
    e = np.ones((n, 1))
    for i in range(L - 1, -1, -1):
        signals[i] = e
        e = e @ params.weights[i]
        if i > 0:
            e = e * trace.masks[i - 1]
    return signals, e


def input_gradient(params, trace):
    return _backward_chain(params, trace)[1]


def loss_param_grads(params, trace, coeffs):
    """Gradient of ``sum_i coeffs[i] * f(x_i)`` for every parameter."""
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1, 1)
    if coeffs.shape[0] != trace.x.shape[0]:
        raise ShapeError(f"{coeffs.shape[0]} coefficients for a batch of {trace.x.shape[0]}")
    if params.spec.widths[-1] != 1:
        raise ShapeError("loss_param_grads expects a scalar-output network")
    return backprop(params, trace, coeffs)[0]


def penalty_derivative(norms, kind):
    if kind == "gp":
        return 2.0 * (norms - 1.0)
    if kind == "lp":
        return 2.0 * np.maximum(norms - 1.0, 0.0)
    raise ValueError(f"unknown penalty kind {kind!r}")


def penalty_values(norms, kind):
    if kind == "gp":
        return (norms - 1.0) ** 2
    if kind == "lp":
        return np.maximum(norms - 1.0, 0.0) ** 2
    raise ValueError(f"unknown penalty kind {kind!r}")


def penalty_param_grads(params, trace, kind, lam):
    """Value and parameter gradient of ``lam * mean(phi(||grad_x f||))``.

    The activation masks recorded in ``trace`` are held constant when
    differentiating the input gradient; for piecewise-linear activations this
    is exact away from kinks. Biases do not enter the input gradient, so their
    gradients are zero. Also returns the per-sample gradient norms.
    """
    signals, g = _backward_chain(params, trace)
    n = g.shape[0]
    norms = np.sqrt((g * g).sum(axis=1))
    value = lam * float(penalty_values(norms, kind).mean())
    scale = lam / n * penalty_derivative(norms, kind)
    safe = norms >= EPS_NORM
    scale = np.where(safe, scale / np.where(safe, norms, 1.0), 0.0)
    gamma = g * scale[:, None]  # adjoint of the input gradient
    L = params.spec.n_layers
    gw = [None] * L
    h = gamma
    for i in range(L):
        # input gradient contribution of layer i: E_i @ W_i (masked below)
        gw[i] = signals[i].T @ h
        if i < L - 1:
            h = (h @ params.weights[i].T) * trace.masks[i]
    gb = [np.zeros_like(b) for b in params.biases]
    return value, params.with_arrays(gw + gb), norms


def save_params(params, path_or_file):
    """Binary checkpoint: magic, version, widths, slope, then W_i then b_i
    per layer, all little-endian."""
    blob = params_to_bytes(params)
    if hasattr(path_or_file, "write"):
        path_or_file.write(blob)
    else:
        with open(path_or_file, "wb") as fh:
            fh.write(blob)


def params_to_bytes(params):
    spec = params.spec
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(spec.widths)),
             struct.pack(f"<{len(spec.widths)}I", *spec.widths), struct.pack("<d", spec.leaky_slope)]
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def params_from_bytes(blob, offset=0):
    """Parse a checkpoint; returns ``(params, end_offset)``."""
    if blob[offset:offset + 4] != MAGIC:
        raise ValueError("not a WGLP checkpoint")
    (version,) = struct.unpack_from("<I", blob, offset + 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (count,) = struct.unpack_from("<I", blob, offset + 8)
    pos = offset + 12
    widths = struct.unpack_from(f"<{count}I", blob, pos)
    pos += 4 * count
    (slope,) = struct.unpack_from("<d", blob, pos)
    pos += 8
    spec = MlpSpec(widths, slope)
    weights, biases = [], []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        w = np.frombuffer(blob, dtype="<f8", count=n_in * n_out, offset=pos).reshape(n_out, n_in)
        pos += 8 * n_in * n_out
        b = np.frombuffer(blob, dtype="<f8", count=n_out, offset=pos)
        pos += 8 * n_out
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    return MlpParams(spec, weights, biases), pos


def load_params(path):
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())[0]
