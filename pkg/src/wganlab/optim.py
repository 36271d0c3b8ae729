"""RMSprop over the parameter arrays of an MLP."""
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class RmsPropState:
    v: list
    lr: float = 5e-5
    rho: float = 0.9
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=5e-5, rho=0.9, eps=1e-8):
        return cls([np.zeros_like(a) for a in params.arrays()], lr, rho, eps)

    def copy(self):
        return RmsPropState([a.copy() for a in self.v], self.lr, self.rho, self.eps)


def rmsprop_step(params, grads, state):
    """v <- rho*v + (1-rho)*g^2;  theta <- theta - lr*g/(sqrt(v)+eps).

    Returns new ``(params, state)``; inputs are left untouched.
    """
    g_arrays = grads.arrays()
    p_arrays = params.arrays()
    if len(g_arrays) != len(p_arrays) or len(state.v) != len(p_arrays):
        raise ValueError("parameter, gradient and state layouts differ")
    for k, (p, g, v) in enumerate(zip(p_arrays, g_arrays, state.v)):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"array {k}: shapes {p.shape}, {g.shape}, {v.shape} differ")
        if not np.all(np.isfinite(g)):
            log.error("non-finite gradient in parameter array %d; step rejected", k)
            raise NonFiniteGradient(f"non-finite gradient in parameter array {k}")
    new_v, new_p = [], []
    for p, g, v in zip(p_arrays, g_arrays, state.v):
        v2 = state.rho * v + (1.0 - state.rho) * (g * g)
        new_v.append(v2)
        new_p.append(p - state.lr * g / (np.sqrt(v2) + state.eps))
    return params.with_arrays(new_p), RmsPropState(new_v, state.lr, state.rho, state.eps)
