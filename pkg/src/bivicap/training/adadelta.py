"""Adadelta: per-entry step sizes from running averages of g^2 and dx^2."""
from dataclasses import dataclass

import numpy as np

from ..numerics import ShapeError


@dataclass
class AdadeltaState:
    sq_grad: dict
    sq_delta: dict
    rho: float = 0.95
    eps: float = 1e-6

    @classmethod
    def zeros_like(cls, params, rho=0.95, eps=1e-6):
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, rho, eps)


def adadelta_update(params, grads, state):
    """Apply one step in place; returns ``(params, state)`` for chaining."""
    if set(params) != set(grads) or set(params) != set(state.sq_grad):
        raise ShapeError("parameter, gradient and accumulator names differ")
    rho, eps = state.rho, state.eps
    for name, x in params.items():
        g = grads[name]
        if g.shape != x.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter is {x.shape}")
        eg = state.sq_grad[name]
        ed = state.sq_delta[name]
        eg *= rho
        eg += (1.0 - rho) * g * g
        delta = -np.sqrt(ed + eps) / np.sqrt(eg + eps) * g
        ed *= rho
        ed += (1.0 - rho) * delta * delta
        x += delta
    return params, state
