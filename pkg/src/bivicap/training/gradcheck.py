"""Central finite differences against the analytic gradient."""
import numpy as np

from .bptt import forward_backward


def numeric_gradient(model, batch, name, eps=1e-5):
    arr = model.params[name]
    out = np.zeros_like(arr)
    flat = arr.reshape(-1)
    grad = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = forward_backward(model, batch, need_grad=False)[0]
        flat[i] = orig - eps
        minus = forward_backward(model, batch, need_grad=False)[0]
        flat[i] = orig
        grad[i] = (plus - minus) / (2 * eps)
    return out


def relative_error(analytic, numeric, floor=1e-6):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(model, batch, eps=1e-5, floor=1e-6):
    """Max relative error per parameter tensor."""
    _, _, grads = forward_backward(model, batch)
    return {name: relative_error(grads[name], numeric_gradient(model, batch, name, eps), floor)
            for name in model.names()}
