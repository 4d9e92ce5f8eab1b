"""Pure numpy reference kernels.

Every function here has a twin in ``_compiled.pyx`` with the same signature
and the same result up to floating point reassociation (~1e-15).

Layout conventions: batch-major, float64, C-contiguous. Gate blocks inside a
``(B, 4H)`` pre-activation are ordered input, forget, output, candidate.
Masks are float arrays holding exactly 0.0 or 1.0.
"""
import numpy as np


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward(pre, c_prev, h_prev, mask, standard):
    """Gate nonlinearities and state update for one time step.

    Rows whose mask is 0 keep ``(h_prev, c_prev)`` unchanged.
    Returns ``(acts, c, h)`` where ``acts`` holds the activated gates.
    """
    H = c_prev.shape[1]
    acts = np.empty_like(pre)
    acts[:, : 3 * H] = _sigmoid(pre[:, : 3 * H])
    acts[:, 3 * H :] = np.tanh(pre[:, 3 * H :])
    i = acts[:, :H]
    f = acts[:, H : 2 * H]
    o = acts[:, 2 * H : 3 * H]
    g = acts[:, 3 * H :]
    c_new = f * c_prev + i * g
    h_new = o * np.tanh(c_new) if standard else o * c_new
    keep = mask[:, None] > 0.5
    c = np.where(keep, c_new, c_prev)
    h = np.where(keep, h_new, h_prev)
    return acts, c, h


def lstm_backward(acts, c_prev, c, dh, dc, mask, standard):
    """Reverse of :func:`lstm_forward`.

    ``dh`` and ``dc`` are the total gradients reaching the step's outputs.
    Returns ``(dpre, dc_prev, dh_carry)``; the caller still has to add
    ``dpre @ U`` to ``dh_carry`` to get the full gradient on ``h_prev``.
    """
    H = c.shape[1]
    m = mask[:, None]
    i = acts[:, :H]
    f = acts[:, H : 2 * H]
    o = acts[:, 2 * H : 3 * H]
    g = acts[:, 3 * H :]
    if standard:
        tc = np.tanh(c)
        do = dh * tc
        dct = dc + dh * o * (1.0 - tc * tc)
    else:
        do = dh * c
        dct = dc + dh * o
    dpre = np.empty_like(acts)
    dpre[:, :H] = dct * g * i * (1.0 - i)
    dpre[:, H : 2 * H] = dct * c_prev * f * (1.0 - f)
    dpre[:, 2 * H : 3 * H] = do * o * (1.0 - o)
    dpre[:, 3 * H :] = dct * i * (1.0 - g * g)
    dpre *= m
    dc_prev = m * dct * f + (1.0 - m) * dc
    dh_carry = (1.0 - m) * dh
    return dpre, dc_prev, dh_carry


def attention_forward(P, q, w, frame_mask, enc):
    """Soft alignment over frames.

    ``P`` is the precomputed ``enc @ U_a.T + b_a`` of shape (B, J, A) and
    ``q`` the projected previous decoder state (B, A). Returns the hidden
    activations ``T`` (B, J, A), weights ``alpha`` (B, J) and context ``z``.
    """
    T = np.tanh(P + q[:, None, :])
    e = T @ w
    e = np.where(frame_mask > 0.5, e, -np.inf)
    e -= e.max(axis=1, keepdims=True)
    alpha = np.exp(e)
    alpha /= alpha.sum(axis=1, keepdims=True)
    z = np.einsum("bj,bjd->bd", alpha, enc)
    return T, alpha, z


def attention_backward(T, alpha, w, enc, dz):
    """Returns ``(dTa, dq, dw, denc)``.

    ``dTa`` is the gradient w.r.t. the tanh pre-activation (B, J, A), which
    is also the gradient on ``P``; ``dq`` is its sum over frames.
    """
    dalpha = np.einsum("bjd,bd->bj", enc, dz)
    de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dw = np.einsum("bj,bja->a", de, T)
    dTa = de[:, :, None] * w[None, None, :] * (1.0 - T * T)
    dq = dTa.sum(axis=1)
    denc = alpha[:, :, None] * dz[:, None, :]
    return dTa, dq, dw, denc


def log_softmax(x):
    """Row-wise log-softmax of a (B, V) array."""
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
