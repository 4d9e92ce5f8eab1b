"""Attention-conditioned LSTM language model.

At step t, with previous word y and previous state (h, c):

* alignment   e_j = w . tanh(W_a h + U_a w_j + b_a),  alpha = softmax(e)
* context     z = sum_j alpha_j w_j
* cell        gates from W E(y) + U h + A z + b
* readout     log_softmax(U_p tanh(W_p [h'; z; E(y)] + b_p) + d)

All batched routines take a :class:`AttentionContext` that carries the
padded encoder output and the frame-independent part of the alignment
projection, computed once per video.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .encoder import EncodedVideo
from .numerics import ShapeError


@dataclass(frozen=True)
class AttentionParams:
    W_a: np.ndarray  # (A, H)
    U_a: np.ndarray  # (A, Dw)
    b_a: np.ndarray  # (A,)
    w: np.ndarray  # (A,)

    @classmethod
    def from_model(cls, model):
        p = model.params
        return cls(p["att.W_a"], p["att.U_a"], p["att.b_a"], p["att.w"])


@dataclass(frozen=True)
class DecodeStep:
    h: np.ndarray
    c: np.ndarray
    alpha: np.ndarray
    logprobs: np.ndarray


@dataclass
class AttentionContext:
    enc: np.ndarray  # (B, J, Dw)
    frame_mask: np.ndarray  # (B, J)
    P: np.ndarray  # (B, J, A): enc @ U_a.T + b_a

    @classmethod
    def build(cls, att, enc, frame_mask):
        if enc.shape[1] == 0:
            raise ValueError("cannot attend over a video with no frames")
        if enc.shape[2] != att.U_a.shape[1]:
            raise ShapeError(f"encoded width {enc.shape[2]} does not match attention input {att.U_a.shape[1]}")
        P = np.ascontiguousarray(enc @ att.U_a.T + att.b_a)
        return cls(np.ascontiguousarray(enc), np.ascontiguousarray(frame_mask, dtype=np.float64), P)

    @classmethod
    def single(cls, att, enc):
        vec = enc.vectors if isinstance(enc, EncodedVideo) else np.asarray(enc, dtype=np.float64)
        if vec.ndim != 2 or vec.shape[0] == 0:
            raise ValueError(f"attention needs a non-empty J x width matrix, got shape {vec.shape}")
        return cls.build(att, vec[None], np.ones((1, vec.shape[0])))

    def take(self, rows):
        """Context whose batch rows are ``self`` rows at ``rows`` (repeats allowed)."""
        rows = np.asarray(rows)
        return AttentionContext(self.enc[rows], self.frame_mask[rows], self.P[rows])

    @property
    def batch(self):
        return self.enc.shape[0]


def attend_batch(att, h_prev, ctx):
    q = np.ascontiguousarray(h_prev @ att.W_a.T)
    return kernels.attention_forward(ctx.P, q, att.w, ctx.frame_mask, ctx.enc)


def attend(params, h_prev, enc):
    """Context vector and attention weights for one video."""
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if h_prev.shape != (params.W_a.shape[1],):
        raise ShapeError(f"decoder state has shape {h_prev.shape}, attention expects ({params.W_a.shape[1]},)")
    ctx = AttentionContext.single(params, enc)
    _, alpha, z = attend_batch(params, h_prev[None], ctx)
    return z[0], alpha[0]


def init_state_batch(model, ctx):
    """Initial decoder (h, c) from the mean of each video's encoded frames."""
    B = ctx.batch
    H = model.dims.H
    if model.dims.decoder_init == "zero":
        return np.zeros((B, H)), np.zeros((B, H)), None
    counts = ctx.frame_mask.sum(axis=1, keepdims=True)
    wbar = np.einsum("bj,bjd->bd", ctx.frame_mask, ctx.enc) / counts
    h0 = np.tanh(wbar @ model.params["init.h"].T)
    c0 = np.tanh(wbar @ model.params["init.c"].T)
    return h0, c0, dict(wbar=wbar, h0=h0, c0=c0, counts=counts)


def init_decoder_state(model, enc):
    ctx = AttentionContext.single(AttentionParams.from_model(model), enc)
    h0, c0, _ = init_state_batch(model, ctx)
    return h0[0], c0[0]


def step_batch(model, tokens, h, c, ctx, keep_cache=False):
    """One decoder step for a batch. Returns ``(logp, h, c, alpha, cache)``."""
    p = model.params
    V = model.dims.V
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.size and (tokens.min() < 0 or tokens.max() >= V):
        raise IndexError(f"token id out of range [0, {V}): {tokens.tolist()}")
    att = AttentionParams.from_model(model)
    T, alpha, z = attend_batch(att, h, ctx)
    x = p["emb.E"][:, tokens].T  # (B, m)
    pre = x @ p["dec.W"].T + h @ p["dec.U"].T + z @ p["dec.A"].T + p["dec.b"]
    acts, c_new, h_new = kernels.lstm_forward(np.ascontiguousarray(pre), c, h,
                                              np.ones(len(tokens)), model.dims.standard_cell)
    s = np.concatenate([h_new, z, x], axis=1)
    r = np.tanh(s @ p["out.W_p"].T + p["out.b_p"])
    logits = r @ p["out.U_p"].T + p["out.d"]
    logp = kernels.log_softmax(np.ascontiguousarray(logits))
    cache = None
    if keep_cache:
        cache = dict(tokens=tokens, h_prev=h, c_prev=c, T=T, alpha=alpha, z=z, x=x,
                     acts=acts, c=c_new, s=s, r=r)
    return logp, h_new, c_new, alpha, cache


def decode_step(model, prev_token, state, enc):
    """Single-video decoder step from ``state = (h, c)``."""
    h, c = state
    H = model.dims.H
    if np.shape(h) != (H,) or np.shape(c) != (H,):
        raise ShapeError(f"decoder state shapes {np.shape(h)}/{np.shape(c)}, expected ({H},)")
    if not 0 <= int(prev_token) < model.dims.V:
        raise IndexError(f"token id {prev_token} out of range [0, {model.dims.V})")
    ctx = AttentionContext.single(AttentionParams.from_model(model), enc)
    logp, h1, c1, alpha, _ = step_batch(model, [int(prev_token)], np.asarray(h, float)[None],
                                        np.asarray(c, float)[None], ctx)
    return DecodeStep(h1[0], c1[0], alpha[0], logp[0])
