"""Teacher-forced cross-entropy and its exact gradient.

The loss of one caption is the mean negative log-probability of its target
tokens; the loss of a batch is the mean of its captions' losses. Gradients
are accumulated by hand in reverse through readout, decoder cell, attention,
decoder initialization and both encoder directions.
"""
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..data import BOS, EOS, PAD
from ..decoder import AttentionContext, AttentionParams, init_state_batch, step_batch
from ..encoder import LstmCellParams, encode_batch, encode_batch_backward, pad_frames


@dataclass
class Batch:
    """Padded, time-major targets plus per-video frame masks.

    ``inputs[t, b]`` is the word fed at step t and ``targets[t, b]`` the word
    to predict; ``target_mask`` is 1 on real targets (including the final
    end-of-sentence) and 0 on padding.
    """

    videos: list
    X: np.ndarray  # (B, Jmax, d)
    frame_mask: np.ndarray  # (B, Jmax)
    inputs: np.ndarray  # (Tmax, B)
    targets: np.ndarray  # (Tmax, B)
    target_mask: np.ndarray  # (Tmax, B)

    @property
    def size(self):
        return len(self.videos)

    @property
    def lengths(self):
        return self.target_mask.sum(axis=0)


def check_caption(caption):
    if len(caption) < 2:
        raise ValueError(f"caption needs at least begin and end tokens, got {list(caption)}")
    if caption[0] != BOS or caption[-1] != EOS:
        raise ValueError(f"caption must start with BOS ({BOS}) and end with EOS ({EOS}): {list(caption)}")


def make_batch(videos, captions):
    if len(videos) != len(captions) or not videos:
        raise ValueError(f"need one caption per video, got {len(videos)} videos and {len(captions)} captions")
    for cap in captions:
        check_caption(cap)
    X, frame_mask = pad_frames(videos)
    Tmax = max(len(c) for c in captions) - 1
    B = len(captions)
    inputs = np.full((Tmax, B), PAD, dtype=np.int64)
    targets = np.full((Tmax, B), PAD, dtype=np.int64)
    target_mask = np.zeros((Tmax, B))
    for b, cap in enumerate(captions):
        n = len(cap) - 1
        inputs[:n, b] = cap[:-1]
        targets[:n, b] = cap[1:]
        target_mask[:n, b] = 1.0
    return Batch(list(videos), X, frame_mask, inputs, targets, target_mask)


def forward_backward(model, batch, need_grad=True):
    """Batch loss, per-caption losses and (optionally) the gradient dict."""
    p = model.params
    dims = model.dims
    standard = dims.standard_cell
    fwd = LstmCellParams.from_model(model, "enc_fwd")
    bwd = LstmCellParams.from_model(model, "enc_bwd")
    att = AttentionParams.from_model(model)
    B = batch.size
    Tmax = batch.inputs.shape[0]
    rows = np.arange(B)

    enc, enc_cache = encode_batch(fwd, bwd, batch.X, batch.frame_mask, standard)
    ctx = AttentionContext.build(att, enc, batch.frame_mask)
    h, c, init_cache = init_state_batch(model, ctx)
    lengths = batch.lengths
    weights = batch.target_mask / (lengths * B)

    per_caption = np.zeros(B)
    caches = []
    for t in range(Tmax):
        logp, h, c, _, cache = step_batch(model, batch.inputs[t], h, c, ctx, keep_cache=need_grad)
        per_caption -= batch.target_mask[t] * logp[rows, batch.targets[t]]
        if need_grad:
            cache["logp"] = logp
            caches.append(cache)
    per_caption /= lengths
    loss = per_caption.mean()
    if not need_grad:
        return loss, per_caption, None

    H, Dw = dims.H, dims.width
    g = {name: np.zeros_like(arr) for name, arr in p.items()}
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    dP = np.zeros_like(ctx.P)
    denc = np.zeros_like(enc)
    ones = np.ones(B)
    for t in range(Tmax - 1, -1, -1):
        k = caches[t]
        w_t = weights[t]
        dlogits = np.exp(k["logp"]) * w_t[:, None]
        dlogits[rows, batch.targets[t]] -= w_t
        g["out.U_p"] += dlogits.T @ k["r"]
        g["out.d"] += dlogits.sum(axis=0)
        dra = (dlogits @ p["out.U_p"]) * (1.0 - k["r"] ** 2)
        g["out.W_p"] += dra.T @ k["s"]
        g["out.b_p"] += dra.sum(axis=0)
        ds = dra @ p["out.W_p"]
        dz = ds[:, H : H + Dw]
        dx = ds[:, H + Dw :]
        dpre, dc, _ = kernels.lstm_backward(k["acts"], k["c_prev"], k["c"],
                                            np.ascontiguousarray(dh + ds[:, :H]), dc, ones, standard)
        g["dec.W"] += dpre.T @ k["x"]
        g["dec.U"] += dpre.T @ k["h_prev"]
        g["dec.A"] += dpre.T @ k["z"]
        g["dec.b"] += dpre.sum(axis=0)
        dx = dx + dpre @ p["dec.W"]
        dh = dpre @ p["dec.U"]
        dz = dz + dpre @ p["dec.A"]
        np.add.at(g["emb.E"].T, k["tokens"], dx)
        dTa, dq, dw, denc_t = kernels.attention_backward(k["T"], k["alpha"], att.w, ctx.enc,
                                                         np.ascontiguousarray(dz))
        g["att.w"] += dw
        dP += dTa
        denc += denc_t
        g["att.W_a"] += dq.T @ k["h_prev"]
        dh += dq @ p["att.W_a"]

    J, A = dP.shape[1], dP.shape[2]
    flat = dP.reshape(B * J, A)
    g["att.U_a"] += flat.T @ enc.reshape(B * J, Dw)
    g["att.b_a"] += flat.sum(axis=0)
    denc += dP @ p["att.U_a"]

    if init_cache is not None:
        dhp = dh * (1.0 - init_cache["h0"] ** 2)
        dcp = dc * (1.0 - init_cache["c0"] ** 2)
        g["init.h"] += dhp.T @ init_cache["wbar"]
        g["init.c"] += dcp.T @ init_cache["wbar"]
        dwbar = (dhp @ p["init.h"] + dcp @ p["init.c"]) / init_cache["counts"]
        denc += batch.frame_mask[:, :, None] * dwbar[:, None, :]

    (g["enc_fwd.W"], g["enc_fwd.U"], g["enc_fwd.b"]), (g["enc_bwd.W"], g["enc_bwd.U"], g["enc_bwd.b"]) = \
        encode_batch_backward(fwd, bwd, denc, enc_cache)
    return loss, per_caption, g


def batch_loss(model, batch):
    return forward_backward(model, batch, need_grad=False)[0]


def sentence_loss(model, video, caption):
    """Mean negative log-probability of ``caption`` (BOS ... EOS) given ``video``."""
    return batch_loss(model, make_batch([video], [list(caption)]))


def backward(model, video, caption):
    """Gradient of :func:`sentence_loss` for every parameter tensor."""
    return forward_backward(model, make_batch([video], [list(caption)]))[2]
