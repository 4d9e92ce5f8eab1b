"""Bidirectional LSTM encoder over per-frame feature vectors.

The single-video functions (:func:`lstm_step`, :func:`run_blstm`,
:func:`encode`) are thin wrappers around the batched, masked routines
:func:`run_lstm` and :func:`encode_batch`, which training also uses.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .numerics import ShapeError


@dataclass(frozen=True)
class FrameFeatureSequence:
    video_id: str
    frames: np.ndarray  # (J, d)

    def __post_init__(self):
        f = np.ascontiguousarray(self.frames, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ShapeError(f"video {self.video_id!r}: frames must be a non-empty J x d matrix, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError(f"video {self.video_id!r}: non-finite feature values")
        object.__setattr__(self, "frames", f)

    @property
    def J(self):
        return self.frames.shape[0]

    @property
    def d(self):
        return self.frames.shape[1]


@dataclass(frozen=True)
class LstmCellParams:
    """Stacked gate weights: rows are blocks [input, forget, output, candidate]."""

    W: np.ndarray  # (4D, in)
    U: np.ndarray  # (4D, D)
    b: np.ndarray  # (4D,)

    @property
    def hidden(self):
        return self.U.shape[1]

    @property
    def inputs(self):
        return self.W.shape[1]

    @classmethod
    def from_model(cls, model, side):
        p = model.params
        return cls(p[f"{side}.W"], p[f"{side}.U"], p[f"{side}.b"])


@dataclass(frozen=True)
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, D):
        return cls(np.zeros(D), np.zeros(D))


@dataclass(frozen=True)
class EncodedVideo:
    vectors: np.ndarray  # (J, d + 2D); row j is [x_j; v_fwd_j; v_bwd_j]

    @property
    def J(self):
        return self.vectors.shape[0]

    @property
    def width(self):
        return self.vectors.shape[1]


def lstm_step(params, x, prev, standard=False):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.inputs,):
        raise ShapeError(f"lstm input has shape {x.shape}, cell expects ({params.inputs},)")
    if prev.h.shape != (params.hidden,) or prev.c.shape != (params.hidden,):
        raise ShapeError(f"lstm state shapes {prev.h.shape}/{prev.c.shape}, cell hidden size {params.hidden}")
    pre = (params.W @ x + params.b) + params.U @ prev.h
    _, c, h = kernels.lstm_forward(pre[None, :], prev.c[None, :].copy(), prev.h[None, :].copy(),
                                   np.ones(1), standard)
    return LstmState(h[0], c[0])


def run_lstm(params, X, mask, reverse=False, standard=False):
    """Run one LSTM direction over a padded batch.

    ``X`` is (B, J, in), ``mask`` (B, J). Padded steps hold the state, so in
    the reverse direction each sequence starts from a zero state at its own
    last frame. Returns ``(Hs, cache)`` with ``Hs`` of shape (B, J, D).
    """
    B, J, _ = X.shape
    D = params.hidden
    # input projections for all steps at once
    XW = X @ params.W.T + params.b
    h = np.zeros((B, D))
    c = np.zeros((B, D))
    Hs = np.zeros((B, J, D))
    acts, cs, hs_prev, cs_prev = [None] * J, [None] * J, [None] * J, [None] * J
    order = range(J - 1, -1, -1) if reverse else range(J)
    for j in order:
        pre = XW[:, j] + h @ params.U.T
        hs_prev[j], cs_prev[j] = h, c
        a, c, h = kernels.lstm_forward(pre, c, h,
                                       np.ascontiguousarray(mask[:, j]), standard)
        acts[j], cs[j] = a, c
        Hs[:, j] = h
    cache = dict(X=X, mask=mask, reverse=reverse, standard=standard,
                 acts=acts, cs=cs, hs_prev=hs_prev, cs_prev=cs_prev)
    return Hs, cache


def run_lstm_backward(params, dHs, cache):
    """Gradients of :func:`run_lstm` given dL/dHs. Returns ``(dW, dU, db)``."""
    X, mask = cache["X"], cache["mask"]
    B, J, _ = X.shape
    D = params.hidden
    dPre = np.zeros((B, J, 4 * D))
    dh = np.zeros((B, D))
    dc = np.zeros((B, D))
    order = range(J) if cache["reverse"] else range(J - 1, -1, -1)
    for j in order:
        dpre, dc, dh_carry = kernels.lstm_backward(
            cache["acts"][j], cache["cs_prev"][j], cache["cs"][j],
            np.ascontiguousarray(dh + dHs[:, j]), dc,
            np.ascontiguousarray(mask[:, j]), cache["standard"])
        dh = dh_carry + dpre @ params.U
        dPre[:, j] = dpre
    flat = dPre.reshape(B * J, 4 * D)
    dW = flat.T @ X.reshape(B * J, -1)
    dU = flat.T @ np.stack(cache["hs_prev"], axis=1).reshape(B * J, D)
    db = flat.sum(axis=0)
    return dW, dU, db


def pad_frames(seqs):
    """Stack variable-length sequences into (B, Jmax, d) plus a (B, Jmax) mask."""
    d = {s.d for s in seqs}
    if len(d) != 1:
        raise ShapeError(f"feature dimensions differ within batch: {sorted(d)}")
    Jmax = max(s.J for s in seqs)
    X = np.zeros((len(seqs), Jmax, d.pop()))
    mask = np.zeros((len(seqs), Jmax))
    for b, s in enumerate(seqs):
        X[b, : s.J] = s.frames
        mask[b, : s.J] = 1.0
    return X, mask


def encode_batch(fwd, bwd, X, mask, standard=False):
    """Encode a padded batch. Returns ``(enc (B, J, d + 2D), cache)``."""
    if X.shape[2] != fwd.inputs or X.shape[2] != bwd.inputs:
        raise ShapeError(f"feature dimension {X.shape[2]} does not match encoder input "
                         f"{fwd.inputs}/{bwd.inputs}")
    Hf, cf = run_lstm(fwd, X, mask, reverse=False, standard=standard)
    Hb, cb = run_lstm(bwd, X, mask, reverse=True, standard=standard)
    enc = np.concatenate([X, Hf, Hb], axis=2)
    enc *= mask[:, :, None]
    return enc, (cf, cb)


def encode_batch_backward(fwd, bwd, denc, cache):
    cf, cb = cache
    d, D = fwd.inputs, fwd.hidden
    denc = denc * cf["mask"][:, :, None]
    gf = run_lstm_backward(fwd, np.ascontiguousarray(denc[:, :, d : d + D]), cf)
    gb = run_lstm_backward(bwd, np.ascontiguousarray(denc[:, :, d + D :]), cb)
    return gf, gb


def run_blstm(fwd, bwd, seq, standard=False):
    """(J, 2D) matrix whose row j is [forward h_j; backward h_j]."""
    if fwd.inputs != seq.d or bwd.inputs != seq.d:
        raise ShapeError(f"video {seq.video_id!r} has d={seq.d}, encoder expects {fwd.inputs}")
    X = seq.frames[None]
    mask = np.ones((1, seq.J))
    Hf, _ = run_lstm(fwd, X, mask, reverse=False, standard=standard)
    Hb, _ = run_lstm(bwd, X, mask, reverse=True, standard=standard)
    return np.concatenate([Hf[0], Hb[0]], axis=1)


def encode(fwd, bwd, seq, standard=False):
    V = run_blstm(fwd, bwd, seq, standard)
    return EncodedVideo(np.concatenate([seq.frames, V], axis=1))


def encode_with_model(model, seq):
    return encode(LstmCellParams.from_model(model, "enc_fwd"), LstmCellParams.from_model(model, "enc_bwd"),
                  seq, model.dims.standard_cell)


def subsample(raw, stride=26):
    """Keep frames 0, stride, 2*stride, ...; always at least one frame."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return FrameFeatureSequence(raw.video_id, raw.frames[::stride])
