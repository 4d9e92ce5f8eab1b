"""Greedy and beam-search caption generation."""
from dataclasses import dataclass

import numpy as np

from .data import BOS, EOS, PAD
from .decoder import AttentionContext, AttentionParams, init_state_batch, step_batch
from .encoder import encode_with_model, subsample
from .numerics import ShapeError

# never generated: padding and a second begin-of-sentence
BANNED = (PAD, BOS)


@dataclass
class Hypothesis:
    tokens: tuple
    logprob: float
    h: np.ndarray
    c: np.ndarray
    finished: bool = False

    def score(self, length_norm=False):
        if length_norm:
            return self.logprob / max(len(self.tokens) - 1, 1)
        return self.logprob


@dataclass
class CaptionConfig:
    beam_width: int = 10
    max_len: int = 30
    length_norm: bool = False
    greedy: bool = False


def _start(model, enc):
    ctx = AttentionContext.single(AttentionParams.from_model(model), enc)
    h0, c0, _ = init_state_batch(model, ctx)
    return ctx, h0[0], c0[0]


def _mask_logp(logp, step, max_len, banned):
    logp = logp.copy()
    if banned:
        logp[:, list(banned)] = -np.inf
    if step == max_len:
        keep = logp[:, EOS].copy()
        logp[:] = -np.inf
        logp[:, EOS] = keep
    return logp


def greedy_decode(model, enc, max_len=30, banned=BANNED):
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ctx, h, c = _start(model, enc)
    tokens = [BOS]
    total = 0.0
    for step in range(1, max_len + 1):
        logp, h1, c1, _, _ = step_batch(model, [tokens[-1]], h[None], c[None], ctx)
        logp = _mask_logp(logp, step, max_len, banned)[0]
        tok = int(np.argmax(logp))
        total += float(logp[tok])
        tokens.append(tok)
        h, c = h1[0], c1[0]
        if tok == EOS:
            break
    return Hypothesis(tuple(tokens), total, h, c, tokens[-1] == EOS)


def beam_search(model, enc, beam_width=10, max_len=30, banned=BANNED, length_norm=False):
    """Hypotheses ranked best first.

    Finished hypotheses stay in the beam and compete with the extensions of
    unfinished ones; end-of-sentence is forced at step ``max_len``.
    """
    if beam_width < 1 or max_len < 1:
        raise ValueError(f"beam_width and max_len must be >= 1, got {beam_width} and {max_len}")
    ctx1, h0, c0 = _start(model, enc)
    beam = [Hypothesis((BOS,), 0.0, h0, c0)]
    for step in range(1, max_len + 1):
        active = [hyp for hyp in beam if not hyp.finished]
        if not active:
            break
        # one row per call: batched BLAS may round differently with the row count,
        # which would make a hypothesis' score depend on the beam width
        rows = [step_batch(model, [hyp.tokens[-1]], hyp.h[None], hyp.c[None], ctx1) for hyp in active]
        logp = _mask_logp(np.concatenate([r[0] for r in rows]), step, max_len, banned)
        H = [r[1][0] for r in rows]
        C = [r[2][0] for r in rows]
        # candidates in beam order; each active hypothesis expands over tokens in id order
        cands = []
        k = 0
        for hyp in beam:
            if hyp.finished:
                cands.append((hyp, None, None))
            else:
                for tok in range(logp.shape[1]):
                    if np.isfinite(logp[k, tok]):
                        cands.append((hyp, k, tok))
                k += 1
        scores = np.empty(len(cands))
        for n, (hyp, row, tok) in enumerate(cands):
            if row is None:
                scores[n] = hyp.score(length_norm)
            else:
                lp = hyp.logprob + float(logp[row, tok])
                scores[n] = lp / len(hyp.tokens) if length_norm else lp
        order = np.argsort(-scores, kind="stable")[:beam_width]
        new_beam = []
        for n in order:
            hyp, row, tok = cands[n]
            if row is None:
                new_beam.append(hyp)
            else:
                new_beam.append(Hypothesis(hyp.tokens + (tok,), hyp.logprob + float(logp[row, tok]),
                                           H[row], C[row], tok == EOS))
        beam = new_beam
    return sorted(beam, key=lambda hyp: -hyp.score(length_norm))


def score_tokens(model, enc, tokens):
    """Teacher-forced sum of log-probabilities of ``tokens[1:]``."""
    ctx, h, c = _start(model, enc)
    total = 0.0
    for prev, nxt in zip(tokens[:-1], tokens[1:]):
        logp, h1, c1, _, _ = step_batch(model, [prev], h[None], c[None], ctx)
        total += float(logp[0, nxt])
        h, c = h1[0], c1[0]
    return total


def generate(model, seq, config=None):
    """Best hypothesis for an already subsampled feature sequence."""
    config = config or CaptionConfig()
    if seq.d != model.dims.d:
        raise ShapeError(f"video {seq.video_id!r} has feature dimension {seq.d}, model expects {model.dims.d}")
    enc = encode_with_model(model, seq)
    if config.greedy:
        return [greedy_decode(model, enc, config.max_len)]
    return beam_search(model, enc, config.beam_width, config.max_len, length_norm=config.length_norm)


def caption(model, raw, config=None):
    """Subsample, encode, search and detokenize the best hypothesis."""
    if model.vocab is None:
        raise ValueError("model has no vocabulary attached")
    if raw.d != model.dims.d:
        raise ShapeError(f"video {raw.video_id!r} has feature dimension {raw.d}, model expects {model.dims.d}")
    best = generate(model, subsample(raw, model.stride), config)[0]
    return model.vocab.detokenize(best.tokens)


def write_hypotheses_tsv(fh, hyps, vocab, top_k=None):
    """``rank<TAB>logprob<TAB>caption`` lines for the first ``top_k`` hypotheses."""
    for rank, hyp in enumerate(hyps[:top_k] if top_k else hyps, 1):
        fh.write(f"{rank}\t{hyp.logprob:.6f}\t{vocab.detokenize(hyp.tokens)}\n")
