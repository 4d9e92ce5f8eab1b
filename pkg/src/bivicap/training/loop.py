"""Mini-batch training with periodic BLEU validation and early stopping."""
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..data import SPECIALS
from ..encoder import encode_with_model
from ..inference import beam_search, greedy_decode
from ..metrics import bleu, make_corpus
from ..model import ModelDims, init_model
from ..numerics import Rng
from .adadelta import AdadeltaState, adadelta_update
from .bptt import forward_backward, make_batch

log = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    batch_size: int = 64
    eval_every: int = 1000
    patience: int = 5
    stride: int = 26
    beam_width_for_val: int = 1
    max_caption_len: int = 30
    seed: int = 0
    cell_variant: str = "linear"
    decoder_init: str = "learned"
    m: int = 32
    H: int = 64
    D: int = 32
    A: int = 0
    R: int = 0
    rho: float = 0.95
    eps: float = 1e-6
    clip_norm: float = 0.0
    max_updates: int = 0
    bucket_batches: int = 20

    def __post_init__(self):
        for name in ("batch_size", "eval_every", "patience", "stride", "beam_width_for_val",
                     "max_caption_len", "m", "H", "D"):
            if getattr(self, name) < 1:
                raise ValueError(f"training config {name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.rho < 1.0 or self.eps <= 0.0:
            raise ValueError(f"need 0 < rho < 1 and eps > 0, got rho={self.rho}, eps={self.eps}")

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"unknown training config keys: {unknown}")
        return cls(**values)

    def to_dict(self):
        return asdict(self)

    def dims(self, d, V):
        return ModelDims(d=d, D=self.D, H=self.H, m=self.m, V=V, A=self.A, R=self.R,
                         cell_variant=self.cell_variant, decoder_init=self.decoder_init)


@dataclass
class EvalRecord:
    update: int
    train_loss: float
    val_bleu: float
    best: bool

    def line(self):
        return (f"update={self.update}\ttrain_loss={self.train_loss:.6f}"
                f"\tval_bleu={self.val_bleu:.4f}\tbest={int(self.best)}")


@dataclass
class TrainResult:
    model: object
    best_bleu: float
    updates: int
    records: list = field(default_factory=list)

    @property
    def log_text(self):
        return "".join(r.line() + "\n" for r in self.records)


def make_batches(samples, batch_size, rng, bucket_batches=20):
    """Shuffled batches of sample indices; each bucket is sorted by frame count."""
    order = rng.permutation(len(samples))
    pool = batch_size * bucket_batches
    batches = []
    for start in range(0, len(order), pool):
        chunk = sorted(order[start : start + pool], key=lambda i: samples[i][0].J)
        batches.extend(chunk[k : k + batch_size] for k in range(0, len(chunk), batch_size))
    return [batches[i] for i in rng.permutation(len(batches))]


def decode_dataset(model, dataset, beam_width=1, max_len=30):
    """Token-id hypothesis per video id."""
    out = {}
    for vid, seq, _ in dataset.entries:
        enc = encode_with_model(model, seq)
        if beam_width == 1:
            hyp = greedy_decode(model, enc, max_len)
        else:
            hyp = beam_search(model, enc, beam_width, max_len)[0]
        out[vid] = hyp.tokens
    return out


def corpus_bleu(model, dataset, beam_width=1, max_len=30):
    hyps = {vid: model.vocab.decode(toks) for vid, toks in decode_dataset(model, dataset, beam_width, max_len).items()}
    return bleu(make_corpus(hyps, dataset.references))


def clip_gradients(grads, max_norm):
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train(config, train_set, val_set, on_eval=None):
    """Train from scratch and return the best-validation-BLEU checkpoint.

    Validation runs every ``eval_every`` updates; training stops after
    ``patience`` consecutive evaluations without a BLEU improvement, or at
    ``max_updates`` when that is non-zero.
    """
    if not train_set.entries or not val_set.entries:
        raise ValueError("training and validation splits must both be non-empty")
    vocab = train_set.vocab
    if vocab is None or len(vocab) <= len(SPECIALS):
        raise ValueError("vocabulary has no words besides the special tokens")
    d = train_set.entries[0][1].d
    rng = Rng(config.seed)
    model = init_model(config.dims(d, len(vocab)), rng.spawn(), vocab, config.stride)
    shuffle_rng = rng.spawn()
    state = AdadeltaState.zeros_like(model.params, config.rho, config.eps)
    samples = train_set.samples()

    result = TrainResult(model.copy(), -1.0, 0)
    updates = 0
    bad_evals = 0
    loss_sum, loss_count = 0.0, 0
    while True:
        for idx in make_batches(samples, config.batch_size, shuffle_rng, config.bucket_batches):
            batch = make_batch([samples[i][0] for i in idx], [samples[i][1] for i in idx])
            loss, _, grads = forward_backward(model, batch)
            if config.clip_norm > 0:
                clip_gradients(grads, config.clip_norm)
            adadelta_update(model.params, grads, state)
            updates += 1
            loss_sum += loss
            loss_count += 1
            at_limit = config.max_updates and updates >= config.max_updates
            if updates % config.eval_every and not at_limit:
                continue
            val = corpus_bleu(model, val_set, config.beam_width_for_val, config.max_caption_len)
            improved = val > result.best_bleu
            if improved:
                result.model = model.copy()
                result.best_bleu = val
                bad_evals = 0
            else:
                bad_evals += 1
            rec = EvalRecord(updates, loss_sum / loss_count, val, improved)
            result.records.append(rec)
            log.info(rec.line())
            if on_eval is not None:
                on_eval(rec)
            loss_sum, loss_count = 0.0, 0
            if bad_evals >= config.patience or at_limit:
                result.updates = updates
                return result
