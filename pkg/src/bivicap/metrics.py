"""Corpus BLEU and CIDEr on a 0-100 scale, plus TSV-driven evaluation."""
import math
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

_PUNCT = string.punctuation


def tokenize(text):
    """Lowercase, split on whitespace, strip ASCII punctuation at token edges."""
    out = []
    for tok in text.lower().split():
        tok = tok.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    hypothesis: list
    references: list

    def __post_init__(self):
        if not self.references:
            raise ValueError(f"entry {self.id!r} has no references")


def make_corpus(hyps, refs):
    """Build entries from ``{id: tokens}`` and ``{id: [tokens, ...]}`` maps."""
    return [CorpusEntry(k, list(hyps[k]), [list(r) for r in refs[k]]) for k in hyps]


def ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(hyp_len, refs):
    # ties go to the shorter reference
    return min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]


def bleu_stats(corpus, max_n=4):
    """Pooled (matches[n], totals[n], hyp_len, ref_len) over the corpus."""
    matches = [0] * max_n
    totals = [0] * max_n
    c = r = 0
    for e in corpus:
        hyp = e.hypothesis
        c += len(hyp)
        r += _closest_ref_length(len(hyp), e.references)
        for n in range(1, max_n + 1):
            hyp_counts = ngrams(hyp, n)
            max_ref = Counter()
            for ref in e.references:
                max_ref |= ngrams(ref, n)
            matches[n - 1] += sum(min(k, max_ref[g]) for g, k in hyp_counts.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    return matches, totals, c, r


def bleu(corpus, max_n=4, smooth=False):
    """Corpus BLEU-``max_n`` x 100 with uniform weights and brevity penalty.

    ``smooth`` adds one to numerator and denominator of the n >= 2
    precisions, which keeps tiny corpora from collapsing to zero.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("BLEU of an empty corpus")
    matches, totals, c, r = bleu_stats(corpus, max_n)
    if c == 0:
        return 0.0
    log_p = 0.0
    for n in range(max_n):
        num, den = matches[n], totals[n]
        if smooth and n > 0:
            num, den = num + 1, den + 1
        if num == 0 or den == 0:
            return 0.0
        log_p += math.log(num / den) / max_n
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(log_p)


def _tfidf(counts, doc_freq, log_n_docs):
    vec = {}
    total = sum(counts.values())
    for g, k in counts.items():
        vec[g] = (k / total) * (log_n_docs - math.log(max(1.0, doc_freq[g])))
    return vec


def _cosine(a, b):
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return sum(v * b.get(g, 0.0) for g, v in a.items()) / (na * nb)


def cider_per_entry(corpus, max_n=4):
    """Per-entry CIDEr in [0, 1] (mean over n of mean reference cosine)."""
    corpus = list(corpus)
    if len(corpus) < 2:
        raise ValueError("CIDEr needs at least two corpus entries to estimate document frequencies")
    scores = [0.0] * len(corpus)
    log_n = math.log(len(corpus))
    for n in range(1, max_n + 1):
        # document = the reference set of one entry
        df = Counter()
        for e in corpus:
            df.update({g for ref in e.references for g in ngrams(ref, n)})
        for i, e in enumerate(corpus):
            hv = _tfidf(ngrams(e.hypothesis, n), df, log_n) if len(e.hypothesis) >= n else {}
            sims = []
            for ref in e.references:
                rv = _tfidf(ngrams(ref, n), df, log_n) if len(ref) >= n else {}
                sims.append(_cosine(hv, rv))
            scores[i] += sum(sims) / len(sims) / max_n
    return scores


def cider(corpus, max_n=4):
    """Corpus CIDEr, scaled so a perfect score is 100."""
    per = cider_per_entry(corpus, max_n)
    return 100.0 * sum(per) / len(per)


METRICS = {"bleu": bleu, "cider": cider}


class EvaluationError(ValueError):
    pass


def read_tsv(path):
    from .data import read_captions

    path = Path(path)
    if not path.is_file():
        raise EvaluationError(f"file not found: {path}")
    return read_captions(path)


def evaluate_corpus(hyps, refs, metrics=("bleu", "cider")):
    """Score tokenized ``hyps`` ({id: tokens}) against ``refs`` ({id: [tokens]})."""
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise EvaluationError(f"unknown metric(s) {unknown}; valid names: {sorted(METRICS)}")
    only_hyp = sorted(set(hyps) - set(refs))
    only_ref = sorted(set(refs) - set(hyps))
    if only_hyp or only_ref:
        raise EvaluationError(f"id mismatch: in hypotheses only {only_hyp}, in references only {only_ref}")
    corpus = make_corpus(hyps, refs)
    return {m: METRICS[m](corpus) for m in metrics}


def evaluate_files(hyp_path, ref_path, metrics=("bleu", "cider")):
    hyps = {}
    for vid, text in read_tsv(hyp_path):
        if vid in hyps:
            raise EvaluationError(f"{hyp_path}: video {vid!r} has more than one hypothesis")
        hyps[vid] = tokenize(text)
    refs = {}
    for vid, text in read_tsv(ref_path):
        refs.setdefault(vid, []).append(tokenize(text))
    return evaluate_corpus(hyps, refs, metrics)


def format_report(scores):
    return "".join(f"{name}\t{value:.2f}\n" for name, value in scores.items())
