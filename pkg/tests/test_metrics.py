import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bivicap.metrics import (CorpusEntry, EvaluationError, bleu, bleu_stats, cider, cider_per_entry,
                             evaluate_corpus, evaluate_files, format_report, make_corpus, tokenize)

WORDS = ["a", "man", "dog", "is", "running", "the", "cat", "plays"]
sentence = st.lists(st.sampled_from(WORDS), min_size=1, max_size=9)
entries = st.lists(st.tuples(sentence, st.lists(sentence, min_size=1, max_size=3)), min_size=2, max_size=6)


def as_corpus(raw):
    return [CorpusEntry(str(i), h, refs) for i, (h, refs) in enumerate(raw)]


def oracle_bleu(corpus, N=4):
    p_num = np.zeros(N)
    p_den = np.zeros(N)
    c = r = 0
    for e in corpus:
        h = e.hypothesis
        c += len(h)
        lens = sorted(len(x) for x in e.references)
        r += min(lens, key=lambda L: (abs(L - len(h)), L))
        for n in range(1, N + 1):
            grams = [tuple(h[i : i + n]) for i in range(len(h) - n + 1)]
            for g in set(grams):
                best = max(sum(1 for i in range(len(x) - n + 1) if tuple(x[i : i + n]) == g) for x in e.references)
                p_num[n - 1] += min(grams.count(g), best)
            p_den[n - 1] += len(grams)
    if np.any(p_num == 0):
        return 0.0
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return 100 * bp * math.exp(np.mean(np.log(p_num / p_den)))


def oracle_cider(corpus, N=4):
    total = np.zeros(len(corpus))
    for n in range(1, N + 1):
        def grams(x):
            return Counter(tuple(x[i : i + n]) for i in range(len(x) - n + 1))

        vocab = sorted({g for e in corpus for x in [e.hypothesis, *e.references] for g in grams(x)})
        index = {g: k for k, g in enumerate(vocab)}
        df = np.zeros(len(vocab))
        for e in corpus:
            for g in {g for x in e.references for g in grams(x)}:
                df[index[g]] += 1
        idf = np.log(len(corpus)) - np.log(np.maximum(df, 1))

        def vec(x):
            v = np.zeros(len(vocab))
            cnt = grams(x)
            for g, k in cnt.items():
                v[index[g]] = k
            s = v.sum()
            return v / s * idf if s else v

        for i, e in enumerate(corpus):
            hv = vec(e.hypothesis)
            sims = []
            for x in e.references:
                rv = vec(x)
                den = np.linalg.norm(hv) * np.linalg.norm(rv)
                sims.append(hv @ rv / den if den else 0.0)
            total[i] += np.mean(sims) / N
    return 100 * total.mean()


def test_tokenize():
    assert tokenize("A man, is RUNNING.") == ["a", "man", "is", "running"]
    assert tokenize("  don't ... stop!  ") == ["don't", "stop"]
    assert tokenize("") == []


def test_bleu_perfect_and_zero():
    corpus = [CorpusEntry("1", "a man is running fast".split(), ["a man is running fast".split()])]
    assert bleu(corpus) == pytest.approx(100.0, abs=1e-12)
    disjoint = [CorpusEntry("1", "x y z w".split(), ["a b c d".split()])]
    assert bleu(disjoint) == 0.0


def test_clipped_unigram_precision():
    corpus = [CorpusEntry("1", ["the"] * 4, [["the", "cat"], ["a", "cat"]])]
    matches, totals, _, _ = bleu_stats(corpus)
    assert matches[0] / totals[0] == 0.25


def test_missing_fourgram_gives_zero_unless_smoothed():
    corpus = [CorpusEntry("1", "a man runs".split(), ["a man runs".split()])]
    assert bleu(corpus) == 0.0
    assert bleu(corpus, smooth=True) > 0.0


def test_brevity_penalty_value():
    ref = "a b c d e f g h".split()
    corpus = [CorpusEntry("1", ref[:4], [ref])]
    assert bleu(corpus) == pytest.approx(100 * math.exp(1 - 8 / 4), rel=1e-12)


def test_closest_reference_tie_prefers_shorter():
    corpus = [CorpusEntry("1", "a b c d e".split(), ["a b c d".split(), "a b c d e f".split()])]
    assert bleu_stats(corpus)[3] == 4


@settings(max_examples=100, deadline=None)
@given(entries)
def test_bleu_matches_oracle(raw):
    corpus = as_corpus(raw)
    assert bleu(corpus) == pytest.approx(oracle_bleu(corpus), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(entries)
def test_cider_matches_oracle(raw):
    corpus = as_corpus(raw)
    assert cider(corpus) == pytest.approx(oracle_cider(corpus), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(entries, st.randoms(use_true_random=False))
def test_order_invariance_and_bleu_duplication(raw, rnd):
    corpus = as_corpus(raw)
    shuffled = corpus[:]
    rnd.shuffle(shuffled)
    for metric in (bleu, cider):
        base = metric(corpus)
        assert metric(shuffled) == pytest.approx(base, abs=1e-9)
        assert 0.0 <= base <= 100.0 + 1e-9
    # CIDEr is not: an n-gram absent from every reference has idf log N, which grows with N
    assert bleu(corpus * 3) == pytest.approx(bleu(corpus), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(entries, sentence)
def test_extra_reference_never_lowers_matches(raw, extra):
    corpus = as_corpus(raw)
    more = [CorpusEntry(e.id, e.hypothesis, e.references + [extra]) for e in corpus]
    m0 = bleu_stats(corpus)[0]
    m1 = bleu_stats(more)[0]
    assert all(b >= a for a, b in zip(m0, m1))


def test_cider_extremes():
    corpus = [
        CorpusEntry("1", "a man is running".split(), ["a man is running".split()]),
        CorpusEntry("2", "the cat plays piano".split(), ["the cat plays piano".split()]),
        CorpusEntry("3", "dogs bark at night".split(), ["dogs bark at night".split()]),
    ]
    assert cider(corpus) == pytest.approx(100.0, abs=1e-9)
    swapped = [CorpusEntry(e.id, "zebra eats grass now".split(), e.references) for e in corpus]
    assert cider(swapped) == 0.0
    assert len(cider_per_entry(corpus)) == 3
    with pytest.raises(ValueError):
        cider(corpus[:1])


def test_cider_three_entry_hand_value():
    corpus = [
        CorpusEntry("1", ["a", "b"], [["a", "c"]]),
        CorpusEntry("2", ["c"], [["c"]]),
        CorpusEntry("3", ["d"], [["e"]]),
    ]
    # n=1 only for entry 1: idf(a)=idf(b)=log 3, idf(c)=log 3 - log 2
    la, lc = math.log(3), math.log(3) - math.log(2)
    cos1 = (0.5 * la * 0.5 * la) / (math.sqrt(2) * 0.5 * la * 0.5 * math.sqrt(la**2 + lc**2))
    expected = 100 * (cos1 / 4 + 0.25 + 0.0) / 3
    assert cider(corpus) == pytest.approx(expected, rel=1e-12)


def write_tsv(path, rows):
    path.write_text("".join(f"{a}\t{b}\n" for a, b in rows))
    return path


def test_file_and_memory_agree(tmp_path):
    hyps = {"v1": "A man is running.", "v2": "the cat plays"}
    refs = [("v1", "a man is running"), ("v1", "a man runs"), ("v2", "a cat is playing"), ("v2", "the cat plays")]
    hp = write_tsv(tmp_path / "h.tsv", hyps.items())
    rp = write_tsv(tmp_path / "r.tsv", refs)
    from_files = evaluate_files(hp, rp)
    ref_map = {}
    for k, t in refs:
        ref_map.setdefault(k, []).append(tokenize(t))
    from_mem = evaluate_corpus({k: tokenize(v) for k, v in hyps.items()}, ref_map)
    assert from_files == from_mem
    assert set(from_files) == {"bleu", "cider"}
    assert format_report({"bleu": 100.0}) == "bleu\t100.00\n"


def test_id_mismatch_names_ids(tmp_path):
    hp = write_tsv(tmp_path / "h.tsv", [("v1", "a"), ("v9", "b")])
    rp = write_tsv(tmp_path / "r.tsv", [("v1", "a"), ("v2", "b")])
    with pytest.raises(EvaluationError, match="v9") as err:
        evaluate_files(hp, rp)
    assert "v2" in str(err.value)


def test_unknown_metric_and_missing_file(tmp_path):
    with pytest.raises(EvaluationError, match="meteor"):
        evaluate_corpus({"a": ["x"]}, {"a": [["x"]]}, ["meteor"])
    with pytest.raises(EvaluationError, match="nope.tsv"):
        evaluate_files(tmp_path / "nope.tsv", tmp_path / "nope.tsv")


def test_make_corpus_copies():
    refs = {"a": [["x", "y"]]}
    corpus = make_corpus({"a": ["x"]}, refs)
    corpus[0].references[0].append("z")
    assert refs["a"][0] == ["x", "y"]
