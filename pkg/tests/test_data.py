import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bivicap.data import (BOS, DATA_DIR_ENV, EOS, UNK, DataError, FeatureFormatError, Vocabulary, build_vocab,
                          concat_feature_sets, load_features, load_split, make_dataset, make_toy_dataset,
                          read_features, write_features)
from bivicap.encoder import FrameFeatureSequence
from bivicap.numerics import Rng


@pytest.fixture
def caption_file(tmp_path):
    p = tmp_path / "caps.tsv"
    p.write_text("v1\ta dog\nv2\ta cat\n", encoding="utf-8")
    return p


def test_vocab_examples(caption_file):
    v = build_vocab(caption_file)
    assert len(v) == 7
    assert v.tokens()[4:] == ["a", "cat", "dog"]
    v2 = build_vocab(caption_file, min_count=2)
    assert len(v2) == 5 and "a" in v2 and "dog" not in v2
    assert v2.encode("a dog") == [BOS, 4, UNK, EOS]


def test_vocab_round_trip_and_oov(caption_file):
    v = build_vocab(caption_file)
    assert v.decode(v.encode("a cat dog")) == ["a", "cat", "dog"]
    ids = v.encode("a zebra")
    assert ids[2] == UNK
    assert v.detokenize(ids) == "a <unk>"
    assert build_vocab(caption_file) == v


def test_vocab_frequency_order():
    v = Vocabulary.build(["b a", "b c", "b a"])
    assert v.tokens()[4:] == ["b", "a", "c"]


def test_vocab_errors(tmp_path):
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    with pytest.raises(DataError):
        build_vocab(empty)
    with pytest.raises(DataError):
        Vocabulary(["<eos>"])
    with pytest.raises(DataError):
        Vocabulary(["a", "a"])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.text(alphabet="abcxyz", min_size=1, max_size=4), min_size=1, max_size=20))
def test_any_token_encodes_and_decodes(words):
    v = Vocabulary.build(["abc xyz"])
    ids = v.encode(words)
    assert all(0 <= i < len(v) for i in ids)
    assert len(v.decode(ids)) == len(words)


def test_feature_header_example(tmp_path):
    p = tmp_path / "x.vdfq"
    p.write_bytes(b"VDFQ" + struct.pack("<III", 1, 2, 3) + struct.pack("<6f", *range(6)))
    seq = read_features(p, "x")
    assert seq.frames.shape == (2, 3) and seq.frames.dtype == np.float64
    assert seq.frames[1].tolist() == [3.0, 4.0, 5.0]


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 5)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_feature_round_trip_bit_exact(tmp_path_factory, frames):
    p = tmp_path_factory.mktemp("f") / "v.vdfq"
    write_features(p, frames)
    raw = p.read_bytes()
    back = read_features(p).frames
    assert back.astype(np.float32).tobytes() == frames.astype("<f4").tobytes()
    write_features(p, back)
    assert p.read_bytes() == raw


def test_feature_errors(tmp_path):
    bad = tmp_path / "bad.vdfq"
    bad.write_bytes(b"XXXX" + struct.pack("<III", 1, 1, 1) + b"\0" * 4)
    with pytest.raises(FeatureFormatError, match="bad.vdfq"):
        read_features(bad)
    zero = tmp_path / "zero.vdfq"
    zero.write_bytes(b"VDFQ" + struct.pack("<III", 1, 0, 3))
    with pytest.raises(FeatureFormatError, match="empty"):
        read_features(zero)
    nan = tmp_path / "nan.vdfq"
    write_features(nan, np.array([[1.0, np.nan]]))
    with pytest.raises(FeatureFormatError, match="non-finite"):
        read_features(nan)
    short = tmp_path / "short.vdfq"
    short.write_bytes(b"VDFQ" + struct.pack("<III", 1, 2, 2) + b"\0" * 4)
    with pytest.raises(FeatureFormatError, match="payload"):
        read_features(short)
    with pytest.raises(FeatureFormatError):
        read_features(tmp_path / "missing.vdfq")


def test_inconsistent_dimension_across_manifest(tmp_path):
    write_features(tmp_path / "a.vdfq", np.ones((2, 3)))
    write_features(tmp_path / "b.vdfq", np.ones((2, 4)))
    (tmp_path / "m.tsv").write_text("a\ta.vdfq\nb\tb.vdfq\n")
    with pytest.raises(FeatureFormatError, match="b.vdfq"):
        load_features(tmp_path / "m.tsv")


def test_missing_manifest_names_path(tmp_path):
    with pytest.raises(DataError, match="nowhere.tsv"):
        load_features(tmp_path / "nowhere.tsv")


def test_data_dir_environment(tmp_path, monkeypatch):
    root = tmp_path / "root"
    root.mkdir()
    write_features(root / "a.vdfq", np.ones((2, 3)))
    man = tmp_path / "elsewhere" / "m.tsv"
    man.parent.mkdir()
    man.write_text("a\ta.vdfq\n")
    with pytest.raises(FeatureFormatError):
        load_features(man)
    monkeypatch.setenv(DATA_DIR_ENV, str(root))
    assert load_features(man)["a"].J == 2


def test_concat_feature_sets():
    rng = Rng(0)
    a = {k: FrameFeatureSequence(k, rng.normal((J, 3))) for k, J in [("x", 2), ("y", 4)]}
    b = {k: FrameFeatureSequence(k, rng.normal((a[k].J, 2))) for k in a}
    out = concat_feature_sets(a, b)
    for k in a:
        assert out[k].d == 5
        for j in range(a[k].J):
            assert out[k].frames[j].tolist() == a[k].frames[j].tolist() + b[k].frames[j].tolist()
    with pytest.raises(DataError):
        concat_feature_sets(a, {"x": b["x"]})
    with pytest.raises(DataError):
        concat_feature_sets(a, {"x": b["x"], "y": FrameFeatureSequence("y", np.ones((1, 2)))})
    with pytest.raises(ValueError):
        FrameFeatureSequence("z", np.ones((2, 0)))


def test_toy_dataset(tmp_path):
    feats, pairs = make_toy_dataset(Rng(5), 10, out_dir=tmp_path / "a")
    assert len(feats) == 10 and len({v for v, _ in pairs}) == 10
    assert len({t for _, t in pairs}) == 10
    make_toy_dataset(Rng(5), 10, out_dir=tmp_path / "b")
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()
    loaded = load_features(tmp_path / "a" / "manifest.tsv")
    for vid, seq in feats.items():
        assert np.array_equal(loaded[vid].frames, seq.frames)
    vocab = build_vocab(tmp_path / "a" / "train.tsv")
    ds = load_split("train", tmp_path / "a" / "train.tsv", loaded, vocab, stride=26)
    assert len(ds) == 10
    for vid, seq, caps in ds.entries:
        assert seq.J == -(-feats[vid].J // 26)
        assert all(c[0] == BOS and c[-1] == EOS for c in caps)


def test_dataset_missing_features():
    with pytest.raises(DataError, match="v9"):
        make_dataset("train", [("v9", "a dog")], {}, Vocabulary(["a"]))


def test_dataset_groups_captions():
    seq = FrameFeatureSequence("v", np.ones((3, 2)))
    ds = make_dataset("t", [("v", "a dog"), ("v", "a cat")], {"v": seq}, Vocabulary(["a", "dog"]))
    assert len(ds) == 1 and len(ds.samples()) == 2
    assert ds.references["v"] == [["a", "dog"], ["a", "cat"]]
