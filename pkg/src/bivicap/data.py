"""Vocabulary, caption and feature files, dataset splits and toy data.

File formats
------------
Captions: UTF-8 TSV, ``video_id<TAB>caption text``, one caption per line;
a video id repeats once per caption.

Feature manifest: ``video_id<TAB>relative/path.vdfq`` per line. Relative
paths resolve against ``$BIVICAP_DATA_DIR`` when set, else against the
manifest's own directory.

Feature file: magic ``VDFQ``, u32 version (1), u32 J, u32 d, then J*d
float32 values, little endian, row-major.
"""
import os
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import FrameFeatureSequence, subsample
from .metrics import tokenize

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")

FEATURE_MAGIC = b"VDFQ"
FEATURE_VERSION = 1
DATA_DIR_ENV = "BIVICAP_DATA_DIR"

TOY_CAPTIONS = (
    "a man is playing a guitar",
    "a woman is slicing an onion",
    "a dog is running in the grass",
    "a cat is playing with a ball",
    "two men are fighting in a ring",
    "a girl is riding a horse",
    "a man is driving a red car",
    "a woman is dancing on a stage",
    "a boy is swimming in a pool",
    "a chef is cooking some food",
)


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class FeatureFormatError(DataError):
    pass


class Vocabulary:
    """Token <-> id map; ids 0-3 are the special tokens."""

    def __init__(self, words=()):
        self._id_to_token = list(SPECIALS)
        for w in words:
            if w in SPECIALS:
                raise DataError(f"token {w!r} collides with a reserved special token")
            self._id_to_token.append(w)
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise DataError("duplicate tokens in vocabulary")

    @classmethod
    def from_tokens(cls, tokens):
        if list(tokens[: len(SPECIALS)]) != list(SPECIALS):
            raise DataError("vocabulary token list must start with the special tokens")
        return cls(tokens[len(SPECIALS):])

    @classmethod
    def build(cls, texts, min_count=1):
        counts = Counter(tok for text in texts for tok in tokenize(text))
        kept = sorted((w for w, n in counts.items() if n >= min_count), key=lambda w: (-counts[w], w))
        return cls(kept)

    def __len__(self):
        return len(self._id_to_token)

    def __contains__(self, token):
        return token in self._token_to_id

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._id_to_token == other._id_to_token

    def tokens(self):
        return list(self._id_to_token)

    def id(self, token):
        return self._token_to_id.get(token, UNK)

    def token(self, idx):
        return self._id_to_token[idx]

    def encode(self, text):
        """BOS + ids + EOS; accepts raw text or an already tokenized list."""
        toks = tokenize(text) if isinstance(text, str) else text
        return [BOS] + [self.id(t) for t in toks] + [EOS]

    def decode(self, ids):
        """Word tokens of ``ids``; pad/bos/eos are dropped, unk is kept as ``<unk>``."""
        return [self._id_to_token[i] for i in ids if i not in (PAD, BOS, EOS)]

    def detokenize(self, ids):
        return " ".join(self.decode(ids))


def read_captions(path):
    """List of ``(video_id, text)`` pairs in file order."""
    path = Path(path)
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            vid, sep, text = line.partition("\t")
            if not sep or not vid:
                raise DataError(f"{path}:{lineno}: expected 'video_id<TAB>caption'")
            pairs.append((vid, text))
    return pairs


def build_vocab(caption_file, min_count=1):
    pairs = read_captions(caption_file)
    if not pairs:
        raise DataError(f"{caption_file}: no captions")
    return Vocabulary.build((text for _, text in pairs), min_count)


# -- feature files ---------------------------------------------------------

def write_features(path, frames):
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise FeatureFormatError(f"{path}: frames must be a non-empty J x d matrix, got {frames.shape}")
    J, d = frames.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<III", FEATURE_VERSION, J, d))
        fh.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_features(path, video_id=None):
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise FeatureFormatError(f"{path}: cannot read feature file ({exc.strerror})") from None
    if buf[:4] != FEATURE_MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {buf[:4]!r}, expected {FEATURE_MAGIC!r}")
    if len(buf) < 16:
        raise FeatureFormatError(f"{path}: truncated header")
    version, J, d = struct.unpack_from("<III", buf, 4)
    if version != FEATURE_VERSION:
        raise FeatureFormatError(f"{path}: unsupported version {version}")
    if J == 0 or d == 0:
        raise FeatureFormatError(f"{path}: empty feature matrix (J={J}, d={d})")
    if len(buf) != 16 + 4 * J * d:
        raise FeatureFormatError(f"{path}: payload is {len(buf) - 16} bytes, header promises {4 * J * d}")
    frames = np.frombuffer(buf, dtype="<f4", offset=16).reshape(J, d).astype(np.float64)
    if not np.all(np.isfinite(frames)):
        raise FeatureFormatError(f"{path}: non-finite feature values")
    return FrameFeatureSequence(video_id if video_id is not None else path.stem, frames)


def _resolve(manifest_path, rel, data_dir=None):
    rel = Path(rel)
    if rel.is_absolute():
        return rel
    root = data_dir or os.environ.get(DATA_DIR_ENV) or manifest_path.parent
    return Path(root) / rel


def read_manifest(manifest_path):
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DataError(f"feature manifest not found: {manifest_path}")
    entries = []
    with open(manifest_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vid, sep, rel = line.partition("\t")
            if not sep:
                raise DataError(f"{manifest_path}:{lineno}: expected 'video_id<TAB>path'")
            entries.append((vid, rel))
    return entries


def load_features(manifest_path, data_dir=None):
    """Map video_id -> :class:`FrameFeatureSequence` for every manifest line."""
    manifest_path = Path(manifest_path)
    out = {}
    d = None
    for vid, rel in read_manifest(manifest_path):
        path = _resolve(manifest_path, rel, data_dir)
        seq = read_features(path, vid)
        if d is None:
            d = seq.d
        elif seq.d != d:
            raise FeatureFormatError(f"{path}: feature dimension {seq.d} differs from {d} used by earlier files")
        out[vid] = seq
    if not out:
        raise DataError(f"{manifest_path}: manifest lists no feature files")
    return out


def concat_feature_sets(a, b):
    """Per-frame concatenation of two feature maps over the same videos."""
    if set(a) != set(b):
        diff = sorted(set(a) ^ set(b))
        raise DataError(f"feature sets cover different videos: {diff}")
    out = {}
    for vid in a:
        if a[vid].J != b[vid].J:
            raise DataError(f"video {vid!r}: frame counts differ ({a[vid].J} vs {b[vid].J})")
        out[vid] = FrameFeatureSequence(vid, np.concatenate([a[vid].frames, b[vid].frames], axis=1))
    return out


# -- datasets ---------------------------------------------------------------

@dataclass
class Dataset:
    name: str
    entries: list = field(default_factory=list)  # (video_id, FrameFeatureSequence, [caption ids])
    references: dict = field(default_factory=dict)  # video_id -> [token lists]
    vocab: Vocabulary = None

    def samples(self):
        """One (video, caption ids) pair per caption."""
        return [(seq, cap) for _, seq, caps in self.entries for cap in caps]

    def __len__(self):
        return len(self.entries)


def make_dataset(name, pairs, features, vocab, stride=1):
    """Group caption ``pairs`` by video and attach (subsampled) features."""
    grouped = {}
    for vid, text in pairs:
        grouped.setdefault(vid, []).append(text)
    missing = sorted(v for v in grouped if v not in features)
    if missing:
        raise DataError(f"split {name!r}: videos without features: {missing}")
    ds = Dataset(name, vocab=vocab)
    for vid, texts in grouped.items():
        seq = subsample(features[vid], stride)
        ds.entries.append((vid, seq, [vocab.encode(t) for t in texts]))
        ds.references[vid] = [tokenize(t) for t in texts]
    return ds


def load_split(name, caption_file, features, vocab, stride=1):
    caption_file = Path(caption_file)
    if not caption_file.is_file():
        raise DataError(f"caption file not found: {caption_file}")
    pairs = read_captions(caption_file)
    if not pairs:
        raise DataError(f"{caption_file}: no captions")
    return make_dataset(name, pairs, features, vocab, stride)


def make_toy_dataset(rng, n_videos=10, J_range=(30, 150), d=16, caption_pool=TOY_CAPTIONS, out_dir=None):
    """Random Gaussian features with captions dealt round-robin from ``caption_pool``.

    Returns ``(features, caption_pairs)``. With ``out_dir`` also writes
    ``features/``, ``manifest.tsv`` and ``{train,val,test}.tsv`` (the same
    captions in each split).
    """
    if n_videos < 1:
        raise ValueError("n_videos must be >= 1")
    features = {}
    pairs = []
    width = len(str(n_videos - 1))
    for k in range(n_videos):
        vid = f"vid{k:0{width}d}"
        J = int(rng.integers(J_range[0], J_range[1]))
        frames = rng.normal((J, d)).astype(np.float32).astype(np.float64)
        features[vid] = FrameFeatureSequence(vid, frames)
        pairs.append((vid, caption_pool[k % len(caption_pool)]))
    if out_dir is not None:
        out = Path(out_dir)
        (out / "features").mkdir(parents=True, exist_ok=True)
        with open(out / "manifest.tsv", "w", encoding="utf-8") as man:
            for vid, seq in features.items():
                write_features(out / "features" / f"{vid}.vdfq", seq.frames)
                man.write(f"{vid}\tfeatures/{vid}.vdfq\n")
        for split in ("train", "val", "test"):
            with open(out / f"{split}.tsv", "w", encoding="utf-8") as fh:
                fh.writelines(f"{vid}\t{text}\n" for vid, text in pairs)
    return features, pairs
