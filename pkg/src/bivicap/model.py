"""Model dimensions, the named parameter collection, and checkpoint files.

Parameter naming (gate blocks stacked in the order input, forget, output,
candidate)::

    enc_fwd.W (4D, d)   enc_fwd.U (4D, D)   enc_fwd.b (4D,)
    enc_bwd.W (4D, d)   enc_bwd.U (4D, D)   enc_bwd.b (4D,)
    dec.W (4H, m)  dec.U (4H, H)  dec.A (4H, Dw)  dec.b (4H,)
    att.W_a (A, H)  att.U_a (A, Dw)  att.b_a (A,)  att.w (A,)
    emb.E (m, V)
    out.W_p (R, H + Dw + m)  out.b_p (R,)  out.U_p (V, R)  out.d (V,)
    init.h (H, Dw)  init.c (H, Dw)      # only with decoder_init="learned"

where ``Dw = d + 2D`` is the width of an encoded frame.
"""
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .numerics import ShapeError, init_matrix

CELL_VARIANTS = ("linear", "standard")
DECODER_INITS = ("learned", "zero")

CHECKPOINT_MAGIC = b"BVCK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelDims:
    d: int
    D: int
    H: int
    m: int
    V: int
    A: int = 0
    R: int = 0
    cell_variant: str = "linear"
    decoder_init: str = "learned"

    def __post_init__(self):
        # attention and readout widths default to H and m
        if not self.A:
            object.__setattr__(self, "A", self.H)
        if not self.R:
            object.__setattr__(self, "R", self.m)
        for name in ("d", "D", "H", "m", "V", "A", "R"):
            if getattr(self, name) < 1:
                raise ValueError(f"model dimension {name} must be >= 1, got {getattr(self, name)}")
        if self.cell_variant not in CELL_VARIANTS:
            raise ValueError(f"cell_variant must be one of {CELL_VARIANTS}, got {self.cell_variant!r}")
        if self.decoder_init not in DECODER_INITS:
            raise ValueError(f"decoder_init must be one of {DECODER_INITS}, got {self.decoder_init!r}")

    @property
    def width(self):
        """Width of one encoded frame vector, d + 2D."""
        return self.d + 2 * self.D

    @property
    def standard_cell(self):
        return self.cell_variant == "standard"


def param_shapes(dims):
    d, D, H, m, V, A, R, Dw = dims.d, dims.D, dims.H, dims.m, dims.V, dims.A, dims.R, dims.width
    shapes = {}
    for side in ("enc_fwd", "enc_bwd"):
        shapes[f"{side}.W"] = (4 * D, d)
        shapes[f"{side}.U"] = (4 * D, D)
        shapes[f"{side}.b"] = (4 * D,)
    shapes.update({
        "dec.W": (4 * H, m),
        "dec.U": (4 * H, H),
        "dec.A": (4 * H, Dw),
        "dec.b": (4 * H,),
        "att.W_a": (A, H),
        "att.U_a": (A, Dw),
        "att.b_a": (A,),
        "att.w": (A,),
        "emb.E": (m, V),
        "out.W_p": (R, H + Dw + m),
        "out.b_p": (R,),
        "out.U_p": (V, R),
        "out.d": (V,),
    })
    if dims.decoder_init == "learned":
        shapes["init.h"] = (H, Dw)
        shapes["init.c"] = (H, Dw)
    return shapes


@dataclass
class Model:
    """Trainable tensors plus everything needed to use them.

    ``vocab`` is a :class:`bivicap.data.Vocabulary` or ``None`` for bare
    numerical models built in tests.
    """

    dims: ModelDims
    params: dict
    vocab: object = None
    stride: int = 26
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = param_shapes(self.dims)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ShapeError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            arr = self.params[name]
            if arr.shape != shape:
                raise ShapeError(f"parameter {name} has shape {arr.shape}, expected {shape}")
        if self.vocab is not None and len(self.vocab) != self.dims.V:
            raise ShapeError(f"vocabulary size {len(self.vocab)} != model V={self.dims.V}")

    def copy(self):
        return Model(self.dims, {k: v.copy() for k, v in self.params.items()},
                     self.vocab, self.stride, dict(self.meta))

    def names(self):
        return list(param_shapes(self.dims))

    def num_parameters(self):
        return sum(a.size for a in self.params.values())


def init_model(dims, rng, vocab=None, stride=26, scheme="uniform_scaled"):
    """Random weights (fan-scaled uniform) and zero biases."""
    params = {}
    for name, shape in param_shapes(dims).items():
        if len(shape) == 1 and name != "att.w":
            params[name] = np.zeros(shape)
        elif scheme == "zeros":
            params[name] = np.zeros(shape)
        else:
            params[name] = init_matrix(rng, *shape, scheme=scheme)
    return Model(dims, params, vocab, stride)


def zero_model(dims, vocab=None):
    return Model(dims, {k: np.zeros(s) for k, s in param_shapes(dims).items()}, vocab)


# -- checkpoint container --------------------------------------------------

def write_checkpoint(path, model, extra_meta=None):
    """Serialize ``model`` to the BVCK binary container.

    Layout: magic, u32 version, u32 tensor count, then per tensor
    ``u32 name_len, name, u32 rank, u32 dims[rank], f64 data`` (little
    endian, row-major) and finally a u32-length-prefixed UTF-8 JSON block.
    """
    names = model.names()
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(names))]
    for name in names:
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    meta = dict(model.meta)
    meta.update(extra_meta or {})
    meta["dims"] = asdict(model.dims)
    meta["stride"] = model.stride
    meta["cell_variant"] = model.dims.cell_variant
    meta["vocab"] = model.vocab.tokens() if model.vocab is not None else None
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(blob)) + blob)
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_checkpoint(path):
    from .data import Vocabulary

    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {buf[:4]!r})")
    try:
        version, count = struct.unpack_from("<II", buf, 4)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        params = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            n = int(np.prod(shape)) if rank else 1
            params[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * n
        (mlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        meta = json.loads(buf[pos : pos + mlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from None
    dims = ModelDims(**meta.pop("dims"))
    tokens = meta.pop("vocab")
    stride = meta.pop("stride")
    meta.pop("cell_variant", None)
    vocab = Vocabulary.from_tokens(tokens) if tokens is not None else None
    return Model(dims, params, vocab, stride, meta)
