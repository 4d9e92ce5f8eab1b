"""Dense float64 matrix primitives and seeded initialization.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64; vectors
are 1-D arrays. The helpers here only add the shape checking and numerically
safe formulations the model relies on.
"""
import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


def as_matrix(data, rows=None, cols=None):
    """Build a float64 matrix, optionally from a flat row-major buffer."""
    a = np.asarray(data, dtype=np.float64)
    if rows is not None:
        if a.size != rows * cols:
            raise ShapeError(f"buffer of length {a.size} cannot fill a {rows}x{cols} matrix")
        a = a.reshape(rows, cols)
    return np.ascontiguousarray(a)


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


_ELEMENTWISE = {"add": np.add, "sub": np.subtract, "hadamard": np.multiply}


def elementwise(op, a, b):
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"{op} shape mismatch: {a.shape} vs {b.shape}")
    return fn(a, b)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # exp of a non-positive argument only, so large |x| saturates cleanly
    ex = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def activate(kind, a):
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "tanh":
        return np.tanh(np.asarray(a, dtype=np.float64))
    raise ValueError(f"unknown activation {kind!r}; expected 'sigmoid' or 'tanh'")


def softmax(x):
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(x - x.max())
    return e / e.sum()


def log_softmax(x):
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("log_softmax of an empty vector")
    s = x - x.max()
    return s - np.log(np.exp(s).sum())


class Rng:
    """Seeded generator; the only source of randomness in the package.

    Not thread safe: give each worker its own instance via :meth:`spawn`.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low, high, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None, scale=1.0):
        return self._gen.normal(0.0, scale, size)

    def integers(self, low, high_inclusive, size=None):
        return self._gen.integers(low, high_inclusive, size=size, endpoint=True)

    def permutation(self, n):
        return self._gen.permutation(n)

    def spawn(self):
        """Independent child stream derived deterministically from this one."""
        return Rng(int(self._gen.integers(0, 2**63 - 1)))


def init_matrix(rng, rows, cols=None, scheme="uniform_scaled"):
    """Fan-scaled uniform draw in ``[-s, s]``, ``s = sqrt(6 / (rows + cols))``.

    ``cols=None`` produces a vector of length ``rows`` (fan computed as if
    ``cols == 1``). ``scheme="zeros"`` is used for biases.
    """
    shape = (rows,) if cols is None else (rows, cols)
    if rows < 1 or (cols is not None and cols < 1):
        raise ShapeError(f"matrix dimensions must be positive, got {shape}")
    if scheme == "zeros":
        return np.zeros(shape)
    if scheme != "uniform_scaled":
        raise ValueError(f"unknown init scheme {scheme!r}")
    s = np.sqrt(6.0 / (rows + (1 if cols is None else cols)))
    return rng.uniform(-s, s, shape)
