"""Hot per-time-step kernels with a compiled and a pure numpy implementation.

The compiled extension is picked at import when it was built; otherwise the
numpy fallback is used. ``BIVICAP_KERNELS`` forces a choice:

* ``auto`` (default) -- compiled if importable, else numpy
* ``compiled`` -- fail loudly if the extension is missing
* ``python`` -- always numpy

The compiled backend leaves out kernels where it cannot beat numpy
(``attention_forward`` is dominated by a vectorised tanh and BLAS products);
those fall through to the numpy version.

Call sites go through this module (``kernels.lstm_forward(...)``) so that
:func:`set_backend` takes effect everywhere.
"""
import os

from . import _fallback

try:
    from . import _compiled
except ImportError:  # extension not built
    _compiled = None

KERNEL_NAMES = (
    "lstm_forward",
    "lstm_backward",
    "attention_forward",
    "attention_backward",
    "log_softmax",
)

BACKEND = None


def available_backends():
    return ["compiled", "python"] if _compiled is not None else ["python"]


def set_backend(name):
    """Switch every kernel to ``name`` (``auto``, ``compiled`` or ``python``)."""
    global BACKEND
    if name == "auto":
        name = "compiled" if _compiled is not None else "python"
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels requested but bivicap.kernels._compiled is not built")
        impl = _compiled
    elif name == "python":
        impl = _fallback
    else:
        raise ValueError(f"unknown kernel backend {name!r}; expected auto, compiled or python")
    g = globals()
    for fn in KERNEL_NAMES:
        g[fn] = getattr(impl, fn, None) or getattr(_fallback, fn)
    BACKEND = name
    return name


set_backend(os.environ.get("BIVICAP_KERNELS", "auto"))
