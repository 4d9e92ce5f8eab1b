"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs at decoder-sized shapes, then a full forward/backward
training step on a toy batch. Times are the best of ``--repeat`` runs.
"""
import argparse
import timeit

import numpy as np

from bivicap import kernels
from bivicap.model import ModelDims, init_model
from bivicap.numerics import Rng
from bivicap.training import forward_backward, make_batch
from bivicap.encoder import FrameFeatureSequence


def kernel_cases(rng, B=64, D=256, J=12, A=256, W=528):
    pre = rng.normal((B, 4 * D))
    c_prev, h_prev = rng.normal((B, D)), rng.normal((B, D))
    mask = np.ones(B)
    acts, c, _ = kernels.lstm_forward(pre, c_prev, h_prev, mask, False)
    dh, dc = rng.normal((B, D)), rng.normal((B, D))
    P, q, w = rng.normal((B, J, A)), rng.normal((B, A)), rng.normal(A)
    fmask, enc = np.ones((B, J)), rng.normal((B, J, W))
    T, alpha, _ = kernels.attention_forward(P, q, w, fmask, enc)
    dz = rng.normal((B, W))
    logits = rng.normal((B, 2000))
    return {
        "lstm_forward": lambda: kernels.lstm_forward(pre, c_prev, h_prev, mask, False),
        "lstm_backward": lambda: kernels.lstm_backward(acts, c_prev, c, dh, dc, mask, False),
        "attention_forward": lambda: kernels.attention_forward(P, q, w, fmask, enc),
        "attention_backward": lambda: kernels.attention_backward(T, alpha, w, enc, dz),
        "log_softmax": lambda: kernels.log_softmax(logits),
    }


def training_step(rng):
    dims = ModelDims(d=1024, D=64, H=128, m=64, V=500)
    model = init_model(dims, rng)
    videos = [FrameFeatureSequence(f"v{i}", rng.normal((int(rng.integers(5, 12)), 1024))) for i in range(32)]
    caps = [[1] + [int(t) for t in rng.integers(4, 499, int(rng.integers(5, 12)))] + [2] for _ in range(32)]
    batch = make_batch(videos, caps)
    return lambda: forward_backward(model, batch)


def _number(fn):
    return max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-6)))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the python backend is available")
    # kernels resolve through the module at call time, so one set of closures serves both backends
    cases = kernel_cases(Rng(0))
    cases["training step (B=32)"] = training_step(Rng(1))
    rows = {}
    for label, fn in cases.items():
        number = _number(fn)
        best = {b: float("inf") for b in backends}
        # alternate backends so drift in machine load hits both equally
        for _ in range(args.repeat):
            for name in backends:
                kernels.set_backend(name)
                best[name] = min(best[name], timeit.timeit(fn, number=number) / number)
        rows[label] = best
    kernels.set_backend("auto")
    header = f"{'kernel':<22}" + "".join(f"{b:>14}" for b in backends) + ("     speedup" if len(backends) > 1 else "")
    print(header)
    for label, times in rows.items():
        line = f"{label:<22}" + "".join(f"{times[b] * 1e6:>12.1f}us" for b in backends)
        if len(backends) > 1:
            line += f"{times['python'] / times['compiled']:>11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
