import numpy as np
import pytest

from bivicap import kernels
from bivicap.encoder import FrameFeatureSequence
from bivicap.model import ModelDims, init_model
from bivicap.numerics import Rng


def random_model(seed, noise=0.5, **dims):
    """Initialized model with every tensor (biases included) perturbed."""
    base = dict(d=6, D=4, H=5, m=4, A=5, V=9)
    base.update(dims)
    rng = Rng(seed)
    model = init_model(ModelDims(**base), rng)
    for arr in model.params.values():
        arr += rng.normal(arr.shape, noise)
    return model


def random_video(rng, J, d, vid="v"):
    return FrameFeatureSequence(vid, rng.normal((J, d)))


def random_caption(rng, V, n_words):
    return [1] + [int(t) for t in rng.integers(3, V - 1, n_words)] + [2]


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    prev = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


@pytest.fixture
def rng():
    return Rng(1234)


# one summary line per acceptance criterion, printed after the run
_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        name = report.nodeid.split("::")[-1][len("test_criterion_"):]
        detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
        prev = _criteria.get(name)
        if prev is None or prev[0] == "PASS":
            _criteria[name] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda n: int(n.split("_")[0])):
        status, detail = _criteria[name]
        num, _, label = name.partition("_")
        terminalreporter.write_line(f"criterion {num} ({label.replace('_', ' ')}): {status}  {detail}".rstrip())
