import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bivicap.decoder import AttentionParams, attend, decode_step, init_decoder_state
from bivicap.encoder import EncodedVideo
from bivicap.model import ModelDims, zero_model
from bivicap.numerics import Rng, ShapeError

from conftest import random_model


def random_att(rng, A, H, Dw, scale=1.0):
    return AttentionParams(rng.normal((A, H), scale), rng.normal((A, Dw), scale), rng.normal(A, scale),
                           rng.normal(A, scale))


def oracle_attend(att, h, W):
    """Scores, weights and context computed one frame at a time."""
    A = len(att.w)
    scores = []
    for wj in W:
        s = 0.0
        for a in range(A):
            pre = att.b_a[a] + sum(att.W_a[a][k] * h[k] for k in range(len(h)))
            pre += sum(att.U_a[a][k] * wj[k] for k in range(len(wj)))
            s += att.w[a] * math.tanh(pre)
        scores.append(s)
    top = max(scores)
    ex = [math.exp(s - top) for s in scores]
    alpha = [e / sum(ex) for e in ex]
    z = [sum(alpha[j] * W[j][k] for j in range(len(W))) for k in range(len(W[0]))]
    return alpha, z


def test_attend_single_frame(backend):
    rng = Rng(0)
    att = random_att(rng, 3, 2, 4, scale=5.0)
    w1 = rng.normal((1, 4))
    z, alpha = attend(att, rng.normal(2), EncodedVideo(w1))
    assert alpha.tolist() == [1.0]
    np.testing.assert_array_equal(z, w1[0])


def test_attend_identical_frames(backend):
    rng = Rng(1)
    att = random_att(rng, 3, 2, 4)
    W = np.tile(rng.normal(4), (5, 1))
    z, alpha = attend(att, rng.normal(2), EncodedVideo(W))
    np.testing.assert_allclose(alpha, 0.2, rtol=0, atol=1e-15)
    np.testing.assert_allclose(z, W[0], rtol=1e-14)


def test_attend_matches_oracle(backend):
    rng = Rng(2)
    att = random_att(rng, 4, 3, 5)
    W = rng.normal((3, 5))
    h = rng.normal(3)
    z, alpha = attend(att, h, EncodedVideo(W))
    a_o, z_o = oracle_attend(att, h, W)
    np.testing.assert_allclose(alpha, a_o, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(z, z_o, rtol=1e-12, atol=1e-15)


def test_attend_errors():
    rng = Rng(3)
    att = random_att(rng, 3, 2, 4)
    with pytest.raises(ValueError):
        attend(att, np.zeros(2), np.zeros((0, 4)))
    with pytest.raises(ShapeError):
        attend(att, np.zeros(3), np.zeros((2, 4)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(0, 100_000))
def test_attention_properties(J, seed):
    rng = Rng(seed)
    att = random_att(rng, 3, 2, 4, scale=3.0)
    W = rng.normal((J, 4), 2.0)
    h = rng.normal(2)
    z, alpha = attend(att, h, EncodedVideo(W))
    assert np.all(alpha >= 0) and abs(alpha.sum() - 1) <= 1e-9
    assert np.all(z >= W.min(axis=0) - 1e-12) and np.all(z <= W.max(axis=0) + 1e-12)
    perm = rng.permutation(J)
    z2, alpha2 = attend(att, h, EncodedVideo(W[perm]))
    np.testing.assert_allclose(alpha2, alpha[perm], rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(z2, z, rtol=1e-12, atol=1e-12)


def test_zero_model_uniform_logprobs(backend):
    model = zero_model(ModelDims(d=3, D=2, H=4, m=3, V=10))
    step = decode_step(model, 1, (np.zeros(4), np.zeros(4)), EncodedVideo(np.ones((2, 7))))
    np.testing.assert_allclose(step.logprobs, -math.log(10), rtol=0, atol=1e-15)


def test_logprobs_normalize_and_deterministic(backend):
    model = random_model(4, noise=2.0)
    rng = Rng(5)
    enc = EncodedVideo(rng.normal((3, model.dims.width)))
    state = (rng.normal(5), rng.normal(5))
    a = decode_step(model, 3, state, enc)
    b = decode_step(model, 3, state, enc)
    assert abs(np.exp(a.logprobs).sum() - 1) <= 1e-9
    assert abs(a.alpha.sum() - 1) <= 1e-9
    for x, y in ((a.h, b.h), (a.c, b.c), (a.alpha, b.alpha), (a.logprobs, b.logprobs)):
        assert x.tobytes() == y.tobytes()


def _sig(x):
    return 1 / (1 + math.exp(-x))


def _mv(M, v):
    return [sum(M[r][k] * v[k] for k in range(len(v))) for r in range(len(M))]


@pytest.mark.parametrize("variant", ["linear", "standard"])
def test_decode_step_matches_oracle(backend, variant):
    model = random_model(6, d=2, D=1, H=2, m=3, V=4, A=2, cell_variant=variant)
    p = {k: v.tolist() for k, v in model.params.items()}
    rng = Rng(7)
    W = rng.normal((2, model.dims.width))
    h, c = rng.normal(2), rng.normal(2)
    tok = 3
    step = decode_step(model, tok, (h, c), EncodedVideo(W))

    att = AttentionParams.from_model(model)
    alpha, z = oracle_attend(att, h, W)
    x = [p["emb.E"][r][tok] for r in range(3)]
    Wx, Uh, Az = _mv(p["dec.W"], x), _mv(p["dec.U"], h), _mv(p["dec.A"], z)
    pre = [Wx[r] + Uh[r] + Az[r] + p["dec.b"][r] for r in range(8)]
    i = [_sig(v) for v in pre[0:2]]
    f = [_sig(v) for v in pre[2:4]]
    o = [_sig(v) for v in pre[4:6]]
    g = [math.tanh(v) for v in pre[6:8]]
    c1 = [f[k] * c[k] + i[k] * g[k] for k in range(2)]
    h1 = [o[k] * (math.tanh(c1[k]) if variant == "standard" else c1[k]) for k in range(2)]
    s = h1 + z + x
    r = [math.tanh(v + b) for v, b in zip(_mv(p["out.W_p"], s), p["out.b_p"])]
    logits = [v + d for v, d in zip(_mv(p["out.U_p"], r), p["out.d"])]
    lse = math.log(sum(math.exp(v) for v in logits))
    np.testing.assert_allclose(step.alpha, alpha, rtol=1e-12)
    np.testing.assert_allclose(step.c, c1, rtol=1e-12)
    np.testing.assert_allclose(step.h, h1, rtol=1e-12)
    np.testing.assert_allclose(step.logprobs, [v - lse for v in logits], rtol=1e-12)


def test_decode_step_errors():
    model = random_model(8)
    enc = EncodedVideo(np.zeros((2, model.dims.width)))
    with pytest.raises(IndexError):
        decode_step(model, 9, (np.zeros(5), np.zeros(5)), enc)
    with pytest.raises(ShapeError):
        decode_step(model, 1, (np.zeros(4), np.zeros(5)), enc)


def test_init_state():
    model = random_model(9)
    rng = Rng(10)
    W = rng.normal((4, model.dims.width))
    h0, c0 = init_decoder_state(model, EncodedVideo(W))
    wbar = [sum(W[j][k] for j in range(4)) / 4 for k in range(W.shape[1])]
    np.testing.assert_allclose(h0, np.tanh(_mv(model.params["init.h"].tolist(), wbar)), rtol=1e-12)
    np.testing.assert_allclose(c0, np.tanh(_mv(model.params["init.c"].tolist(), wbar)), rtol=1e-12)
    h1, _ = init_decoder_state(model, EncodedVideo(W[:1]))
    np.testing.assert_allclose(h1, np.tanh(model.params["init.h"] @ W[0]), rtol=1e-13)
    model.params["init.h"][:] = 0
    model.params["init.c"][:] = 0
    h0, c0 = init_decoder_state(model, EncodedVideo(W))
    assert not h0.any() and not c0.any()


def test_zero_decoder_init():
    model = random_model(11, decoder_init="zero")
    assert "init.h" not in model.params
    h0, c0 = init_decoder_state(model, EncodedVideo(np.ones((2, model.dims.width))))
    assert not h0.any() and not c0.any()
