import math

import numpy as np
import pytest

import oracles
from puffnet.core import Rng, ShapeError, Tensor, backward, count_macs, grad_check
from puffnet.core import functional as F
from puffnet.core.patches import PatchSequence, adaptive_pool_matrix, bilinear_matrix
from puffnet.model import ModelConfig, PuffNetModel, stylize
from puffnet.stylizer import (
    Cape,
    EncoderLayer,
    attention,
    attention_cost,
    cape,
    concat_self_attention,
    encoder_layer,
    sinusoidal_pe,
)


def tokens(rng, length=16, dim=32):
    return Tensor(rng.standard_normal((1, length, dim)))


# -- resampling matrices -----------------------------------------------------------

def test_bilinear_matrix_hand_values():
    expect = [[1, 0], [0.75, 0.25], [0.25, 0.75], [0, 1]]
    np.testing.assert_allclose(bilinear_matrix(2, 4), expect)


def test_adaptive_pool_hand_values():
    expect = [[0.5, 0.5, 0, 0, 0], [0, 1 / 3, 1 / 3, 1 / 3, 0], [0, 0, 0, 0.5, 0.5]]
    np.testing.assert_allclose(adaptive_pool_matrix(5, 3), expect)


@pytest.mark.parametrize("n_in,n_out", [(4, 18), (18, 4), (7, 7), (32, 18)])
def test_resampling_rows_are_averages(n_in, n_out):
    for mat in (adaptive_pool_matrix(n_in, n_out), bilinear_matrix(n_in, n_out)):
        np.testing.assert_allclose(mat.sum(axis=1), 1.0)
        assert (mat >= 0).all()


# -- CAPE ----------------------------------------------------------------------------

def test_cape_shape(rng):
    seq = PatchSequence(tokens(rng), (4, 4))
    assert cape(seq, Cape(Rng(0), 32)).shape == (1, 16, 32)


def test_cape_preserves_constants_with_identity_mix():
    mod = Cape(Rng(0), 32)
    mod.w_mix.data[...] = np.eye(32)
    mod.b_mix.data[...] = 0
    value = np.linspace(-1, 1, 32, dtype=np.float32)
    seq = PatchSequence(Tensor(np.broadcast_to(value, (1, 16, 32))), (4, 4))
    np.testing.assert_allclose(cape(seq, mod).data, np.broadcast_to(value, (1, 16, 32)), atol=1e-6)


def test_cape_is_content_dependent(rng):
    mod = Cape(Rng(0), 32)
    a = cape(PatchSequence(tokens(rng), (4, 4)), mod).data
    b = cape(PatchSequence(tokens(rng), (4, 4)), mod).data
    assert np.abs(a - b).max() > 0


def test_cape_handles_grids_larger_than_pool():
    mod = Cape(Rng(0), 8, pool_grid=18)
    seq = PatchSequence(Tensor(np.random.default_rng(0).standard_normal((1, 32 * 24, 8))), (32, 24))
    assert cape(seq, mod).shape == (1, 768, 8)


# -- sinusoidal ------------------------------------------------------------------------

def test_sinusoidal_hand_table():
    expect = np.array([[math.sin(p), math.cos(p), math.sin(p / 100), math.cos(p / 100)] for p in range(4)])
    np.testing.assert_allclose(sinusoidal_pe(4, 4).data, expect, atol=1e-6)


def test_sinusoidal_properties():
    table = sinusoidal_pe(64, 32).data
    assert np.array_equal(table[0, 0::2], np.zeros(16)) and np.array_equal(table[0, 1::2], np.ones(16))
    assert np.abs(table).max() <= 1
    with pytest.raises(ValueError):
        sinusoidal_pe(4, 3)


# -- attention -------------------------------------------------------------------------

def test_single_style_token_gets_all_attention(rng):
    layer = EncoderLayer(Rng(1), 32, 2)
    eps_s = Tensor(rng.standard_normal((1, 1, 32)))
    weights = []
    out = attention(tokens(rng), eps_s, layer, tokens(rng), weights)
    expect = (eps_s.data[0] @ layer.wv.data) @ layer.wo.data
    np.testing.assert_allclose(out.data[0], np.broadcast_to(expect, (16, 32)), atol=1e-5)
    assert np.array_equal(weights[0], np.ones_like(weights[0]))


def test_attention_matches_oracle_and_rows_normalise(rng):
    layer = EncoderLayer(Rng(2), 32, 2)
    stream, eps_s, pos = tokens(rng), tokens(rng, 24), tokens(rng)
    weights = []
    got = attention(stream, eps_s, layer, pos, weights).data
    p = {n: t.data.astype(np.float64) for n, t in layer.named_tensors()}
    expect = oracles.mha(stream.data + pos.data, eps_s.data, p["wq"], p["wk"], p["wv"], p["wo"], 2)
    np.testing.assert_allclose(got, expect, atol=1e-4)
    np.testing.assert_allclose(weights[0].sum(-1), 1.0, atol=1e-6)


def test_attention_width_mismatch(rng):
    with pytest.raises(ShapeError):
        attention(tokens(rng), tokens(rng, 16, 16), EncoderLayer(Rng(0), 32, 2), tokens(rng))


def test_attention_mac_count(rng):
    layer = EncoderLayer(Rng(3), 32, 2)
    with count_macs() as c:
        attention(tokens(rng), tokens(rng), layer, tokens(rng))
    assert c["score"] + c["value"] == 2 * 16 * 16 * 32 == 16384
    assert c.total == attention_cost(16, 32, "cross")["total"]


# -- encoder layer -------------------------------------------------------------------------

def test_zero_weights_make_layer_identity(rng):
    layer = EncoderLayer(Rng(4), 32, 2)
    for name in ("wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2"):
        getattr(layer, name).data[...] = 0
    stream = tokens(rng)
    assert np.array_equal(encoder_layer(stream, tokens(rng), layer, tokens(rng)).data, stream.data)


def test_encoder_layer_matches_recomposition(rng):
    layer = EncoderLayer(Rng(5), 32, 2)
    stream, eps_s, pos = tokens(rng), tokens(rng), tokens(rng)
    p = {n: t.data.astype(np.float64) for n, t in layer.named_tensors()}
    h = oracles.layer_norm(stream.data, p["ln1_g"], p["ln1_b"])
    y = oracles.mha(h + pos.data, eps_s.data, p["wq"], p["wk"], p["wv"], p["wo"], 2) + stream.data
    h = oracles.layer_norm(y, p["ln2_g"], p["ln2_b"])
    expect = oracles.relu(h @ p["w1"] + p["b1"]) @ p["w2"] + p["b2"] + y
    np.testing.assert_allclose(encoder_layer(stream, eps_s, layer, pos).data, expect, atol=1e-4)


def test_three_layers_preserve_shape(rng):
    stream, eps_s, pos = tokens(rng), tokens(rng), tokens(rng)
    for i in range(3):
        stream = encoder_layer(stream, eps_s, EncoderLayer(Rng(i), 32, 2), pos)
    assert stream.shape == (1, 16, 32)


def test_encoder_layer_grad_check(rng):
    layer = EncoderLayer(Rng(6), 32, 2)
    stream, eps_s, pos = tokens(rng), tokens(rng), tokens(rng)
    target = tokens(rng)
    err = grad_check(lambda: F.mse(encoder_layer(stream, eps_s, layer, pos), target),
                     layer.parameters(), h=1e-2, n_samples=50)
    assert err < 1e-2


def test_heads_must_divide_width():
    with pytest.raises(ShapeError):
        EncoderLayer(Rng(0), 30, 4)


# -- attention cost ----------------------------------------------------------------------

def test_attention_cost_closed_forms():
    assert attention_cost(16, 32, "cross")["quadratic"] == 16384
    for length, dim in [(1, 1), (16, 32), (100, 7)]:
        cross = attention_cost(length, dim, "cross")
        concat = attention_cost(length, dim, "concat_self")
        assert concat["quadratic"] == 4 * cross["quadratic"]
        assert attention_cost(2 * length, dim, "cross")["quadratic"] == 4 * cross["quadratic"]
        assert cross["projections"] == 4 * length * dim * dim


def test_concat_self_counter_matches_formula(rng):
    layer = EncoderLayer(Rng(7), 32, 2)
    with count_macs() as c:
        concat_self_attention(tokens(rng), tokens(rng), layer)
    formula = attention_cost(16, 32, "concat_self")
    assert c["score"] + c["value"] == formula["quadratic"]
    assert c.total == formula["total"]


# -- full stylize ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def model():
    return PuffNetModel(ModelConfig())


def test_stylize_full_resolution_shape_and_range(model):
    rng = np.random.default_rng(0)
    out = stylize(Tensor(rng.random((1, 3, 256, 256))), Tensor(rng.random((1, 3, 256, 256))), model)
    assert out.shape == (1, 3, 256, 256)
    assert out.data.min() >= 0 and out.data.max() <= 1


def test_content_mode_starts_from_content_tokens(model, pair32):
    trace = {}
    stylize(*pair32, model, trace=trace)
    assert np.array_equal(trace["eps_o"], trace["eps_c"])


@pytest.mark.parametrize("mode", ["content", "style", "zero", "random"])
def test_stylize_is_deterministic_in_every_mode(mode, pair32):
    a = stylize(*pair32, PuffNetModel(ModelConfig(out_embed_mode=mode)))
    b = stylize(*pair32, PuffNetModel(ModelConfig(out_embed_mode=mode)))
    assert np.array_equal(a.data, b.data)


def test_output_embedding_modes(pair32):
    for mode, check in [("style", lambda t: np.array_equal(t["eps_o"], t["eps_s"])),
                        ("zero", lambda t: not t["eps_o"].any()),
                        ("random", lambda t: np.abs(t["eps_o"]).max() <= 0.02 and t["eps_o"].std() > 0)]:
        trace = {}
        stylize(*pair32, PuffNetModel(ModelConfig(out_embed_mode=mode)), trace=trace)
        assert check(trace), mode


def test_random_mode_without_rng_is_rejected():
    from puffnet.stylizer import initial_output_embedding
    with pytest.raises(ValueError, match="Rng"):
        initial_output_embedding("random", Tensor(np.zeros((1, 4, 8))), Tensor(np.zeros((1, 4, 8))), None)


def test_stylize_rejects_indivisible_size(model):
    with pytest.raises(ShapeError):
        stylize(Tensor(np.zeros((1, 3, 30, 32))), Tensor(np.zeros((1, 3, 32, 32))), model)


def test_sinusoidal_model_runs(pair32):
    m = PuffNetModel(ModelConfig(pe="sinusoidal"))
    assert m.stylizer.cape is None
    trace = {}
    stylize(*pair32, m, trace=trace)
    np.testing.assert_allclose(trace["positions"][0], sinusoidal_pe(16, 32).data)


def test_gradients_reach_every_stylizer_parameter(pair32):
    m = PuffNetModel(ModelConfig())
    backward(F.mse(stylize(*pair32, m), pair32[1]))
    for name, t in m.stylizer.named_tensors():
        assert t.grad is not None and np.linalg.norm(t.grad) > 0, name
