import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazeaeg.dataset import Essay
from gazeaeg.gaze import ATTRIBUTES
from gazeaeg.model import (
    ConfigError,
    InferenceError,
    ModelConfig,
    Prediction,
    as_tensors,
    collate,
    combine_components,
    forward,
    forward_batch,
    init_params,
    load_params,
    multitask_loss,
    predict_units,
    save_params,
)
from gazeaeg.numcore import Tape, Tensor
from gazeaeg.selftest import GRAD_TOL, network_check
from gazeaeg.textprep import build_vocab, encode_essay, random_embeddings

SMALL = ModelConfig(embed_dim=8, cnn_kernel=3, cnn_filters=6, lstm_hidden=5, attention_dim=4)


@pytest.fixture(scope="module")
def setup(small_corpus):
    vocab = build_vocab(small_corpus, 1)
    enc = [encode_essay(e, vocab, max_sentences=10, max_tokens=20) for e in small_corpus[:6]]
    params = init_params(SMALL, random_embeddings(vocab, 8, 0), seed=0)
    return vocab, enc, params


def test_init_contract(setup):
    vocab, _, params = setup
    again = init_params(SMALL, random_embeddings(vocab, 8, 0), seed=0)
    assert all(np.array_equal(params[k], again[k]) for k in params)
    assert (params["lstm_b"][5:10] == 1.0).all() and not params["lstm_b"][:5].any()
    assert not params["embedding"][0].any()
    with pytest.raises(ConfigError):
        init_params(SMALL, np.zeros((4, 7)), 0)


def test_config_errors():
    with pytest.raises(ConfigError):
        ModelConfig(word_pooling="max")
    with pytest.raises(ConfigError):
        ModelConfig(cnn_kernel=4)
    with pytest.raises(ConfigError):
        ModelConfig(gaze_loss_weights={"DT": 0.05}).gaze_weight_vector()


def test_forward_examples():
    vocab = build_vocab([Essay(1, 1, "a b c. d e f g. h", 5)], 1)
    params = init_params(SMALL, random_embeddings(vocab, 8, 1), 1)
    enc = encode_essay(Essay(1, 1, "a b c. d e f g. h", 5), vocab, max_sentences=3, max_tokens=10)
    out = forward(params, enc, SMALL)
    assert 0.0 < out.score_unit < 1.0
    assert out.gaze_preds.shape == (5, 3, 10)
    again = forward(params, enc, SMALL)
    assert out.score_unit == again.score_unit
    np.testing.assert_array_equal(out.gaze_preds, again.gaze_preds)


def test_empty_essay_rejected(setup):
    _, enc, params = setup
    blank = dataclasses.replace(enc[0], sentence_mask=np.zeros_like(enc[0].sentence_mask))
    with pytest.raises(InferenceError):
        forward(params, blank, SMALL)


def test_trimmed_batch_matches_single_essays(setup):
    _, enc, params = setup
    batched = predict_units(params, enc, SMALL)
    single = [forward(params, e, SMALL).score_unit for e in enc]
    np.testing.assert_allclose(batched, single, atol=1e-12)


def test_mean_pooling_variant(setup):
    _, enc, params = setup
    mean_cfg = dataclasses.replace(SMALL, word_pooling="mean")
    units = predict_units(params, enc, mean_cfg)
    assert ((units > 0) & (units < 1)).all()
    assert not np.array_equal(units, predict_units(params, enc, SMALL))


def _forced_prediction(score_mse, gaze_mses, shape=(2, 3)):
    # one essay, every gaze cell off by sqrt(mse) for its attribute
    S, T = shape
    score = Tensor(np.array([0.5]))
    gaze = Tensor(np.full((1, S, T, 5), 0.5))
    from gazeaeg.model import Batch

    targets = np.full((1, S, T, 5), 0.5) + np.sqrt(np.asarray(gaze_mses))
    batch = Batch([1], [1], np.ones((1, S, T), dtype=int), np.ones((1, S, T), bool), np.ones((1, S), bool),
                  np.array([0.5 + np.sqrt(score_mse)]), targets, np.ones((1, S, T), bool))
    return Prediction(score, gaze, None, np.ones((1, S)) / S), batch


def test_loss_composition_example():
    cfg = ModelConfig(gaze_enabled=True)
    pred, batch = _forced_prediction(0.04, [0.1] * 5)
    loss, comps = multitask_loss(pred, batch, cfg)
    assert abs(float(loss.data) - 0.062) < 1e-12
    assert abs(combine_components(comps, cfg) - 0.062) < 1e-12
    assert set(comps) == {"score", *(a.value for a in ATTRIBUTES)}


@given(st.floats(0, 0.25), st.lists(st.floats(0, 0.25), min_size=5, max_size=5))
def test_loss_composition_weights(score_mse, gaze_mses):
    cfg = ModelConfig(gaze_enabled=True)
    pred, batch = _forced_prediction(score_mse, gaze_mses)
    loss, comps = multitask_loss(pred, batch, cfg)
    expect = comps["score"] + 0.05 * comps["DT"] + 0.05 * comps["FFD"] + 0.01 * comps["IR"] \
        + 0.01 * comps["RC"] + 0.1 * comps["Skip"]
    assert abs(float(loss.data) - expect) < 1e-12
    assert abs(comps["score"] - score_mse) < 1e-12


def test_perfect_prediction_zero_loss():
    pred, batch = _forced_prediction(0.0, [0.0] * 5)
    assert float(multitask_loss(pred, batch, ModelConfig(gaze_enabled=True))[0].data) == 0.0


def test_gaze_disabled_is_score_mse(setup):
    _, enc, params = setup
    batch = collate(enc)
    rng = lambda: np.random.default_rng(5)  # noqa: E731
    with_heads = forward_batch(as_tensors(params), batch, SMALL, train=True, rng=rng())
    loss, comps = multitask_loss(with_heads, batch, SMALL)
    assert float(loss.data) == comps["score"]
    no_heads = {k: v for k, v in params.items() if not k.startswith("gaze_")}
    bare = forward_batch(as_tensors(no_heads), batch, SMALL, train=True, rng=rng())
    assert abs(float(multitask_loss(bare, batch, SMALL)[0].data) - float(loss.data)) <= 1e-12
    with pytest.raises(ConfigError):
        multitask_loss(bare, batch, dataclasses.replace(SMALL, gaze_enabled=True))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_padding_contents_do_not_matter(seed):
    vocab = build_vocab([Essay(1, 1, "a b c. d e f g. h", 5)], 1)
    params = init_params(SMALL, random_embeddings(vocab, 8, 2), 2)
    enc = encode_essay(Essay(1, 1, "a b c. d e f g. h", 5), vocab, max_sentences=5, max_tokens=6)
    ref = forward(params, enc, SMALL).score_unit
    rng = np.random.default_rng(seed)
    grid = enc.grid.copy()
    grid[~enc.token_mask] = rng.integers(0, len(vocab), size=(~enc.token_mask).sum())
    noisy = dataclasses.replace(enc, grid=grid)
    assert forward(params, noisy, SMALL).score_unit == pytest.approx(ref, abs=1e-12)


def test_gaze_heads_get_no_gradient_without_labels(setup):
    _, enc, params = setup
    cfg = dataclasses.replace(SMALL, gaze_enabled=True)
    tensors = as_tensors(params)
    batch = collate(enc)
    assert not batch.gaze_mask.any()
    with Tape() as tape:
        loss, _ = multitask_loss(forward_batch(tensors, batch, cfg, train=True, rng=np.random.default_rng(0)),
                                 batch, cfg)
    grads = tape.backward(loss, tensors)
    assert not grads["gaze_w"].any() and not grads["gaze_b"].any()
    assert grads["conv_w"].any()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_full_network_grad_check(seed):
    errors = network_check(seed)
    assert max(errors.values()) <= GRAD_TOL, errors


def test_checkpoint_round_trip(tmp_path, setup):
    _, _, params = setup
    path = tmp_path / "params.json"
    save_params(params, path)
    loaded = load_params(path)
    assert loaded.keys() == params.keys()
    assert all(np.array_equal(loaded[k], params[k]) for k in params)
