import hashlib
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asrqe.model import (EncoderConfig, RankerParams, char_ngrams, featurize, forward,
                         hash_ngram, init_params, load_external_embeddings, load_model,
                         pair_probability, save_model, score, score_many, zero_params)
from oracles import logistic

SMALL = EncoderConfig(hash_dim=64, embed_dim=4, hidden_dim=3, dropout=0.0, seed=5)
phrases = st.text(alphabet="abc xyz.,", max_size=20)


def test_hash_is_blake2b_little_endian():
    digest = hashlib.blake2b(b"ab", digest_size=8).digest()
    assert hash_ngram("ab", 2**18) == int.from_bytes(digest, "little") % 2**18
    # frozen indices; a change here breaks every saved model
    assert [hash_ngram(g, 2**18) for g in ("^a", "ab", "b$")] == [66803, 86542, 164659]


def test_featurize_examples():
    cfg = EncoderConfig(ngram_orders=(2,), hash_dim=2**18)
    assert char_ngrams("ab", (2,)) == ["^a", "ab", "b$"]
    feats = featurize("ab", cfg)
    assert len(feats) == 3 and sum(feats.values()) == 3
    assert featurize("", cfg) == {}
    assert featurize("?!", cfg) == {}
    assert featurize("Ab!", cfg) == feats


@given(phrases)
def test_featurize_indices_in_range(text):
    feats = featurize(text, SMALL)
    assert all(0 <= i < SMALL.hash_dim and c >= 1 for i, c in feats.items())
    assert feats == featurize(text, SMALL)


def test_config_validation():
    for bad in (dict(hash_dim=100), dict(dropout=1.0), dict(embed_dim=0),
                dict(activation="gelu"), dict(pooling="max"), dict(ngram_orders=())):
        with pytest.raises(ValueError):
            EncoderConfig(**bad)
    assert EncoderConfig.from_json(SMALL.to_json()) == SMALL


def test_defaults():
    cfg = EncoderConfig()
    assert (cfg.ngram_orders, cfg.hash_dim, cfg.embed_dim, cfg.hidden_dim, cfg.dropout,
            cfg.activation) == ((2, 3, 4), 2**18, 256, 32, 0.10, "tanh")


def test_zero_params_score_zero():
    params = zero_params(SMALL)
    assert score("anything at all", params, SMALL) == 0.0
    assert score("", params, SMALL) == 0.0


@pytest.mark.parametrize("pooling", ["sum", "sqrt", "mean"])
@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_logit_by_hand(pooling, activation):
    cfg = EncoderConfig(hash_dim=16, embed_dim=2, hidden_dim=2, dropout=0.0,
                        activation=activation, pooling=pooling, seed=11)
    params = init_params(cfg, encoder_scale=0.5)
    params.b1[:] = [0.1, -0.2]
    params.b2 = 0.3
    text = "the cat"
    feats = featurize(text, cfg)
    total = sum(feats.values())
    scale = {"sum": 1.0, "sqrt": 1 / math.sqrt(total), "mean": 1 / total}[pooling]
    emb = [sum(c * scale * params.encoder[i, k] for i, c in feats.items()) for k in range(2)]
    act = math.tanh if activation == "tanh" else (lambda v: max(v, 0.0))
    hid = [act(emb[0] * params.w1[0, j] + emb[1] * params.w1[1, j] + params.b1[j])
           for j in range(2)]
    expected = hid[0] * params.w2[0, 0] + hid[1] * params.w2[1, 0] + params.b2
    assert score(text, params, cfg) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_pair_probability_examples():
    assert pair_probability(2.0, 2.0) == 0.5
    assert pair_probability(1.0, -1.0) == pytest.approx(0.880797, abs=1e-6)
    assert pair_probability(1.0, -1.0) == pytest.approx(logistic(2.0), rel=1e-15)
    assert pair_probability(800.0, 0.0) == 1.0
    assert pair_probability(-800.0, 0.0) == 0.0


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_pair_probability_complement(a, b):
    assert abs(pair_probability(a, b) + pair_probability(b, a) - 1) < 1e-12


@given(st.lists(phrases, min_size=2, max_size=8), st.floats(-5, 5))
def test_bias_shift_moves_logits_only(texts, c):
    params = init_params(SMALL, encoder_scale=0.3)
    base = score_many(texts, params, SMALL)
    shifted = params.copy()
    shifted.b2 += c
    moved = score_many(texts, shifted, SMALL)
    assert np.allclose(moved - base, c, atol=1e-12, rtol=0)
    for i in range(len(texts) - 1):
        p0 = pair_probability(base[i], base[i + 1])
        p1 = pair_probability(moved[i], moved[i + 1])
        assert abs(p0 - p1) < 1e-12


@given(st.lists(phrases, min_size=1, max_size=8), st.floats(0.01, 10), st.floats(-10, 10))
def test_argmax_invariant_under_increasing_affine(texts, slope, shift):
    logits = score_many(texts, init_params(SMALL, encoder_scale=0.3), SMALL)
    assert np.argmax(logits) == np.argmax(slope * logits + shift)


def test_eval_mode_is_pure():
    params = init_params(SMALL, encoder_scale=0.3)
    first = score("a quiet river", params, SMALL)
    assert all(score("a quiet river", params, SMALL) == first for _ in range(5))


def test_train_mode_dropout_is_seeded_and_inverted():
    cfg = EncoderConfig(hash_dim=64, embed_dim=4, hidden_dim=3, dropout=0.5, seed=1)
    params = init_params(cfg, encoder_scale=0.3)
    texts = ["one two", "three"]
    a = forward(texts, params, cfg, True, np.random.default_rng(7))
    b = forward(texts, params, cfg, True, np.random.default_rng(7))
    assert np.array_equal(a.logits, b.logits)
    assert set(np.unique(a.mask)) <= {0.0, 2.0}
    with pytest.raises(ValueError):
        forward(texts, params, cfg, True, None)
    # eval mode ignores dropout
    assert forward(texts, params, cfg).mask is None


def test_non_finite_logit_is_diagnosed():
    params = init_params(SMALL)
    params.b2 = float("nan")
    with pytest.raises(FloatingPointError, match="non-finite logit"):
        score("x", params, SMALL)


def test_params_check_shapes():
    params = init_params(SMALL)
    params.check(SMALL)
    with pytest.raises(ValueError):
        params.check(EncoderConfig(hash_dim=64, embed_dim=5, hidden_dim=3))


def test_model_round_trip(tmp_path):
    params = init_params(SMALL, encoder_scale=0.2)
    params.b2 = -0.75
    save_model(tmp_path / "m.bin", params, SMALL)
    loaded, cfg = load_model(tmp_path / "m.bin")
    assert cfg == SMALL
    for name in RankerParams.TENSORS:
        assert np.array_equal(getattr(loaded, name), getattr(params, name))
    assert loaded.b2 == -0.75
    save_model(tmp_path / "m2.bin", loaded, cfg)
    assert (tmp_path / "m.bin").read_bytes() == (tmp_path / "m2.bin").read_bytes()


def write_vectors(path, rows):
    path.write_text("".join(json.dumps({"text": t, "vec": v}) + "\n" for t, v in rows))


def test_external_embeddings(tmp_path):
    path = tmp_path / "vec.jsonl"
    write_vectors(path, [("hello", [0, 0]), ("bye", [1.0, -1.0])])
    table = load_external_embeddings(path, 2)
    assert table["hello"].tolist() == [0.0, 0.0]
    cfg = EncoderConfig(hash_dim=16, embed_dim=2, hidden_dim=2, dropout=0.0,
                        embeddings_path=str(path))
    params = init_params(cfg)
    assert params.encoder.shape == (0, 2)
    expected = float(np.tanh(params.b1) @ params.w2[:, 0] + params.b2)
    assert score("hello", params, cfg) == pytest.approx(expected, abs=1e-15)
    with pytest.raises(KeyError, match="missing text"):
        score("missing text", params, cfg)
    save_model(tmp_path / "m.bin", params, cfg)
    loaded, _ = load_model(tmp_path / "m.bin")
    assert score("bye", loaded, cfg) == score("bye", params, cfg)


def test_external_embedding_dimension_mismatch(tmp_path):
    path = tmp_path / "vec.jsonl"
    write_vectors(path, [("a", [1, 2, 3])])
    with pytest.raises(ValueError, match="dimension"):
        load_external_embeddings(path, 2)
