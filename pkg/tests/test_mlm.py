"""Masked-token pretraining: masking statistics, step semantics, learning."""

from __future__ import annotations

import numpy as np
import pytest

from medex.errors import ConfigError
from medex.model import (
    ModelConfig,
    TrainConfig,
    build_vocab,
    init_model,
    mlm_pretrain,
    mlm_step,
)
from medex.model.network import states_equal
from medex.model.tokenizer import MASK_ID, SPECIALS
from medex.model.training import mask_tokens


class TestMaskTokens:
    def test_specials_never_masked(self):
        rng = np.random.default_rng(0)
        ids = np.tile(np.arange(len(SPECIALS)), (50, 4))
        masked, rows, cols, originals = mask_tokens(ids, 1.0, rng)
        assert rows.size == 0
        np.testing.assert_array_equal(masked, ids)
        assert originals.size == 0

    def test_rate_one_masks_every_eligible_position(self):
        rng = np.random.default_rng(0)
        ids = np.full((3, 7), 9, dtype=np.int64)
        ids[:, 0] = 2
        masked, rows, cols, originals = mask_tokens(ids, 1.0, rng)
        assert rows.size == 3 * 6
        assert (masked[:, 1:] == MASK_ID).all()
        assert (masked[:, 0] == 2).all()
        assert (originals == 9).all()

    def test_input_array_untouched(self):
        rng = np.random.default_rng(1)
        ids = np.full((4, 6), 11, dtype=np.int64)
        snapshot = ids.copy()
        mask_tokens(ids, 0.5, rng)
        np.testing.assert_array_equal(ids, snapshot)

    def test_empirical_rate(self):
        rng = np.random.default_rng(2)
        ids = np.full((700, 200), 8, dtype=np.int64)  # 140k eligible draws
        _, rows, _, _ = mask_tokens(ids, 0.15, rng)
        rate = rows.size / ids.size
        assert abs(rate - 0.15) < 0.005

    def test_originals_report_pre_mask_ids(self):
        rng = np.random.default_rng(3)
        ids = np.arange(4, 40, dtype=np.int64).reshape(6, 6)
        masked, rows, cols, originals = mask_tokens(ids, 0.5, rng)
        np.testing.assert_array_equal(originals, ids[rows, cols])
        assert (masked[rows, cols] == MASK_ID).all()

    @pytest.mark.parametrize("p", [-0.01, 1.01])
    def test_probability_bounds(self, p):
        with pytest.raises(ConfigError):
            mask_tokens(np.ones((1, 1), dtype=np.int64), p,
                        np.random.default_rng(0))


CFG = ModelConfig(vocab_size=30, n_entities=3, d_model=8, n_layers=1,
                  n_heads=2, ffn_dim=16, max_seq_len=12, dtype="float64", seed=6)


def batch(rng, b=4, length=10):
    ids = rng.integers(len(SPECIALS), CFG.vocab_size, size=(b, length))
    ids[:, 0] = 2
    return ids, np.ones((b, length), dtype=np.int64)


class TestMlmStep:
    def test_no_mask_is_a_no_op(self):
        state = init_model(CFG)
        ref = init_model(CFG)
        ids, mask = batch(np.random.default_rng(4))
        loss = mlm_step(state, ids, mask, TrainConfig(mlm_mask_prob=0.0),
                        np.random.default_rng(0))
        assert loss == 0.0
        assert states_equal(state, ref)

    def test_head_parameters_never_move(self):
        state = init_model(CFG)
        w0 = state.params["head.w"].copy()
        b0 = state.params["head.b"].copy()
        ids, mask = batch(np.random.default_rng(5))
        rng = np.random.default_rng(1)
        for _ in range(5):
            mlm_step(state, ids, mask, TrainConfig(mlm_mask_prob=0.3,
                                                   learning_rate=0.01), rng)
        np.testing.assert_array_equal(state.params["head.w"], w0)
        np.testing.assert_array_equal(state.params["head.b"], b0)
        assert (state.adam_m["head.w"] == 0).all()

    def test_embeddings_and_bias_move(self):
        state = init_model(CFG)
        e0 = state.params["tok_emb"].copy()
        ids, mask = batch(np.random.default_rng(6))
        loss = mlm_step(state, ids, mask,
                        TrainConfig(mlm_mask_prob=0.5, learning_rate=0.01),
                        np.random.default_rng(2))
        assert loss > 0.0
        assert not np.array_equal(state.params["tok_emb"], e0)
        assert state.params["mlm_bias"].any()
        assert state.step == 1


DOCS = [
    ("fever", "and", "chills", "at", "night"),
    ("persistent", "dry", "cough"),
    ("fever", "with", "cough", "and", "chills"),
    ("night", "sweats", "and", "fever"),
    ("dry", "cough", "at", "night"),
    ("chills", "with", "night", "sweats"),
]


class TestMlmPretrain:
    def test_loss_drops_over_200_steps(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=12)
        cfg = ModelConfig(vocab_size=len(tok), n_entities=3, d_model=16,
                          n_layers=1, n_heads=2, ffn_dim=32, max_seq_len=12,
                          dtype="float64", seed=3)
        train = TrainConfig(learning_rate=0.003, batch_size=3, epochs=1,
                            mlm_mask_prob=0.15, seed=5)
        state, losses = mlm_pretrain(init_model(cfg), DOCS, tok, train,
                                     max_steps=200)
        assert len(losses) == 200
        first = np.mean(losses[:20])
        last = np.mean(losses[-20:])
        assert last < 0.8 * first

    def test_max_steps_cycles_past_corpus_end(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=12)
        cfg = ModelConfig(vocab_size=len(tok), n_entities=2, d_model=8,
                          n_layers=1, n_heads=2, ffn_dim=16, max_seq_len=12,
                          dtype="float64", seed=0)
        # one pass is ceil(6/3)=2 batches; ask for 7
        _, losses = mlm_pretrain(init_model(cfg), DOCS, tok,
                                 TrainConfig(batch_size=3, epochs=1, seed=0),
                                 max_steps=7)
        assert len(losses) == 7

    def test_deterministic_for_fixed_seed(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=12)
        cfg = ModelConfig(vocab_size=len(tok), n_entities=2, d_model=8,
                          n_layers=1, n_heads=2, ffn_dim=16, max_seq_len=12,
                          dtype="float64", seed=0)
        train = TrainConfig(batch_size=2, epochs=2, seed=9)
        s1, l1 = mlm_pretrain(init_model(cfg), DOCS, tok, train)
        s2, l2 = mlm_pretrain(init_model(cfg), DOCS, tok, train)
        assert l1 == l2
        assert states_equal(s1, s2)

    def test_empty_corpus_rejected(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=12)
        with pytest.raises(ConfigError):
            mlm_pretrain(init_model(CFG), [], tok, TrainConfig())
