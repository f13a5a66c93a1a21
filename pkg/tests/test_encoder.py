"""Encoder stack: char CNN, LSTM cell, BiLSTM encode, batched equivalence."""

import numpy as np
import pytest

from lmner.data import CHAR_PAD_ID
from lmner.encoder import Encoder, EncoderConfig, LstmParams, lstm_step
from lmner.errors import ContractError
from lmner.tensor import Tensor, backward, make_rng
from oracles import finite_difference_grad, lstm_step_reference, max_relative_error

TINY = dict(char_dim=5, word_dim=7, hidden_dim=6, max_filter_width=3,
            filters_per_width=2, filter_cap=4, dropout=0.0)


def tiny_encoder(seed=3, dtype=np.float64, **overrides):
    cfg = EncoderConfig(**{**TINY, **overrides})
    return Encoder(cfg, word_vocab_size=11, char_vocab_size=9, rng=make_rng(seed), dtype=dtype)


class TestConfigDimensions:
    def test_default_filter_counts_and_feature_dim(self):
        cfg = EncoderConfig()
        assert [cfg.filter_count(w) for w in cfg.widths] == [50, 100, 150, 200, 200, 200, 200]
        assert cfg.char_feature_dim == 1100
        assert cfg.input_dim == 1400
        assert cfg.output_dim == 512

    def test_default_filter_shapes(self):
        cfg = EncoderConfig(char_dim=50)
        enc = Encoder(cfg, word_vocab_size=8, char_vocab_size=30, rng=make_rng(0))
        for w in cfg.widths:
            assert enc.cnn.weights[w].shape == (cfg.filter_count(w), 50, w)
            assert enc.cnn.biases[w].shape == (cfg.filter_count(w),)

    def test_lstm_param_shapes(self):
        cfg = EncoderConfig()
        params = LstmParams(cfg.hidden_dim, cfg.input_dim, make_rng(0), 0.005)
        assert params.W_i.shape == (256, 256 + 1400)
        assert params.b_g.shape == (256,)


class TestCharCnn:
    def test_output_dim_for_any_word(self):
        enc = tiny_encoder()
        feats = enc.char_features(np.array([[1, 2, 3], [4, 0, 0]]))
        assert feats.shape == (2, enc.config.char_feature_dim)

    def test_zero_embeddings_zero_bias_gives_zero(self):
        enc = tiny_encoder()
        enc.char_emb.data[...] = 0.0
        feats = enc.char_features(np.array([[1, 2, 3]]))
        assert np.array_equal(feats.data, np.zeros_like(feats.data))

    def test_width1_one_hot_selector_pools_max(self):
        enc = tiny_encoder()
        j = 2
        enc.cnn.weights[1].data[...] = 0.0
        enc.cnn.weights[1].data[0, j, 0] = 1.0  # filter 0 selects embedding dim j
        chars = np.array([[3, 5, 7]])
        feats = enc.char_features(chars)
        expected = max(0.0, float(enc.char_emb.data[[3, 5, 7], j].max()))
        assert abs(feats.data[0, 0] - expected) < 1e-12

    def test_word_shorter_than_widest_rejected(self):
        enc = tiny_encoder()
        with pytest.raises(ContractError):
            enc.char_features(np.array([[1, 2]]))

    def test_padding_invariance_beyond_floor(self):
        enc = tiny_encoder(seed=8)
        word = [3, 5, 7, 2]
        short = np.array([word + [CHAR_PAD_ID] * 0])
        longer = np.array([word + [CHAR_PAD_ID] * 5])
        f1 = enc.char_features(short)
        f2 = enc.char_features(longer)
        assert np.allclose(f1.data, f2.data, atol=1e-12)

    def test_pad_row_pinned_to_zero(self):
        enc = tiny_encoder()
        assert np.array_equal(enc.char_emb.data[CHAR_PAD_ID],
                              np.zeros(enc.config.char_dim))

    def test_tanh_activation_switch(self):
        enc = tiny_encoder(cnn_activation="tanh")
        feats = enc.char_features(np.array([[1, 2, 3]]))
        assert np.abs(feats.data).max() <= 1.0


class TestLstmStep:
    def test_all_zero_params_and_state(self):
        params = LstmParams(4, 3, make_rng(0), 0.005, dtype=np.float64)
        for t in params.tensors().values():
            t.data[...] = 0.0
        x = Tensor(np.ones((1, 3)))
        h = Tensor(np.zeros((1, 4)))
        c = Tensor(np.zeros((1, 4)))
        h2, c2 = lstm_step(x, h, c, params)
        assert np.allclose(h2.data, 0.0) and np.allclose(c2.data, 0.0)

    def test_zero_params_halve_cell_state(self):
        params = LstmParams(1, 2, make_rng(0), 0.005, dtype=np.float64)
        for t in params.tensors().values():
            t.data[...] = 0.0
        h2, c2 = lstm_step(Tensor(np.ones((1, 2))), Tensor(np.zeros((1, 1))),
                           Tensor(np.ones((1, 1))), params)
        assert abs(c2.data[0, 0] - 0.5) < 1e-12
        assert abs(h2.data[0, 0] - 0.5 * np.tanh(0.5)) < 1e-12

    def test_matches_straight_line_reference(self):
        rng = make_rng(17)
        params = LstmParams(5, 4, rng, 0.5, dtype=np.float64)
        x = rng.standard_normal(4)
        h = rng.standard_normal(5)
        c = rng.standard_normal(5)
        h2, c2 = lstm_step(Tensor(x[None, :]), Tensor(h[None, :]), Tensor(c[None, :]), params)
        ref_h, ref_c = lstm_step_reference(
            x, h, c,
            *(getattr(params, f"W_{g}").data for g in "ifog"),
            *(getattr(params, f"b_{g}").data for g in "ifog"))
        assert np.abs(h2.data[0] - ref_h).max() < 1e-6
        assert np.abs(c2.data[0] - ref_c).max() < 1e-6

    def test_fused_path_equals_literal_steps(self):
        rng = make_rng(23)
        enc = tiny_encoder(seed=23)
        n = 4
        word_ids = np.array([1, 4, 2, 9])
        chars = rng.integers(1, 9, size=(n, 3))
        x = Tensor(rng.standard_normal((n, enc.config.input_dim)))
        from lmner.encoder import _lstm_run

        states = _lstm_run([x[t : t + 1, :] for t in range(n)], enc.lstm_fwd, np.float64)
        h = Tensor(np.zeros((1, enc.config.hidden_dim), dtype=np.float64))
        c = Tensor(np.zeros((1, enc.config.hidden_dim), dtype=np.float64))
        for t in range(n):
            h, c = lstm_step(x[t : t + 1, :], h, c, enc.lstm_fwd)
            assert np.abs(h.data - states[t].data).max() < 1e-12


class TestEncode:
    def test_single_token_shape(self):
        enc = tiny_encoder()
        out = enc.encode(np.array([4]), np.array([[1, 2, 3]]))
        assert out.shape == (1, 2 * enc.config.hidden_dim)

    def test_empty_sentence_rejected(self):
        enc = tiny_encoder()
        with pytest.raises(ContractError):
            enc.encode(np.array([], dtype=np.int64), np.zeros((0, 3), dtype=np.int64))

    def test_deterministic_with_dropout_off(self):
        enc = tiny_encoder()
        ids = np.array([1, 2, 3])
        chars = np.array([[1, 2, 3], [4, 5, 6], [7, 8, 1]])
        a = enc.encode(ids, chars)
        b = enc.encode(ids, chars)
        assert np.array_equal(a.data, b.data)

    def test_palindrome_with_tied_directions(self):
        enc = tiny_encoder(seed=5)
        for name in ("W_i", "W_f", "W_o", "W_g", "b_i", "b_f", "b_o", "b_g"):
            getattr(enc.lstm_bwd, name).data[...] = getattr(enc.lstm_fwd, name).data
        ids = np.array([2, 7, 2])
        chars = np.array([[1, 4, 3], [5, 5, 5], [1, 4, 3]])
        fwd, bwd = enc.direction_states(ids, chars)
        n = len(ids)
        for t in range(n):
            assert np.abs(fwd.data[t] - bwd.data[n - 1 - t]).max() < 1e-10

    def test_reversal_swaps_directions(self):
        enc = tiny_encoder(seed=6)
        ids = np.array([1, 5, 3, 8])
        chars = make_rng(2).integers(1, 9, size=(4, 3))
        fwd, bwd = enc.direction_states(ids, chars)
        # swap the direction parameters, then encode the reversed sentence
        swapped = tiny_encoder(seed=6)
        for name in ("W_i", "W_f", "W_o", "W_g", "b_i", "b_f", "b_o", "b_g"):
            swapped.lstm_fwd.tensors()  # touch to keep symmetry explicit
            a = getattr(swapped.lstm_fwd, name).data.copy()
            getattr(swapped.lstm_fwd, name).data[...] = getattr(swapped.lstm_bwd, name).data
            getattr(swapped.lstm_bwd, name).data[...] = a
        fwd_r, bwd_r = swapped.direction_states(ids[::-1].copy(), chars[::-1].copy())
        assert np.abs(bwd_r.data - fwd.data[::-1]).max() < 1e-10
        assert np.abs(fwd_r.data - bwd.data[::-1]).max() < 1e-10

    def test_batched_equals_per_sentence(self):
        enc = tiny_encoder(seed=7, dtype=np.float32)
        rng = make_rng(31)
        items = []
        for n in (2, 4, 4, 1, 2):
            items.append((rng.integers(0, 11, size=n), rng.integers(1, 9, size=(n, 3))))
        batched = enc.direction_states_batch(items)
        for (ids, chars), (bf, bb) in zip(items, batched):
            f, b = enc.direction_states(ids, chars)
            assert np.abs(f.data - bf.data).max() < 2e-6
            assert np.abs(b.data - bb.data).max() < 2e-6

    def test_dropout_consumes_rng_and_changes_output(self):
        enc = tiny_encoder(dropout=0.5)
        ids = np.array([1, 2])
        chars = np.array([[1, 2, 3], [4, 5, 6]])
        a = enc.encode(ids, chars, training=True, rng=make_rng(1))
        b = enc.encode(ids, chars, training=True, rng=make_rng(1))
        c = enc.encode(ids, chars, training=True, rng=make_rng(2))
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)


class TestEncoderGradients:
    def test_grad_check_through_cnn_and_bilstm(self):
        enc = tiny_encoder(seed=13)
        ids = np.array([1, 5, 3])
        chars = np.array([[2, 3, CHAR_PAD_ID], [4, 5, 6], [7, 2, 3]])
        probe = Tensor(make_rng(99).standard_normal((2 * enc.config.hidden_dim, 1)))

        def build():
            return (enc.encode(ids, chars) @ probe).sum()

        backward(build())
        params = enc.named_parameters()
        enc.zero_pad_char_grad()
        for name, p in params.items():
            numeric = finite_difference_grad(lambda: build().item(), p)
            if name == "encoder.char_emb":
                numeric[CHAR_PAD_ID] = 0.0
            assert p.grad is not None, name
            err = max_relative_error(p.grad, numeric)
            assert err < 1e-4, f"{name}: {err}"

    def test_pad_char_grad_zeroed(self):
        enc = tiny_encoder()
        chars = np.array([[3, CHAR_PAD_ID, CHAR_PAD_ID]])
        backward(enc.char_features(chars).sum())
        assert enc.char_emb.grad is not None
        enc.zero_pad_char_grad()
        assert np.array_equal(enc.char_emb.grad[CHAR_PAD_ID], np.zeros(enc.config.char_dim))
