"""Shared representation stack: character CNN features concatenated with
word embeddings, fed through a forward and a backward LSTM.

The same encoder instance serves both the language models and the tagger;
weight transfer between the two is a plain tensor copy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import CHAR_PAD_ID
from .embeddings import EmbeddingTable, random_table
from .errors import ContractError
from .tensor import Tensor, concat, dropout, init_uniform, init_xavier, init_zeros


@dataclass
class EncoderConfig:
    char_dim: int = 50
    word_dim: int = 300
    hidden_dim: int = 256
    max_filter_width: int = 7
    filters_per_width: int = 50
    filter_cap: int = 200
    cnn_activation: str = "relu"  # or "tanh"
    dropout: float = 0.5
    lstm_init_range: float = 0.005
    word_init_range: float = 0.005

    @property
    def widths(self):
        return list(range(1, self.max_filter_width + 1))

    def filter_count(self, width: int) -> int:
        return min(self.filter_cap, self.filters_per_width * width)

    @property
    def char_feature_dim(self) -> int:
        return sum(self.filter_count(w) for w in self.widths)

    @property
    def input_dim(self) -> int:
        return self.word_dim + self.char_feature_dim

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden_dim


def encoder_config_from_meta(meta: dict) -> EncoderConfig:
    """Reconstruct the architecture block from checkpoint metadata."""
    return EncoderConfig(
        char_dim=int(meta["char_dim"]),
        word_dim=int(meta["word_dim"]),
        hidden_dim=int(meta["hidden_dim"]),
        max_filter_width=int(meta["max_filter_width"]),
        filters_per_width=int(meta["filters_per_width"]),
        filter_cap=int(meta["filter_cap"]),
        cnn_activation="relu" if meta.get("cnn_relu", 1) else "tanh",
    )


class CnnFilterBank:
    """One (weights, bias) pair per filter width; weights are [n_w, D_c, w]."""

    def __init__(self, config: EncoderConfig, rng, dtype=T.DEFAULT_DTYPE):
        self.widths = config.widths
        self.weights = {}
        self.biases = {}
        for w in self.widths:
            n = config.filter_count(w)
            self.weights[w] = init_xavier((n, config.char_dim, w), rng, dtype=dtype)
            self.biases[w] = init_zeros((n,), dtype=dtype)


class LstmParams:
    """Gate weights W_i, W_f, W_o, W_g each [H, H + D_in], biases [H]."""

    GATES = ("i", "f", "o", "g")

    def __init__(self, hidden_dim: int, input_dim: int, rng, init_range: float,
                 dtype=T.DEFAULT_DTYPE):
        self.hidden_dim = hidden_dim
        self.input_dim = input_dim
        shape = (hidden_dim, hidden_dim + input_dim)
        for gate in self.GATES:
            setattr(self, f"W_{gate}", init_uniform(shape, -init_range, init_range, rng, dtype=dtype))
            setattr(self, f"b_{gate}", init_uniform((hidden_dim,), -init_range, init_range, rng,
                                                    dtype=dtype))

    def tensors(self) -> dict:
        out = {}
        for gate in self.GATES:
            out[f"W_{gate}"] = getattr(self, f"W_{gate}")
        for gate in self.GATES:
            out[f"b_{gate}"] = getattr(self, f"b_{gate}")
        return out

    def fused(self):
        """[h, x] @ W + b computing all four gates in one matmul."""
        W = concat([self.W_i, self.W_f, self.W_o, self.W_g], axis=0).transpose()
        b = concat([self.b_i, self.b_f, self.b_o, self.b_g], axis=0)
        return W, b


def lstm_step(x: Tensor, h: Tensor, c: Tensor, params: LstmParams):
    """One LSTM cell update; returns (h', c').

    i = sigmoid(W_i [h, x] + b_i)      f = sigmoid(W_f [h, x] + b_f)
    o = sigmoid(W_o [h, x] + b_o)      g = tanh(W_g [h, x] + b_g)
    c' = f * c + i * g                 h' = o * tanh(c')
    """
    hx = concat([h, x], axis=1)
    i = (hx @ params.W_i.transpose() + params.b_i).sigmoid()
    f = (hx @ params.W_f.transpose() + params.b_f).sigmoid()
    o = (hx @ params.W_o.transpose() + params.b_o).sigmoid()
    g = (hx @ params.W_g.transpose() + params.b_g).tanh()
    c_new = f * c + i * g
    h_new = o * c_new.tanh()
    return h_new, c_new


def _lstm_run(xs, params: LstmParams, dtype, rows: int = 1):
    """Run the cell over a list of [rows, D_in] inputs from zero initial states."""
    H = params.hidden_dim
    h = Tensor(np.zeros((rows, H), dtype=dtype))
    c = Tensor(np.zeros((rows, H), dtype=dtype))
    W, b = params.fused()
    states = []
    for x in xs:
        hx = concat([h, x], axis=1)
        z = hx @ W + b
        i = z[:, 0:H].sigmoid()
        f = z[:, H : 2 * H].sigmoid()
        o = z[:, 2 * H : 3 * H].sigmoid()
        g = z[:, 3 * H : 4 * H].tanh()
        c = f * c + i * g
        h = o * c.tanh()
        states.append(h)
    return states


class Encoder:
    """Character CNN + word embedding + two-direction LSTM."""

    def __init__(self, config: EncoderConfig, word_vocab_size: int, char_vocab_size: int,
                 rng, word_table: EmbeddingTable | None = None, dtype=T.DEFAULT_DTYPE):
        self.config = config
        self.dtype = dtype
        self.word_vocab_size = word_vocab_size
        self.char_vocab_size = char_vocab_size
        self.char_emb = init_xavier((char_vocab_size, config.char_dim), rng, dtype=dtype)
        self.char_emb.data[CHAR_PAD_ID] = 0.0
        if word_table is None:
            word_table = random_table(word_vocab_size, config.word_dim, rng,
                                      init_range=config.word_init_range, dtype=dtype)
        if word_table.matrix.shape != (word_vocab_size, config.word_dim):
            raise ContractError(
                f"word table shape {word_table.matrix.shape} does not match "
                f"({word_vocab_size}, {config.word_dim})")
        self.word_emb = word_table.matrix
        self.cnn = CnnFilterBank(config, rng, dtype=dtype)
        self.lstm_fwd = LstmParams(config.hidden_dim, config.input_dim, rng,
                                   config.lstm_init_range, dtype=dtype)
        self.lstm_bwd = LstmParams(config.hidden_dim, config.input_dim, rng,
                                   config.lstm_init_range, dtype=dtype)

    # -- parameter bookkeeping -------------------------------------------------

    def named_parameters(self) -> dict:
        out = {"encoder.char_emb": self.char_emb, "encoder.word_emb": self.word_emb}
        for w in self.cnn.widths:
            out[f"encoder.cnn.w{w}.weight"] = self.cnn.weights[w]
            out[f"encoder.cnn.w{w}.bias"] = self.cnn.biases[w]
        for direction, params in (("fwd", self.lstm_fwd), ("bwd", self.lstm_bwd)):
            for name, t in params.tensors().items():
                out[f"encoder.lstm_{direction}.{name}"] = t
        return out

    def zero_pad_char_grad(self) -> None:
        """Keep the PAD character row pinned: its gradient never reaches Adam."""
        if self.char_emb.grad is not None:
            self.char_emb.grad[CHAR_PAD_ID] = 0.0

    def arch_meta(self) -> dict:
        cfg = self.config
        return {
            "char_dim": cfg.char_dim,
            "word_dim": cfg.word_dim,
            "hidden_dim": cfg.hidden_dim,
            "max_filter_width": cfg.max_filter_width,
            "filters_per_width": cfg.filters_per_width,
            "filter_cap": cfg.filter_cap,
            "cnn_relu": 1 if cfg.cnn_activation == "relu" else 0,
            "word_vocab": self.word_vocab_size,
            "char_vocab": self.char_vocab_size,
        }

    # -- forward pieces ----------------------------------------------------------

    def char_features(self, char_matrix: np.ndarray) -> Tensor:
        """Convolve each word's character embeddings and max-pool over time.

        char_matrix: [n_words, L] int ids, right-padded; L must be at
        least the widest filter. Output: [n_words, char_feature_dim],
        pooled features concatenated in fixed width order.

        Pooling positions are capped per word at max(word length, widest
        filter), so a word's features do not depend on how much extra
        right-padding its batch happened to need. Pad windows inside that
        cap (short words) do participate, with the zero PAD embedding row.
        """
        n_words, length = char_matrix.shape
        widths = self.cnn.widths
        widest = widths[-1]
        if length < widest:
            raise ContractError(f"padded word length {length} < widest filter {widest}")
        word_len = np.maximum((char_matrix != CHAR_PAD_ID).sum(axis=1), widest)
        emb = self.char_emb.take_rows(char_matrix.reshape(-1))
        emb = emb.reshape(n_words, length, self.config.char_dim)
        act = Tensor.relu if self.config.cnn_activation == "relu" else Tensor.tanh
        pooled = []
        for w in widths:
            positions = length - w + 1
            # Tap decomposition: one [D_c -> n_w] matmul per filter column.
            score = None
            for t in range(w):
                window = emb[:, t : t + positions, :].reshape(n_words * positions,
                                                              self.config.char_dim)
                tap = window @ self.cnn.weights[w][:, :, t].transpose()
                score = tap if score is None else score + tap
            score = score + self.cnn.biases[w]
            score = act(score).reshape(n_words, positions, self.config.filter_count(w))
            allowed = word_len - w + 1  # valid window starts per word
            if (allowed < positions).any():
                mask = np.where(np.arange(positions)[None, :] < allowed[:, None],
                                0.0, -1e9).astype(score.dtype)
                score = score + Tensor(mask[:, :, None])
            pooled.append(score.max(axis=1))
        return concat(pooled, axis=1)

    def direction_states(self, word_ids: np.ndarray, char_matrix: np.ndarray,
                         training: bool = False, rng=None):
        """Per-position forward and backward hidden states, each [N, H].

        Row t of the backward states is the state after consuming the
        suffix w_t..w_N, so both outputs align with token positions.
        Dropout (when training) hits the concatenated input vectors and
        each direction's output states.
        """
        n = len(word_ids)
        if n == 0:
            raise ContractError("cannot encode an empty sentence")
        words = self.word_emb.take_rows(word_ids)
        chars = self.char_features(char_matrix)
        x = concat([words, chars], axis=1)
        x = dropout(x, self.config.dropout, training, rng)
        xs = [x[t : t + 1, :] for t in range(n)]
        fwd = concat(_lstm_run(xs, self.lstm_fwd, self.dtype), axis=0)
        bwd_rev = _lstm_run(list(reversed(xs)), self.lstm_bwd, self.dtype)
        bwd = concat(list(reversed(bwd_rev)), axis=0)
        fwd = dropout(fwd, self.config.dropout, training, rng)
        bwd = dropout(bwd, self.config.dropout, training, rng)
        return fwd, bwd

    def encode(self, word_ids: np.ndarray, char_matrix: np.ndarray,
               training: bool = False, rng=None) -> Tensor:
        """Sentence representation [N, 2H]: forward and backward states
        concatenated per position."""
        fwd, bwd = self.direction_states(word_ids, char_matrix, training=training, rng=rng)
        return concat([fwd, bwd], axis=1)

    def direction_states_batch(self, items, training: bool = False, rng=None):
        """direction_states over many sentences, grouping equal lengths so
        each LSTM step is one matmul for the whole group.

        items: list of (word_ids, char_matrix) with a common padded char
        width. Returns per-sentence (fwd, bwd) pairs in input order; the
        math per sentence is the same as direction_states.
        """
        groups = {}
        for pos, (word_ids, _) in enumerate(items):
            groups.setdefault(len(word_ids), []).append(pos)
        results = [None] * len(items)
        p = self.config.dropout
        hidden = self.config.hidden_dim
        for length in sorted(groups):
            idxs = groups[length]
            k = len(idxs)
            word_ids = np.concatenate([items[i][0] for i in idxs])
            char_mat = np.concatenate([items[i][1] for i in idxs], axis=0)
            words = self.word_emb.take_rows(word_ids)
            chars = self.char_features(char_mat)
            x = dropout(concat([words, chars], axis=1), p, training, rng)
            x3 = x.reshape(k, length, self.config.input_dim)
            xs = [x3[:, t, :] for t in range(length)]
            fwd_list = _lstm_run(xs, self.lstm_fwd, self.dtype, rows=k)
            bwd_list = _lstm_run(list(reversed(xs)), self.lstm_bwd, self.dtype, rows=k)
            bwd_list.reverse()
            fwd = concat([s.reshape(1, k, hidden) for s in fwd_list], axis=0).transpose((1, 0, 2))
            bwd = concat([s.reshape(1, k, hidden) for s in bwd_list], axis=0).transpose((1, 0, 2))
            fwd = dropout(fwd, p, training, rng)
            bwd = dropout(bwd, p, training, rng)
            for row, original in enumerate(idxs):
                results[original] = (fwd[row], bwd[row])
        return results
