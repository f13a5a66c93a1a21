"""Tag scoring heads: per-word softmax likelihood and linear-chain CRF
sentence likelihood, with Viterbi decoding and posterior marginals.

All dynamic programs run in log space. The CRF optionally carries learned
start/stop boundary scores (on by default); disabling them restores the
plain emission+transition scoring form, and every routine here honors
both modes.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint
from .encoder import Encoder, EncoderConfig
from .errors import ContractError
from .tensor import Tensor, init_xavier, init_zeros, softmax_cross_entropy


class CrfParams:
    """Transition matrix [T, T] (entry [i, j] scores tag j after tag i),
    plus optional start/stop boundary score vectors."""

    def __init__(self, num_tags: int, rng, boundaries: bool = True, dtype=T.DEFAULT_DTYPE):
        self.num_tags = num_tags
        self.boundaries = boundaries
        self.transitions = init_xavier((num_tags, num_tags), rng, dtype=dtype)
        self.start = init_zeros((num_tags,), dtype=dtype) if boundaries else None
        self.stop = init_zeros((num_tags,), dtype=dtype) if boundaries else None

    def tensors(self) -> dict:
        out = {"crf.transitions": self.transitions}
        if self.boundaries:
            out["crf.start"] = self.start
            out["crf.stop"] = self.stop
        return out

    def _boundary_arrays(self):
        if self.boundaries:
            return self.start.data, self.stop.data
        zeros = np.zeros(self.num_tags, dtype=self.transitions.dtype)
        return zeros, zeros


def logits(hidden: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map of hidden states to tag (or word) scores: d_t = W h_t + b."""
    return hidden @ weight.transpose() + bias


def word_nll(d: Tensor, gold_tags) -> Tensor:
    """Mean per-token negative log softmax likelihood of the gold tags."""
    return softmax_cross_entropy(d, gold_tags, reduction="mean")


def _check_lengths(d, gold_tags=None):
    n = d.shape[0]
    if n < 1:
        raise ContractError("CRF needs at least one position")
    if gold_tags is not None and len(gold_tags) != n:
        raise ContractError(f"{len(gold_tags)} tags for {n} positions")


def crf_score(d: Tensor, gold_tags, crf: CrfParams) -> Tensor:
    """Path score s(d, y): emissions along y plus transition scores,
    plus boundary scores when enabled."""
    _check_lengths(d, gold_tags)
    n, t = d.shape
    y = np.asarray(gold_tags, dtype=np.int64)
    emit_mask = np.zeros((n, t), dtype=d.dtype)
    emit_mask[np.arange(n), y] = 1.0
    score = (d * Tensor(emit_mask)).sum()
    if n > 1:
        counts = np.zeros((t, t), dtype=d.dtype)
        np.add.at(counts, (y[:-1], y[1:]), 1.0)
        score = score + (crf.transitions * Tensor(counts)).sum()
    if crf.boundaries:
        first = np.zeros(t, dtype=d.dtype)
        first[y[0]] = 1.0
        last = np.zeros(t, dtype=d.dtype)
        last[y[-1]] = 1.0
        score = score + (crf.start * Tensor(first)).sum() + (crf.stop * Tensor(last)).sum()
    return score


def crf_log_partition(d: Tensor, crf: CrfParams) -> Tensor:
    """log sum over all tag paths of exp(s(d, y)), by the forward recursion."""
    _check_lengths(d)
    n, t = d.shape
    alpha = d[0:1, :]
    if crf.boundaries:
        alpha = alpha + crf.start
    for step in range(1, n):
        scores = alpha.reshape(t, 1) + crf.transitions
        alpha = scores.logsumexp(axis=0).reshape(1, t) + d[step : step + 1, :]
    if crf.boundaries:
        alpha = alpha + crf.stop
    return alpha.logsumexp(axis=1).sum()


def crf_log_likelihood(d: Tensor, gold_tags, crf: CrfParams) -> Tensor:
    """log p(y | d) = s(d, y) - log Z. Always <= 0; negate for a loss."""
    return crf_score(d, gold_tags, crf) - crf_log_partition(d, crf)


def viterbi(d, crf: CrfParams):
    """Highest-scoring tag path and its score.

    Ties break toward the lowest tag id at each backtrack step. Accepts a
    Tensor or array of emission scores; runs outside the autodiff graph.
    """
    emissions = d.data if isinstance(d, Tensor) else np.asarray(d)
    _check_lengths(emissions)
    n, t = emissions.shape
    trans = crf.transitions.data
    start, stop = crf._boundary_arrays()
    delta = emissions[0] + start
    backptr = np.zeros((n, t), dtype=np.int64)
    for step in range(1, n):
        scores = delta[:, None] + trans
        backptr[step] = np.argmax(scores, axis=0)
        delta = scores.max(axis=0) + emissions[step]
    delta = delta + stop
    best = int(np.argmax(delta))
    path = [best]
    for step in range(n - 1, 0, -1):
        best = int(backptr[step, best])
        path.append(best)
    path.reverse()
    return path, float(delta[path[-1]])


def crf_marginals(d, crf: CrfParams) -> np.ndarray:
    """Posterior tag probabilities [N, T] via the forward-backward
    recursions; each row sums to 1."""
    emissions = d.data if isinstance(d, Tensor) else np.asarray(d)
    _check_lengths(emissions)
    n, t = emissions.shape
    trans = crf.transitions.data.astype(np.float64)
    emissions = emissions.astype(np.float64)
    start, stop = (a.astype(np.float64) for a in crf._boundary_arrays())

    def lse(x, axis):
        m = x.max(axis=axis, keepdims=True)
        return np.log(np.exp(x - m).sum(axis=axis)) + np.squeeze(m, axis=axis)

    alpha = np.zeros((n, t))
    alpha[0] = emissions[0] + start
    for step in range(1, n):
        alpha[step] = lse(alpha[step - 1][:, None] + trans, axis=0) + emissions[step]
    beta = np.zeros((n, t))
    beta[n - 1] = stop
    for step in range(n - 2, -1, -1):
        beta[step] = lse(trans + (emissions[step + 1] + beta[step + 1])[None, :], axis=1)
    log_z = lse(alpha[n - 1] + stop, axis=0)
    joint = alpha + beta - log_z
    return np.exp(joint)


class NerModel:
    """Encoder plus a tag decoder; head is either 'crf' or 'softmax'."""

    def __init__(self, config: EncoderConfig, word_vocab_size: int, char_vocab_size: int,
                 num_tags: int, rng, head: str = "crf", crf_boundaries: bool = True,
                 word_table=None, dtype=T.DEFAULT_DTYPE):
        if head not in ("crf", "softmax"):
            raise ContractError(f"unknown head {head!r}")
        self.head = head
        self.num_tags = num_tags
        self.encoder = Encoder(config, word_vocab_size, char_vocab_size, rng,
                               word_table=word_table, dtype=dtype)
        self.decoder_weight = init_xavier((num_tags, config.output_dim), rng, dtype=dtype)
        self.decoder_bias = init_zeros((num_tags,), dtype=dtype)
        self.crf = CrfParams(num_tags, rng, boundaries=crf_boundaries, dtype=dtype) \
            if head == "crf" else None

    def named_parameters(self) -> dict:
        out = dict(self.encoder.named_parameters())
        out["ner.decoder.weight"] = self.decoder_weight
        out["ner.decoder.bias"] = self.decoder_bias
        if self.crf is not None:
            out.update(self.crf.tensors())
        return out

    def emissions(self, word_ids, char_matrix, training: bool = False, rng=None) -> Tensor:
        hidden = self.encoder.encode(word_ids, char_matrix, training=training, rng=rng)
        return logits(hidden, self.decoder_weight, self.decoder_bias)

    def sentence_loss(self, word_ids, char_matrix, tag_ids, training: bool = False,
                      rng=None) -> Tensor:
        d = self.emissions(word_ids, char_matrix, training=training, rng=rng)
        if self.head == "crf":
            return -crf_log_likelihood(d, tag_ids, self.crf)
        return softmax_cross_entropy(d, tag_ids, reduction="sum")

    def batch_emissions(self, sentences, char_matrices, training: bool = False, rng=None):
        """Per-sentence emission scores for a batch, computed with
        length-grouped LSTM runs and one decoder matmul."""
        from .tensor import concat

        items = [(sent.word_ids, chars) for sent, chars in zip(sentences, char_matrices)]
        states = self.encoder.direction_states_batch(items, training=training, rng=rng)
        hidden = concat([concat([f, b], axis=1) for f, b in states], axis=0)
        d_all = logits(hidden, self.decoder_weight, self.decoder_bias)
        out = []
        offset = 0
        for sent in sentences:
            out.append(d_all[offset : offset + len(sent), :])
            offset += len(sent)
        return out

    def batch_loss(self, sentences, char_matrices, training: bool = False, rng=None) -> Tensor:
        """CRF head: mean per-sentence NLL; softmax head: mean per-token CE."""
        if self.head == "softmax":
            from .tensor import concat

            items = [(s.word_ids, chars) for s, chars in zip(sentences, char_matrices)]
            states = self.encoder.direction_states_batch(items, training=training, rng=rng)
            hidden = concat([concat([f, b], axis=1) for f, b in states], axis=0)
            d_all = logits(hidden, self.decoder_weight, self.decoder_bias)
            targets = np.concatenate([s.tag_ids for s in sentences])
            return softmax_cross_entropy(d_all, targets, reduction="mean")
        emissions = self.batch_emissions(sentences, char_matrices, training=training, rng=rng)
        total = None
        for sent, d in zip(sentences, emissions):
            loss = -crf_log_likelihood(d, sent.tag_ids, self.crf)
            total = loss if total is None else total + loss
        return total * (1.0 / len(sentences))

    def decode_batch(self, sentences, char_matrices) -> list:
        """Predicted tag id paths for a batch, dropout off, no graph."""
        with T.no_grad():
            emissions = self.batch_emissions(sentences, char_matrices, training=False)
        paths = []
        for d in emissions:
            if self.head == "crf":
                path, _ = viterbi(d, self.crf)
                paths.append(path)
            else:
                paths.append([int(i) for i in np.argmax(d.data, axis=1)])
        return paths

    def decode(self, word_ids, char_matrix) -> list:
        """Predicted tag ids; Viterbi for the CRF head, per-token argmax otherwise."""
        d = self.emissions(word_ids, char_matrix, training=False)
        if self.head == "crf":
            path, _ = viterbi(d, self.crf)
            return path
        return [int(i) for i in np.argmax(d.data, axis=1)]

    def arch_meta(self) -> dict:
        meta = self.encoder.arch_meta()
        meta["num_tags"] = self.num_tags
        meta["head_crf"] = 1 if self.head == "crf" else 0
        meta["crf_boundaries"] = 1 if (self.crf is not None and self.crf.boundaries) else 0
        return meta

    def to_checkpoint(self) -> Checkpoint:
        entries = {name: p.data for name, p in self.named_parameters().items()}
        return Checkpoint(entries, self.arch_meta())

    def load_entries(self, ckpt: Checkpoint, names=None) -> None:
        params = self.named_parameters()
        for name in names if names is not None else params:
            arr = ckpt[name]
            if arr.shape != params[name].shape:
                raise ContractError(f"{name}: checkpoint shape {arr.shape} != {params[name].shape}")
            params[name].data[...] = arr.astype(params[name].dtype)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "NerModel":
        """Rebuild a tagger from a checkpoint written by to_checkpoint()."""
        from .encoder import encoder_config_from_meta
        from .tensor import make_rng

        meta = ckpt.meta
        config = encoder_config_from_meta(meta)
        model = cls(config, int(meta["word_vocab"]), int(meta["char_vocab"]),
                    int(meta["num_tags"]), make_rng(0),
                    head="crf" if meta.get("head_crf", 1) else "softmax",
                    crf_boundaries=bool(meta.get("crf_boundaries", 1)))
        model.load_entries(ckpt)
        return model
