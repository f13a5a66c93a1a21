"""Forward, backward, and joint bidirectional language models.

Both directions share the encoder and one decoder: the forward LM
predicts each next word (ending on the end-of-sequence symbol) from the
forward LSTM states, the backward LM predicts each previous word (ending
on the start symbol) from the backward LSTM states.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint
from .data import BOS_ID, EOS_ID, batch_by_word_budget, pad_chars
from .encoder import Encoder, EncoderConfig
from .errors import ContractError, NumericError
from .ner import logits
from .optim import Adam, clip_global_norm
from .schedule import PlateauSchedule, TrainConfig
from .tensor import Tensor, backward, init_xavier, init_zeros, softmax_cross_entropy

log = logging.getLogger(__name__)


class BilmModel:
    """Encoder plus a word decoder [V, H] shared by both directions."""

    def __init__(self, config: EncoderConfig, word_vocab_size: int, char_vocab_size: int,
                 rng, word_table=None, dtype=T.DEFAULT_DTYPE):
        self.encoder = Encoder(config, word_vocab_size, char_vocab_size, rng,
                               word_table=word_table, dtype=dtype)
        self.vocab_size = word_vocab_size
        self.decoder_weight = init_xavier((word_vocab_size, config.hidden_dim), rng, dtype=dtype)
        self.decoder_bias = init_zeros((word_vocab_size,), dtype=dtype)

    def named_parameters(self) -> dict:
        out = dict(self.encoder.named_parameters())
        out["lm_decoder.weight"] = self.decoder_weight
        out["lm_decoder.bias"] = self.decoder_bias
        return out

    def arch_meta(self) -> dict:
        return self.encoder.arch_meta()

    def to_checkpoint(self) -> Checkpoint:
        entries = {name: p.data for name, p in self.named_parameters().items()}
        return Checkpoint(entries, self.arch_meta())

    # -- losses ------------------------------------------------------------------

    def _direction_ce(self, sent, char_matrix, training: bool = False, rng=None):
        """Summed cross-entropy of both directions for one sentence.

        Forward states predict the next word (last target: EOS); backward
        states predict the previous word (first target: BOS). Returns
        (fwd_ce_sum, bwd_ce_sum, n_predictions_per_direction).
        """
        ids = sent.word_ids
        n = len(ids)
        fwd, bwd = self.encoder.direction_states(ids, char_matrix, training=training, rng=rng)
        fwd_targets = np.concatenate([ids[1:], [EOS_ID]])
        bwd_targets = np.concatenate([[BOS_ID], ids[:-1]])
        fwd_ce = softmax_cross_entropy(
            logits(fwd, self.decoder_weight, self.decoder_bias), fwd_targets, reduction="sum")
        bwd_ce = softmax_cross_entropy(
            logits(bwd, self.decoder_weight, self.decoder_bias), bwd_targets, reduction="sum")
        return fwd_ce, bwd_ce, n

    def forward_loss(self, sent, char_matrix, training: bool = False, rng=None) -> Tensor:
        """Mean per-token CE of the forward LM on one sentence."""
        fwd_ce, _, n = self._direction_ce(sent, char_matrix, training=training, rng=rng)
        return fwd_ce * (1.0 / n)

    def backward_loss(self, sent, char_matrix, training: bool = False, rng=None) -> Tensor:
        """Mean per-token CE of the backward LM on one sentence."""
        _, bwd_ce, n = self._direction_ce(sent, char_matrix, training=training, rng=rng)
        return bwd_ce * (1.0 / n)

    def batch_losses(self, batch, char_matrices, training: bool = False, rng=None):
        """Token-weighted mean CE per direction over a batch.

        Sentences of equal length run through the LSTM together, and each
        direction's decoder + cross-entropy is one fused op for the batch.
        """
        from .tensor import concat

        items = [(sent.word_ids, chars) for sent, chars in zip(batch, char_matrices)]
        states = self.encoder.direction_states_batch(items, training=training, rng=rng)
        fwd_targets, bwd_targets = [], []
        for sent in batch:
            ids = sent.word_ids
            fwd_targets.append(np.concatenate([ids[1:], [EOS_ID]]))
            bwd_targets.append(np.concatenate([[BOS_ID], ids[:-1]]))
        all_fwd = concat([f for f, _ in states], axis=0)
        all_bwd = concat([b for _, b in states], axis=0)
        tokens = all_fwd.shape[0]
        fwd_ce = softmax_cross_entropy(
            logits(all_fwd, self.decoder_weight, self.decoder_bias),
            np.concatenate(fwd_targets), reduction="sum")
        bwd_ce = softmax_cross_entropy(
            logits(all_bwd, self.decoder_weight, self.decoder_bias),
            np.concatenate(bwd_targets), reduction="sum")
        return fwd_ce * (1.0 / tokens), bwd_ce * (1.0 / tokens)

    def joint_loss(self, batch, char_matrices, lm_loss_weight: float = 0.5,
                   training: bool = False, rng=None) -> Tensor:
        fwd, bwd = self.batch_losses(batch, char_matrices, training=training, rng=rng)
        return lm_loss_weight * (fwd + bwd)


def perplexity(model: BilmModel, sentences, widest_filter: int | None = None,
               chunk_size: int = 64):
    """exp(mean per-token CE) per direction, dropout off.

    Token-weighted, so the result is invariant to sentence order and to
    how the corpus is split into batches.
    """
    widest = widest_filter or model.encoder.config.max_filter_width
    sentences = list(sentences)
    fwd_total, bwd_total, tokens = 0.0, 0.0, 0
    with T.no_grad():
        for lo in range(0, len(sentences), chunk_size):
            chunk = sentences[lo : lo + chunk_size]
            char_mats = pad_chars(chunk, widest)
            fwd, bwd = model.batch_losses(chunk, char_mats, training=False)
            n = sum(len(s) for s in chunk)
            fwd_total += fwd.item() * n
            bwd_total += bwd.item() * n
            tokens += n
    if tokens == 0:
        raise ContractError("perplexity over an empty corpus")
    return math.exp(fwd_total / tokens), math.exp(bwd_total / tokens)


@dataclass
class LmEpochRecord:
    epoch: int
    lr: float
    fwd_loss: float
    bwd_loss: float
    ppl_fwd: float
    ppl_bwd: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


@dataclass
class BilmTrainResult:
    checkpoint: Checkpoint
    history: list = field(default_factory=list)
    best_ppl: float = math.inf
    best_epoch: int = 0


def train_bilm(model: BilmModel, sentences, config: TrainConfig, rng) -> BilmTrainResult:
    """Joint LM training with held-out perplexity scheduling.

    Per epoch: reshuffled word-budget batches, one backward/clip/Adam step
    per batch; then held-out perplexity (mean of the two directions)
    drives lr decay and early stopping. The best-perplexity parameters are
    restored into the model and returned as the checkpoint.
    """
    sentences = list(sentences)
    if not sentences:
        raise ContractError("train_bilm needs a non-empty corpus")
    n_held = int(round(config.holdout_fraction * len(sentences)))
    if config.holdout_fraction > 0:
        n_held = max(1, min(n_held, len(sentences) - 1))
    order = list(sentences)
    rng.shuffle(order)
    heldout = order[:n_held] if n_held else order
    train_split = order[n_held:] if n_held else order

    params = model.named_parameters()
    optimizer = Adam(params.values(), lr=config.lr, beta1=config.beta1,
                     beta2=config.beta2, eps=config.eps)
    schedule = PlateauSchedule(optimizer, config.lr_decay, config.patience,
                               higher_is_better=False)
    widest = model.encoder.config.max_filter_width
    model.encoder.config.dropout = config.dropout
    best_state = None
    result = BilmTrainResult(checkpoint=None)

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        fwd_sum, bwd_sum, batches_done = 0.0, 0.0, 0
        for batch in batch_by_word_budget(train_split, config.word_budget, rng):
            char_mats = pad_chars(batch, widest)
            fwd, bwd = model.batch_losses(batch, char_mats, training=True, rng=rng)
            loss = config.lm_loss_weight * (fwd + bwd)
            if not np.isfinite(loss.item()):
                raise NumericError(
                    f"non-finite LM loss at epoch {epoch}, batch {batches_done}: "
                    f"fwd={fwd.item()} bwd={bwd.item()} lr={optimizer.lr}")
            backward(loss)
            model.encoder.zero_pad_char_grad()
            clip_global_norm(params.values(), config.clip_norm)
            optimizer.step()
            optimizer.zero_grad()
            fwd_sum += fwd.item()
            bwd_sum += bwd.item()
            batches_done += 1
        ppl_f, ppl_b = perplexity(model, heldout, widest)
        metric = 0.5 * (ppl_f + ppl_b)
        lr_before = optimizer.lr
        if schedule.update(metric, epoch):
            best_state = {name: p.data.copy() for name, p in params.items()}
            result.best_ppl = metric
            result.best_epoch = epoch
        record = LmEpochRecord(epoch, lr_before, fwd_sum / batches_done,
                               bwd_sum / batches_done, ppl_f, ppl_b,
                               time.perf_counter() - started)
        result.history.append(record)
        log.info("lm epoch %d: fwd %.4f bwd %.4f ppl %.3f/%.3f lr %.2e",
                 epoch, record.fwd_loss, record.bwd_loss, ppl_f, ppl_b, lr_before)
        if schedule.should_stop:
            break

    if best_state is not None:
        for name, p in params.items():
            p.data[...] = best_state[name]
    result.checkpoint = model.to_checkpoint()
    return result
