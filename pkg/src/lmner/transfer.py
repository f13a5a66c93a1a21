"""Weight transfer from a trained language model into the tagger, the four
pretraining modes, and the supervised fine-tuning loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .checkpoint import Checkpoint, require_matching_meta
from .data import batch_by_word_budget, pad_chars
from .encoder import EncoderConfig
from .errors import ContractError, DataError, NumericError
from .evaluate import exact_match_prf
from .ner import NerModel
from .optim import Adam, clip_global_norm
from .schedule import PlateauSchedule, TrainConfig
from .tensor import backward

log = logging.getLogger(__name__)

_ARCH_KEYS = ("char_dim", "word_dim", "hidden_dim", "max_filter_width",
              "filters_per_width", "filter_cap", "word_vocab", "char_vocab")


class PretrainMode(Enum):
    NONE = "none"
    FORWARD_ONLY = "fwd"
    BACKWARD_ONLY = "bwd"
    BILM = "bilm"


def transfer_weights(lm_ckpt: Checkpoint | None, mode: PretrainMode, model: NerModel) -> NerModel:
    """Copy language-model weights into a freshly initialized tagger.

    BILM copies embeddings, CNN filters, and both LSTMs; FORWARD_ONLY /
    BACKWARD_ONLY copy embeddings, CNN, and just their LSTM, leaving the
    other direction at its random initialization. NONE copies nothing.
    The language model's decoder never transfers, and the tag decoder and
    CRF always keep their fresh initialization.
    """
    if mode == PretrainMode.NONE:
        return model
    if lm_ckpt is None:
        raise ContractError(f"mode {mode.value} requires a language-model checkpoint")
    require_matching_meta(lm_ckpt, model.encoder.arch_meta(), _ARCH_KEYS)
    names = [n for n in model.encoder.named_parameters()
             if not n.startswith("encoder.lstm_")]
    if mode in (PretrainMode.BILM, PretrainMode.FORWARD_ONLY):
        names += [n for n in model.encoder.named_parameters() if n.startswith("encoder.lstm_fwd.")]
    if mode in (PretrainMode.BILM, PretrainMode.BACKWARD_ONLY):
        names += [n for n in model.encoder.named_parameters() if n.startswith("encoder.lstm_bwd.")]
    model.load_entries(lm_ckpt, names)
    return model


def build_ner_model(config: EncoderConfig, word_vocab_size: int, char_vocab_size: int,
                    num_tags: int, rng, head: str = "crf", crf_boundaries: bool = True,
                    word_table=None, dtype=None) -> NerModel:
    kwargs = {} if dtype is None else {"dtype": dtype}
    return NerModel(config, word_vocab_size, char_vocab_size, num_tags, rng,
                    head=head, crf_boundaries=crf_boundaries, word_table=word_table, **kwargs)


@dataclass
class NerEpochRecord:
    epoch: int
    seconds: float
    train_loss: float
    dev_precision: float
    dev_recall: float
    dev_f1: float
    lr: float
    phase: str = "fit"

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


@dataclass
class NerTrainResult:
    checkpoint: Checkpoint
    history: list = field(default_factory=list)
    best_f1: float = 0.0
    best_epoch: int = 0


def _check_tags(sentences, num_tags):
    for sent in sentences:
        if sent.tag_ids is None:
            raise DataError("labeled sentences required for NER training")
        if len(sent.tag_ids) and int(sent.tag_ids.max()) >= num_tags:
            raise DataError(
                f"tag id {int(sent.tag_ids.max())} out of range for a {num_tags}-tag model")


def _run_epochs(model, sentences, config, optimizer, params, rng, widest):
    """One epoch of batched gradient steps; returns the mean batch loss."""
    total, batches = 0.0, 0
    for batch in batch_by_word_budget(sentences, config.word_budget, rng):
        char_mats = pad_chars(batch, widest)
        loss = model.batch_loss(batch, char_mats, training=True, rng=rng)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"non-finite NER loss in batch {batches}: lr={optimizer.lr}")
        backward(loss)
        model.encoder.zero_pad_char_grad()
        clip_global_norm(params.values(), config.clip_norm)
        optimizer.step()
        optimizer.zero_grad()
        total += value
        batches += 1
    return total / batches


def evaluate_f1(model: NerModel, sentences, tag_dict, widest_filter=None, chunk_size=64):
    """Exact-match report of the model's decoded tags against gold."""
    widest = widest_filter or model.encoder.config.max_filter_width
    sentences = list(sentences)
    gold, pred = [], []
    for lo in range(0, len(sentences), chunk_size):
        chunk = sentences[lo : lo + chunk_size]
        char_mats = pad_chars(chunk, widest)
        for sent, path in zip(chunk, model.decode_batch(chunk, char_mats)):
            gold.append(list(sent.tags))
            pred.append([tag_dict.id_to_tag[i] for i in path])
    return exact_match_prf(gold, pred)


def train_ner(model: NerModel, train_data, dev_data, tag_dict, config: TrainConfig,
              rng) -> NerTrainResult:
    """Fine-tune the tagger with dev-F1 plateau scheduling.

    Per epoch: shuffled word-budget batches, clip + Adam per batch, then
    exact-match F1 on dev. Non-improving epochs halve the learning rate;
    three in a row stop the run. The best-dev-F1 parameters win. With
    config.retrain_train_dev set, a final pass re-runs training from the
    initial (transferred) parameters on train+dev for the epoch count the
    best model needed.
    """
    train_data, dev_data = list(train_data), list(dev_data)
    if not train_data:
        raise ContractError("train_ner needs training sentences")
    _check_tags(train_data + dev_data, model.num_tags)
    params = model.named_parameters()
    initial_state = {name: p.data.copy() for name, p in params.items()}
    optimizer = Adam(params.values(), lr=config.lr, beta1=config.beta1,
                     beta2=config.beta2, eps=config.eps)
    schedule = PlateauSchedule(optimizer, config.lr_decay, config.patience,
                               higher_is_better=True)
    widest = model.encoder.config.max_filter_width
    model.encoder.config.dropout = config.dropout
    best_state = None
    result = NerTrainResult(checkpoint=None)

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        train_loss = _run_epochs(model, train_data, config, optimizer, params, rng, widest)
        report = evaluate_f1(model, dev_data, tag_dict, widest) if dev_data else None
        f1 = report.f1 if report else -train_loss
        lr_before = optimizer.lr
        if schedule.update(f1, epoch):
            best_state = {name: p.data.copy() for name, p in params.items()}
            result.best_f1 = report.f1 if report else 0.0
            result.best_epoch = epoch
        record = NerEpochRecord(epoch, time.perf_counter() - started, train_loss,
                                report.precision if report else 0.0,
                                report.recall if report else 0.0,
                                report.f1 if report else 0.0, lr_before)
        result.history.append(record)
        log.info("ner epoch %d: loss %.4f dev F1 %.4f lr %.2e",
                 epoch, train_loss, record.dev_f1, lr_before)
        if schedule.should_stop:
            break

    if best_state is not None:
        for name, p in params.items():
            p.data[...] = best_state[name]

    if config.retrain_train_dev and dev_data:
        for name, p in params.items():
            p.data[...] = initial_state[name]
        optimizer = Adam(params.values(), lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.eps)
        combined = train_data + dev_data
        for epoch in range(1, result.best_epoch + 1):
            started = time.perf_counter()
            train_loss = _run_epochs(model, combined, config, optimizer, params, rng, widest)
            result.history.append(NerEpochRecord(
                epoch, time.perf_counter() - started, train_loss, 0.0, 0.0, 0.0,
                optimizer.lr, phase="final"))

    result.checkpoint = model.to_checkpoint()
    return result
