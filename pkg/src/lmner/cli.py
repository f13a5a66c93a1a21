"""Command-line entry point.

Subcommands: pretrain (language model), train (tagger), tag, eval, curve.
A JSON config file provides paths and hyperparameters; flags override the
file. Exit codes: 0 success, 1 usage/config, 2 data error, 3 numeric
failure. Set LMNER_LOG=debug|info|warning for verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .bilm import BilmModel, train_bilm
from .checkpoint import Checkpoint
from .config import RunConfig, load_config, require_paths
from .data import (CharVocab, TagDict, Vocab, bio_to_iobes, numericalize, read_conll)
from .embeddings import load_word2vec_text
from .errors import (CheckpointError, ConfigError, ContractError, DataError, LmnerError,
                     NumericError)
from .evaluate import exact_match_prf, interpolate_precision, learning_curve, pr_curve
from .fileio import atomic_write_text
from .ner import NerModel
from .tensor import make_rng
from .transfer import PretrainMode, build_ner_model, evaluate_f1, train_ner, transfer_weights

log = logging.getLogger(__name__)

LM_CHECKPOINT = "bilm.ckpt"
NER_CHECKPOINT = "ner.ckpt"
WORDS_FILE = "words.vocab"
CHARS_FILE = "chars.vocab"
TAGS_FILE = "tags.vocab"


def _setup_logging():
    level = os.environ.get("LMNER_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _maybe_word_table(cfg: RunConfig, vocab, rng):
    path = cfg.path("embeddings")
    if not path:
        return None
    result = load_word2vec_text(path, vocab, rng, dim=cfg.arch.word_dim,
                                oov_range=cfg.oov_range)
    log.info("embeddings: %d/%d vocabulary words found (%.1f%%)",
             result.found, result.total, 100 * result.coverage)
    return result.table


def _convert_scheme(sentences):
    """Public splits arrive in BIO; convert unless tags already look IOBES."""
    iobes = any(t[0] in "SE" and len(t) > 1 and t[1] == "-"
                for sent in sentences for t in sent.tags)
    if iobes:
        return
    for sent in sentences:
        sent.tags = bio_to_iobes(sent.tags, strict=False)


def run_pretrain(cfg: RunConfig):
    """Train the joint language model; writes checkpoint, vocabularies, log."""
    require_paths(cfg, ["unlabeled", "out_dir"], must_exist=["unlabeled"])
    out_dir = cfg.path("out_dir")
    os.makedirs(out_dir, exist_ok=True)
    rng = make_rng(cfg.seed)
    sentences = read_conll(cfg.path("unlabeled"), labeled=False)
    if not sentences:
        raise DataError(f"no sentences in {cfg.path('unlabeled')!r}")
    vocab = Vocab.from_sentences(sentences, min_count=cfg.min_count)
    char_vocab = CharVocab.from_sentences(sentences)
    numericalize(sentences, vocab, char_vocab, normalize_chars=cfg.normalize_chars)
    word_table = _maybe_word_table(cfg, vocab, rng)
    model = BilmModel(cfg.arch, len(vocab), len(char_vocab), rng, word_table=word_table)
    result = train_bilm(model, sentences, cfg.lm_train, rng)
    vocab.save(os.path.join(out_dir, WORDS_FILE))
    char_vocab.save(os.path.join(out_dir, CHARS_FILE))
    ckpt_path = os.path.join(out_dir, LM_CHECKPOINT)
    result.checkpoint.save(ckpt_path)
    atomic_write_text(os.path.join(out_dir, "lm_history.jsonl"),
                      "".join(r.to_json() + "\n" for r in result.history))
    return result, ckpt_path


def _load_training_data(cfg: RunConfig):
    train = read_conll(cfg.path("train", required=True), labeled=True)
    dev = read_conll(cfg.path("dev"), labeled=True) if cfg.path("dev") else []
    test = read_conll(cfg.path("test"), labeled=True) if cfg.path("test") else []
    for split in (train, dev, test):
        _convert_scheme(split)
    return train, dev, test


def run_train(cfg: RunConfig):
    """Build (and optionally pretrain-initialize) the tagger, fine-tune it,
    and write checkpoint + vocabularies + metrics history."""
    require_paths(cfg, ["train", "out_dir"], must_exist=["train"])
    out_dir = cfg.path("out_dir")
    os.makedirs(out_dir, exist_ok=True)
    rng = make_rng(cfg.seed)
    train, dev, test = _load_training_data(cfg)
    tag_dict = TagDict.from_sentences(train + dev)

    ckpt = None
    if cfg.mode != PretrainMode.NONE:
        lm_path = cfg.path("lm_checkpoint")
        if not lm_path:
            raise ConfigError(f"mode {cfg.mode.value!r} requires the lm_checkpoint path")
        ckpt = Checkpoint.load(lm_path)
        lm_dir = os.path.dirname(os.path.abspath(lm_path))
        vocab = Vocab.load(os.path.join(lm_dir, WORDS_FILE))
        char_vocab = CharVocab.load(os.path.join(lm_dir, CHARS_FILE))
    else:
        vocab = Vocab.from_sentences(train + dev, min_count=cfg.min_count)
        char_vocab = CharVocab.from_sentences(train + dev)

    for split in (train, dev, test):
        numericalize(split, vocab, char_vocab, tag_dict, normalize_chars=cfg.normalize_chars)

    word_table = None if ckpt is not None else _maybe_word_table(cfg, vocab, rng)
    model = build_ner_model(cfg.arch, len(vocab), len(char_vocab), len(tag_dict), rng,
                            head=cfg.head, crf_boundaries=cfg.crf_boundaries,
                            word_table=word_table)
    transfer_weights(ckpt, cfg.mode, model)
    result = train_ner(model, train, dev, tag_dict, cfg.ner_train, rng)

    vocab.save(os.path.join(out_dir, WORDS_FILE))
    char_vocab.save(os.path.join(out_dir, CHARS_FILE))
    tag_dict.save(os.path.join(out_dir, TAGS_FILE))
    result.checkpoint.save(os.path.join(out_dir, NER_CHECKPOINT))
    atomic_write_text(os.path.join(out_dir, "ner_history.jsonl"),
                      "".join(r.to_json() + "\n" for r in result.history))

    dev_report = evaluate_f1(model, dev, tag_dict) if dev else None
    test_report = evaluate_f1(model, test, tag_dict) if test else None
    return model, result, tag_dict, dev_report, test_report


def load_tagger(model_dir: str):
    ckpt = Checkpoint.load(os.path.join(model_dir, NER_CHECKPOINT))
    model = NerModel.from_checkpoint(ckpt)
    vocab = Vocab.load(os.path.join(model_dir, WORDS_FILE))
    char_vocab = CharVocab.load(os.path.join(model_dir, CHARS_FILE))
    tag_dict = TagDict.load(os.path.join(model_dir, TAGS_FILE))
    return model, vocab, char_vocab, tag_dict


def tag_file(cfg: RunConfig, model_dir: str, input_path: str, output_path: str) -> int:
    """Viterbi-tag a token-only file; returns the sentence count."""
    from .data import pad_chars

    model, vocab, char_vocab, tag_dict = load_tagger(model_dir)
    sentences = read_conll(input_path, labeled=False)
    numericalize(sentences, vocab, char_vocab, normalize_chars=cfg.normalize_chars)
    widest = model.encoder.config.max_filter_width
    blocks = []
    for sent in sentences:
        chars = pad_chars([sent], widest)[0]
        path = model.decode(sent.word_ids, chars)
        blocks.append("".join(f"{tok}\t{tag_dict.id_to_tag[i]}\n"
                              for tok, i in zip(sent.tokens, path)))
    atomic_write_text(output_path, "\n".join(blocks) + ("\n" if blocks else ""))
    return len(sentences)


def eval_files(gold_path: str, pred_path: str):
    gold = read_conll(gold_path, labeled=True)
    pred = read_conll(pred_path, labeled=True)
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    for idx, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise DataError(f"sentence {idx}: length mismatch ({len(g)} vs {len(p)})")
    return exact_match_prf([s.tags for s in gold], [s.tags for s in pred])


def run_pr_curve(cfg: RunConfig, model_dir: str, out_path: str):
    data_path = cfg.path("test") or cfg.path("dev")
    if not data_path:
        raise ConfigError("curve needs a test (or dev) path in the config")
    model, vocab, char_vocab, tag_dict = load_tagger(model_dir)
    sentences = read_conll(data_path, labeled=True)
    _convert_scheme(sentences)
    numericalize(sentences, vocab, char_vocab, tag_dict, normalize_chars=cfg.normalize_chars)
    thresholds = np.linspace(0.0, 1.0, 51)
    points = pr_curve(model, sentences, tag_dict, thresholds)
    smoothed = interpolate_precision(points)
    atomic_write_text(out_path, "".join(f"{r:.6f} {p:.6f}\n" for r, p in smoothed))
    return points, smoothed


def run_learning_curve(cfg: RunConfig, fractions, out_path: str):
    """Re-train on nested subsamples of the training split; two-column output."""
    require_paths(cfg, ["train", "out_dir"], must_exist=["train"])
    train, dev, test = _load_training_data(cfg)
    eval_split = test or dev
    if not eval_split:
        raise ConfigError("learning curve needs a test or dev path")
    tag_dict = TagDict.from_sentences(train + dev)
    ckpt = None
    if cfg.mode != PretrainMode.NONE:
        lm_path = cfg.path("lm_checkpoint")
        if not lm_path:
            raise ConfigError(f"mode {cfg.mode.value!r} requires the lm_checkpoint path")
        ckpt = Checkpoint.load(lm_path)
        lm_dir = os.path.dirname(os.path.abspath(lm_path))
        vocab = Vocab.load(os.path.join(lm_dir, WORDS_FILE))
        char_vocab = CharVocab.load(os.path.join(lm_dir, CHARS_FILE))
    else:
        vocab = Vocab.from_sentences(train + dev, min_count=cfg.min_count)
        char_vocab = CharVocab.from_sentences(train + dev)
    for split in (train, dev, eval_split):
        numericalize(split, vocab, char_vocab, tag_dict, normalize_chars=cfg.normalize_chars)

    def train_fn(subset):
        rng = make_rng(cfg.seed)
        word_table = None if ckpt is not None else _maybe_word_table(cfg, vocab, rng)
        model = build_ner_model(cfg.arch, len(vocab), len(char_vocab), len(tag_dict), rng,
                                head=cfg.head, crf_boundaries=cfg.crf_boundaries,
                                word_table=word_table)
        transfer_weights(ckpt, cfg.mode, model)
        train_ner(model, subset, dev, tag_dict, cfg.ner_train, rng)
        return evaluate_f1(model, eval_split, tag_dict).f1

    rows = learning_curve(train_fn, train, fractions, make_rng(cfg.seed))
    atomic_write_text(out_path, "".join(f"{frac:.4f} {f1:.6f}\n" for frac, f1 in rows))
    return rows


# -- argument parsing -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out-dir", dest="out_dir")


def build_parser() -> _Parser:
    parser = _Parser(prog="lmner", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train the bidirectional language model")
    _add_common(p)
    p.add_argument("--unlabeled", help="unlabeled corpus path override")
    p.add_argument("--embeddings", help="word2vec text file override")

    p = sub.add_parser("train", help="train the tagger, optionally from LM weights")
    _add_common(p)
    p.add_argument("--mode", choices=[m.value for m in PretrainMode])
    p.add_argument("--head", choices=["softmax", "crf"])
    p.add_argument("--lm-checkpoint", dest="lm_checkpoint")
    p.add_argument("--train", help="training data override")
    p.add_argument("--dev", help="development data override")
    p.add_argument("--test", help="test data override")
    p.add_argument("--embeddings")

    p = sub.add_parser("tag", help="tag a token-only file with a trained model")
    _add_common(p)
    p.add_argument("--model-dir", dest="model_dir", help="defaults to out_dir")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("eval", help="exact-match scores of predictions vs gold")
    p.add_argument("gold")
    p.add_argument("pred")

    p = sub.add_parser("curve", help="precision-recall or learning curve files")
    _add_common(p)
    p.add_argument("--kind", choices=["pr", "learning"], default="pr")
    p.add_argument("--model-dir", dest="model_dir")
    p.add_argument("--mode", choices=[m.value for m in PretrainMode])
    p.add_argument("--head", choices=["softmax", "crf"])
    p.add_argument("--lm-checkpoint", dest="lm_checkpoint")
    p.add_argument("--fractions", default="0.25,0.5,1.0")
    return parser


def _overrides(args) -> dict:
    keys = ("seed", "mode", "head", "out_dir", "lm_checkpoint", "train", "dev", "test",
            "unlabeled", "embeddings")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.command == "eval":
            report = eval_files(args.gold, args.pred)
            for line in report.to_records():
                print(line)
            print(report.to_table())
            return 0
        cfg = load_config(getattr(args, "config", None), _overrides(args))
        if args.command == "pretrain":
            result, ckpt_path = run_pretrain(cfg)
            print(f"pretrain done: best ppl {result.best_ppl:.3f} "
                  f"(epoch {result.best_epoch}), checkpoint {ckpt_path}")
        elif args.command == "train":
            model, result, tag_dict, dev_report, test_report = run_train(cfg)
            print(f"train done: best dev F1 {result.best_f1:.4f} (epoch {result.best_epoch})")
            for name, report in (("dev", dev_report), ("test", test_report)):
                if report:
                    print(f"{name}: P {report.precision:.4f} R {report.recall:.4f} "
                          f"F1 {report.f1:.4f}")
        elif args.command == "tag":
            model_dir = args.model_dir or cfg.path("out_dir", required=True)
            count = tag_file(cfg, model_dir, args.input, args.output)
            print(f"tagged {count} sentences -> {args.output}")
        elif args.command == "curve":
            out_dir = cfg.path("out_dir", required=True)
            os.makedirs(out_dir, exist_ok=True)
            if args.kind == "pr":
                model_dir = args.model_dir or out_dir
                out_path = os.path.join(out_dir, "pr_curve.txt")
                points, _ = run_pr_curve(cfg, model_dir, out_path)
                print(f"pr curve with {len(points)} thresholds -> {out_path}")
            else:
                fractions = [float(f) for f in args.fractions.split(",")]
                out_path = os.path.join(out_dir, "learning_curve.txt")
                rows = run_learning_curve(cfg, fractions, out_path)
                print(f"learning curve {rows} -> {out_path}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, CheckpointError, ContractError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
