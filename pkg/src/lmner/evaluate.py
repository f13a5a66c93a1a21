"""Exact-match chunk evaluation and the analysis harnesses built on it."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import pad_chars
from .errors import ContractError, DataError
from .ner import crf_marginals, viterbi

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Chunk:
    start: int
    end: int  # inclusive
    entity_type: str


def _split_tag(tag: str, position: int):
    if len(tag) < 3 or tag[0] not in "SBIE" or tag[1] != "-":
        raise DataError(f"position {position}: {tag!r} is not an IOBES tag")
    return tag[0], tag[2:]


def extract_chunks(tags) -> list:
    """Typed spans from an IOBES sequence, with deterministic repair.

    Malformed sequences never raise: an I/E that does not continue an
    open chunk of its type starts a new one, and chunks left open are
    closed at the last position they reached. Repairs are counted and
    logged.
    """
    chunks = []
    open_type, open_start = None, None
    repairs = 0

    def close(end):
        nonlocal open_type
        if open_type is not None:
            chunks.append(Chunk(open_start, end, open_type))
            open_type = None

    for i, tag in enumerate(tags):
        if tag == "O":
            close(i - 1)
            continue
        prefix, typ = _split_tag(tag, i)
        if prefix == "S":
            close(i - 1)
            chunks.append(Chunk(i, i, typ))
        elif prefix == "B":
            if open_type is not None:
                repairs += 1
            close(i - 1)
            open_type, open_start = typ, i
        elif prefix == "I":
            if open_type != typ:
                repairs += 1
                close(i - 1)
                open_type, open_start = typ, i
        else:  # E
            if open_type == typ:
                close(i)
            else:
                repairs += 1
                close(i - 1)
                chunks.append(Chunk(i, i, typ))
    close(len(tags) - 1)
    if repairs:
        log.debug("repaired %d malformed IOBES transition(s)", repairs)
    return chunks


def _prf(correct: int, predicted: int, gold: int):
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    gold_count: int
    pred_count: int
    correct_count: int
    per_type: dict = field(default_factory=dict)

    def to_records(self) -> list:
        lines = [
            f"precision\t{self.precision:.6f}",
            f"recall\t{self.recall:.6f}",
            f"f1\t{self.f1:.6f}",
            f"gold\t{self.gold_count}",
            f"predicted\t{self.pred_count}",
            f"correct\t{self.correct_count}",
        ]
        for typ in sorted(self.per_type):
            p, r, f, g, pr, c = self.per_type[typ]
            lines.append(f"type.{typ}\tP={p:.6f} R={r:.6f} F1={f:.6f} gold={g} pred={pr} correct={c}")
        return lines

    def to_table(self) -> str:
        rows = [("type", "prec", "rec", "f1", "gold", "pred", "correct"),
                ("ALL", f"{self.precision:.4f}", f"{self.recall:.4f}", f"{self.f1:.4f}",
                 str(self.gold_count), str(self.pred_count), str(self.correct_count))]
        for typ in sorted(self.per_type):
            p, r, f, g, pr, c = self.per_type[typ]
            rows.append((typ, f"{p:.4f}", f"{r:.4f}", f"{f:.4f}", str(g), str(pr), str(c)))
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows)


def exact_match_prf(gold_tag_seqs, pred_tag_seqs) -> EvalReport:
    """Micro-averaged precision/recall/F1 over exact (start, end, type) matches."""
    if len(gold_tag_seqs) != len(pred_tag_seqs):
        raise DataError(f"{len(gold_tag_seqs)} gold vs {len(pred_tag_seqs)} predicted sentences")
    gold_n, pred_n, correct_n = 0, 0, 0
    by_type = {}
    for idx, (gold, pred) in enumerate(zip(gold_tag_seqs, pred_tag_seqs)):
        if len(gold) != len(pred):
            raise DataError(f"sentence {idx}: {len(gold)} gold tags vs {len(pred)} predicted")
        gold_chunks = set(extract_chunks(gold))
        pred_chunks = set(extract_chunks(pred))
        matched = gold_chunks & pred_chunks
        gold_n += len(gold_chunks)
        pred_n += len(pred_chunks)
        correct_n += len(matched)
        for chunk in gold_chunks:
            by_type.setdefault(chunk.entity_type, [0, 0, 0])[0] += 1
        for chunk in pred_chunks:
            by_type.setdefault(chunk.entity_type, [0, 0, 0])[1] += 1
        for chunk in matched:
            by_type[chunk.entity_type][2] += 1
    p, r, f = _prf(correct_n, pred_n, gold_n)
    per_type = {}
    for typ, (g, pr_count, c) in by_type.items():
        tp, tr, tf = _prf(c, pr_count, g)
        per_type[typ] = (tp, tr, tf, g, pr_count, c)
    return EvalReport(p, r, f, gold_n, pred_n, correct_n, per_type)


# -- precision-recall curve --------------------------------------------------------


@dataclass
class PrPoint:
    threshold: float
    precision: float
    recall: float


def _decode_with_confidence(model, sent, char_matrix, tag_dict):
    """Viterbi path with one confidence per chunk: the geometric mean of
    the CRF posterior marginals of the chunk's decoded tags."""
    d = model.emissions(sent.word_ids, char_matrix, training=False)
    path, _ = viterbi(d, model.crf)
    marginals = crf_marginals(d, model.crf)
    tags = [tag_dict.id_to_tag[i] for i in path]
    scored = []
    for chunk in extract_chunks(tags):
        logs = [math.log(max(marginals[t, path[t]], 1e-300))
                for t in range(chunk.start, chunk.end + 1)]
        scored.append((chunk, math.exp(sum(logs) / len(logs))))
    return tags, scored


def pr_curve(model, sentences, tag_dict, thresholds, widest_filter=None) -> list:
    """Exact-match precision/recall per confidence threshold (unsmoothed).

    Predicted chunks whose confidence falls below the threshold are
    dropped; threshold 0 therefore reproduces plain decoding.
    """
    if model.crf is None:
        raise ContractError("pr_curve needs a CRF head (confidences come from its marginals)")
    widest = widest_filter or model.encoder.config.max_filter_width
    gold_chunks_per_sent = []
    scored_per_sent = []
    for sent in sentences:
        chars = pad_chars([sent], widest)[0]
        _, scored = _decode_with_confidence(model, sent, chars, tag_dict)
        scored_per_sent.append(scored)
        gold_chunks_per_sent.append(set(extract_chunks(sent.tags)))
    gold_total = sum(len(g) for g in gold_chunks_per_sent)
    points = []
    for threshold in thresholds:
        pred_n, correct_n = 0, 0
        for gold, scored in zip(gold_chunks_per_sent, scored_per_sent):
            kept = [chunk for chunk, conf in scored if conf >= threshold]
            pred_n += len(kept)
            correct_n += sum(1 for chunk in kept if chunk in gold)
        p, r, _ = _prf(correct_n, pred_n, gold_total)
        points.append(PrPoint(float(threshold), p, r))
    return points


def interpolate_precision(points) -> list:
    """Smoothed curve: precision at recall r is the best precision achieved
    at any recall >= r. Returns (recall, precision) pairs sorted by recall,
    with precision monotone non-increasing."""
    ordered = sorted(points, key=lambda pt: pt.recall)
    out = []
    best = 0.0
    for pt in reversed(ordered):
        best = max(best, pt.precision)
        out.append((pt.recall, best))
    out.reverse()
    return out


# -- learning curve ---------------------------------------------------------------


def learning_curve(train_fn, train_sentences, fractions, rng) -> list:
    """Train on nested-size subsamples and report (fraction, F1) rows.

    train_fn(subset) must run a full training + evaluation cycle and
    return the resulting F1; seeding inside train_fn keeps rows comparable.
    """
    results = []
    n = len(train_sentences)
    for fraction in fractions:
        if not 0 < fraction <= 1:
            raise ContractError(f"fraction {fraction} outside (0, 1]")
        if fraction == 1.0:
            subset = list(train_sentences)
        else:
            k = max(1, int(round(fraction * n)))
            idx = sorted(rng.choice(n, size=k, replace=False))
            subset = [train_sentences[i] for i in idx]
        results.append((fraction, float(train_fn(subset))))
    return results


# -- seen/unseen entity analysis ------------------------------------------------------


@dataclass
class UnseenReport:
    seen_total: int
    unseen_total: int
    seen_correct: int
    unseen_correct: int


def unseen_entity_report(train_sentences, test_sentences, pred_tag_seqs) -> UnseenReport:
    """Partition unique gold test-entity surface strings by whether they
    occur as training mentions; a string counts correct when at least one
    of its gold occurrences is matched exactly."""
    train_mentions = set()
    for sent in train_sentences:
        for chunk in extract_chunks(sent.tags):
            train_mentions.add(" ".join(sent.tokens[chunk.start : chunk.end + 1]))
    occurrences = {}
    for idx, sent in enumerate(test_sentences):
        for chunk in extract_chunks(sent.tags):
            surface = " ".join(sent.tokens[chunk.start : chunk.end + 1])
            occurrences.setdefault(surface, []).append((idx, chunk))
    pred_chunks = [set(extract_chunks(tags)) for tags in pred_tag_seqs]
    seen_total = unseen_total = seen_correct = unseen_correct = 0
    for surface, occs in occurrences.items():
        seen = surface in train_mentions
        correct = any(chunk in pred_chunks[idx] for idx, chunk in occs)
        if seen:
            seen_total += 1
            seen_correct += int(correct)
        else:
            unseen_total += 1
            unseen_correct += int(correct)
    return UnseenReport(seen_total, unseen_total, seen_correct, unseen_correct)
