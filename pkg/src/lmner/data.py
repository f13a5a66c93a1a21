"""Corpus handling: CoNLL files, token normalization, vocabularies,
BIO/IOBES conversion, and word-budget batching."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError
from .fileio import atomic_write_text

log = logging.getLogger(__name__)

PAD, UNK, NUM, BOS, EOS = "<pad>", "<unk>", "<num>", "<bos>", "<eos>"
RESERVED = (PAD, UNK, NUM, BOS, EOS)
PAD_ID, UNK_ID, NUM_ID, BOS_ID, EOS_ID = range(5)

CHAR_RESERVED = (PAD, UNK)
CHAR_PAD_ID, CHAR_UNK_ID = 0, 1

# Digits with internal . , - + separators only ("12.5", "1,000", "3-4").
_NUMBER_RE = re.compile(r"^\d+([.,+\-]\d+)*$")


def normalize_token(token: str) -> str:
    """Map number-like tokens to the NUM sentinel; leave everything else
    (including case) untouched. Idempotent."""
    if not token:
        raise ContractError("cannot normalize an empty token")
    return NUM if _NUMBER_RE.match(token) else token


@dataclass
class Sentence:
    """One pre-tokenized sentence, optionally labeled.

    word_ids / char_ids / tag_ids are filled by numericalize() once the
    vocabularies exist; char_ids keeps one id list per token.
    """

    tokens: list
    tags: list | None = None
    word_ids: np.ndarray | None = None
    char_ids: list | None = None
    tag_ids: np.ndarray | None = None

    def __len__(self):
        return len(self.tokens)


def parse_conll(text: str, labeled: bool = True) -> list:
    """Parse `token<TAB or space>tag` lines into sentences.

    Blank lines separate sentences; comment lines (leading '#') and
    '-DOCSTART-' document markers are skipped. In unlabeled mode only the
    first field of each line is kept.
    """
    sentences = []
    tokens, tags = [], []

    def flush():
        if tokens:
            sentences.append(Sentence(list(tokens), list(tags) if labeled else None))
            tokens.clear()
            tags.clear()

    for lineno, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip()
        if not stripped:
            flush()
            continue
        if stripped.startswith("#") or stripped.startswith("-DOCSTART-"):
            continue
        parts = stripped.split()
        if labeled:
            if len(parts) < 2:
                raise DataError(f"line {lineno}: token {parts[0]!r} has no tag")
            tokens.append(parts[0])
            tags.append(parts[-1])
        else:
            tokens.append(parts[0])
    flush()
    return sentences


def read_conll(path: str, labeled: bool = True) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_conll(fh.read(), labeled=labeled)


class Vocab:
    """Word vocabulary with fixed reserved ids (PAD, UNK, NUM, BOS, EOS)."""

    def __init__(self, words):
        self.id_to_word = list(RESERVED) + [w for w in words if w not in RESERVED]
        self.word_to_id = {w: i for i, w in enumerate(self.id_to_word)}
        if len(self.word_to_id) != len(self.id_to_word):
            raise DataError("duplicate words in vocabulary")

    def __len__(self):
        return len(self.id_to_word)

    def __contains__(self, word):
        return word in self.word_to_id

    def get(self, word: str) -> int:
        return self.word_to_id.get(word, UNK_ID)

    @classmethod
    def from_sentences(cls, sentences, min_count: int = 1) -> "Vocab":
        counts = {}
        for sent in sentences:
            for token in sent.tokens:
                word = normalize_token(token)
                counts[word] = counts.get(word, 0) + 1
        kept = [w for w, c in counts.items() if c >= min_count and w not in RESERVED]
        kept.sort(key=lambda w: (-counts[w], w))
        return cls(kept)

    def save(self, path: str) -> None:
        atomic_write_text(path, "".join(w + "\n" for w in self.id_to_word))

    @classmethod
    def load(cls, path: str) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            words = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        if tuple(words[:5]) != RESERVED:
            raise DataError(f"{path!r} does not start with the reserved sentinels")
        return cls(words[5:])


class CharVocab:
    """Character vocabulary; id 0 is PAD (pinned to a zero embedding row),
    id 1 is UNK for characters unseen at training time."""

    def __init__(self, chars):
        self.id_to_char = list(CHAR_RESERVED) + [c for c in chars if c not in CHAR_RESERVED]
        self.char_to_id = {c: i for i, c in enumerate(self.id_to_char)}

    def __len__(self):
        return len(self.id_to_char)

    def get(self, ch: str) -> int:
        return self.char_to_id.get(ch, CHAR_UNK_ID)

    @classmethod
    def from_sentences(cls, sentences) -> "CharVocab":
        seen = set()
        for sent in sentences:
            for token in sent.tokens:
                seen.update(token)
        return cls(sorted(seen))

    def save(self, path: str) -> None:
        atomic_write_text(path, "".join(c + "\n" for c in self.id_to_char))

    @classmethod
    def load(cls, path: str) -> "CharVocab":
        with open(path, encoding="utf-8") as fh:
            chars = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        if tuple(chars[:2]) != CHAR_RESERVED:
            raise DataError(f"{path!r} does not start with the reserved sentinels")
        return cls(chars[2:])


_TAG_RE = re.compile(r"^[SBIE]-(.+)$")


class TagDict:
    """Tag dictionary over IOBES-expanded labels plus O."""

    def __init__(self, tags):
        ordered = []
        for tag in tags:
            if tag != "O" and not _TAG_RE.match(tag):
                raise DataError(f"tag {tag!r} is not O or {{S,B,I,E}}-<type>")
            if tag not in ordered:
                ordered.append(tag)
        if "O" not in ordered:
            ordered.insert(0, "O")
        self.id_to_tag = sorted(ordered, key=lambda t: (t != "O", t))
        self.tag_to_id = {t: i for i, t in enumerate(self.id_to_tag)}

    def __len__(self):
        return len(self.id_to_tag)

    def get(self, tag: str) -> int:
        try:
            return self.tag_to_id[tag]
        except KeyError:
            raise DataError(f"tag {tag!r} not in tag dictionary") from None

    @classmethod
    def from_sentences(cls, sentences) -> "TagDict":
        tags = set()
        for sent in sentences:
            if sent.tags is None:
                raise DataError("cannot build a tag dictionary from unlabeled sentences")
            tags.update(sent.tags)
        return cls(sorted(tags))

    @classmethod
    def from_entity_types(cls, types) -> "TagDict":
        tags = ["O"]
        for typ in types:
            tags.extend(f"{p}-{typ}" for p in "SBIE")
        return cls(tags)

    def save(self, path: str) -> None:
        atomic_write_text(path, "".join(t + "\n" for t in self.id_to_tag))

    @classmethod
    def load(cls, path: str) -> "TagDict":
        with open(path, encoding="utf-8") as fh:
            return cls([line.strip() for line in fh if line.strip()])


def _split_bio(tag: str, position: int):
    if len(tag) < 3 or tag[0] not in "BI" or tag[1] != "-":
        raise DataError(f"position {position}: {tag!r} is not a BIO tag")
    return tag[0], tag[2:]


def bio_to_iobes(tags, strict: bool = True) -> list:
    """Convert BIO tags to IOBES, preserving the chunk set exactly.

    An I- that does not continue a chunk of the same type is an error in
    strict mode; in lenient mode it is repaired to B- (and counted in a
    log message).
    """
    effective = []
    repairs = 0
    prev_type = None  # entity type continuing from the previous position
    for i, tag in enumerate(tags):
        if tag == "O":
            effective.append(("O", None))
            prev_type = None
            continue
        prefix, typ = _split_bio(tag, i)
        if prefix == "I" and typ != prev_type:
            if strict:
                raise DataError(f"position {i}: I-{typ} does not continue a {typ} chunk")
            prefix = "B"
            repairs += 1
        effective.append((prefix, typ))
        prev_type = typ
    if repairs:
        log.warning("repaired %d invalid BIO transition(s) as B-", repairs)

    out = []
    for i, (prefix, typ) in enumerate(effective):
        if prefix == "O":
            out.append("O")
            continue
        nxt = effective[i + 1] if i + 1 < len(effective) else ("O", None)
        continues = nxt[0] == "I" and nxt[1] == typ
        if prefix == "B":
            out.append(f"B-{typ}" if continues else f"S-{typ}")
        else:
            out.append(f"I-{typ}" if continues else f"E-{typ}")
    return out


def numericalize(sentences, vocab: Vocab, char_vocab: CharVocab, tag_dict: TagDict | None = None,
                 normalize_chars: bool = False) -> None:
    """Fill word/char/tag ids in place. The word id of a number-like token
    is NUM; its characters stay raw unless normalize_chars is set."""
    for sent in sentences:
        sent.word_ids = np.array([vocab.get(normalize_token(t)) for t in sent.tokens],
                                 dtype=np.int64)
        surfaces = [normalize_token(t) if normalize_chars else t for t in sent.tokens]
        sent.char_ids = [[char_vocab.get(c) for c in s] for s in surfaces]
        if tag_dict is not None and sent.tags is not None:
            sent.tag_ids = np.array([tag_dict.get(t) for t in sent.tags], dtype=np.int64)


def batch_by_word_budget(sentences, budget_words: int, rng=None) -> list:
    """Greedy word-budget batching: shuffle (when rng given), then close a
    batch as soon as the next sentence would push it over the budget."""
    longest = max((len(s) for s in sentences), default=0)
    if longest > budget_words:
        raise ContractError(
            f"sentence of length {longest} exceeds the word budget {budget_words}")
    order = list(sentences)
    if rng is not None:
        rng.shuffle(order)
    batches = []
    current, current_words = [], 0
    for sent in order:
        if current and current_words + len(sent) > budget_words:
            batches.append(current)
            current, current_words = [], 0
        current.append(sent)
        current_words += len(sent)
    if current:
        batches.append(current)
    return batches


def pad_chars(batch, min_width: int) -> list:
    """Right-pad every word's char ids to a common length.

    The length is the longest word in the batch, floored at the widest
    CNN filter so valid convolution is defined for every word. Returns
    one [n_words, L] int matrix per sentence.
    """
    longest = 0
    for sent in batch:
        if sent.char_ids is None:
            raise ContractError("pad_chars needs numericalized sentences")
        for ids in sent.char_ids:
            longest = max(longest, len(ids))
    width = max(longest, min_width)
    matrices = []
    for sent in batch:
        mat = np.full((len(sent.char_ids), width), CHAR_PAD_ID, dtype=np.int64)
        for row, ids in enumerate(sent.char_ids):
            mat[row, : len(ids)] = ids
        matrices.append(mat)
    return matrices
