"""Pretrained word-vector loading (word2vec text format) and embedding tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Vocab
from .errors import DataError
from .tensor import DEFAULT_DTYPE, Tensor


@dataclass
class EmbeddingTable:
    """Row-per-id embedding matrix; `matrix` is a trainable Tensor [V, D]."""

    matrix: Tensor
    dim: int
    trainable: bool = True


@dataclass
class EmbeddingLoadResult:
    table: EmbeddingTable
    found: int
    total: int

    @property
    def coverage(self) -> float:
        return self.found / self.total if self.total else 0.0


def _looks_like_header(parts) -> bool:
    if len(parts) != 2:
        return False
    try:
        int(parts[0]), int(parts[1])
    except ValueError:
        return False
    return True


def random_table(vocab_size: int, dim: int, rng, init_range: float = 0.005,
                 dtype=DEFAULT_DTYPE) -> EmbeddingTable:
    """Uniformly initialized table, used when no pretrained vectors are given."""
    data = rng.uniform(-init_range, init_range, size=(vocab_size, dim)).astype(dtype)
    return EmbeddingTable(Tensor(data, requires_grad=True), dim)


def load_word2vec_text(path: str, vocab: Vocab, rng, dim: int | None = None,
                       oov_range: float = 0.005, dtype=DEFAULT_DTYPE) -> EmbeddingLoadResult:
    """Build a word embedding table from a `word v1 ... vD` text file.

    An optional `count dim` header line is auto-detected. Rows for words
    found in the file are copied; every other row is drawn uniformly from
    (-oov_range, oov_range). Duplicate file entries keep the first vector.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()

    start = 0
    if lines and _looks_like_header(lines[0].split()):
        header_dim = int(lines[0].split()[1])
        if dim is not None and header_dim != dim:
            raise DataError(f"line 1: header dimension {header_dim} != configured {dim}")
        dim = header_dim
        start = 1

    matrix = None
    found = set()
    for lineno, line in enumerate(lines[start:], start=start + 1):
        parts = line.rstrip("\n").split(" ")
        parts = [p for p in parts if p]
        if not parts:
            continue
        word, values = parts[0], parts[1:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise DataError(f"line {lineno}: expected {dim} values, got {len(values)}")
        if word not in vocab or word in found:
            continue
        try:
            vec = np.array([float(v) for v in values], dtype=dtype)
        except ValueError as exc:
            raise DataError(f"line {lineno}: malformed float ({exc})") from None
        if matrix is None:
            matrix = rng.uniform(-oov_range, oov_range, size=(len(vocab), dim)).astype(dtype)
        matrix[vocab.get(word)] = vec
        found.add(word)

    if dim is None:
        raise DataError(f"{path!r} contains no embedding vectors")
    if matrix is None:
        matrix = rng.uniform(-oov_range, oov_range, size=(len(vocab), dim)).astype(dtype)

    table = EmbeddingTable(Tensor(matrix, requires_grad=True), dim)
    return EmbeddingLoadResult(table, found=len(found), total=len(vocab))
