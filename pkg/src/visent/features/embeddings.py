"""Pretrained word-vector loading (token + N space-separated floats per line)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Set, Union

import numpy as np

from ..errors import FormatError
from ..layers import EmbeddingTable


@dataclass(frozen=True)
class EmbeddingReport:
    """Coverage of the requested vocabulary by the embedding file."""

    vocab_size: int
    found: int
    dim: int

    @property
    def coverage(self) -> float:
        return self.found / self.vocab_size if self.vocab_size else 1.0

    @property
    def missing(self) -> int:
        return self.vocab_size - self.found


def load_embeddings(source: Union[str, Iterable[str]], vocab: Set[str],
                    dim: int = 300, seed: int = 0):
    """Build an EmbeddingTable for vocab from an embedding text file.

    Only vocab tokens present in the file get rows; absent vocab tokens
    resolve to the unk row at lookup time. Returns (table, report).
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            return _load(fh, vocab, dim, seed)
    return _load(source, vocab, dim, seed)


def _load(lines: Iterable[str], vocab: Set[str], dim: int, seed: int):
    vocab = set(vocab)
    vectors = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split(" ")
        token = parts[0]
        if len(parts) - 1 != dim:
            raise FormatError(
                f"line {lineno}: expected {dim} floats after the token, "
                f"got {len(parts) - 1}")
        if token not in vocab or token in vectors:
            continue
        try:
            vec = np.array([float(p) for p in parts[1:]], dtype=np.float32)
        except ValueError:
            raise FormatError(
                f"line {lineno}: non-numeric vector component") from None
        if not np.isfinite(vec).all():
            raise FormatError(f"line {lineno}: non-finite vector component")
        vectors[token] = vec
    tokens = sorted(vectors)
    rng = np.random.default_rng(seed)
    bound = 1.0 / float(np.sqrt(dim))
    rows = [np.zeros(dim, dtype=np.float32),
            rng.uniform(-bound, bound, size=dim).astype(np.float32)]
    rows.extend(vectors[t] for t in tokens)
    table = EmbeddingTable(tokens, np.stack(rows))
    report = EmbeddingReport(vocab_size=len(vocab), found=len(tokens), dim=dim)
    return table, report
