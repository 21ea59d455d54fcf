"""Vocabulary, sentence encoding and perplexity bookkeeping.

Corpora are UTF-8 text, one whitespace-tokenized sentence per line.  An
encoded sentence is ``[<s>, w_1, ..., w_n, </s>]``: the model reads every id
but the last and predicts every id but the first, so ``</s>`` counts towards
perplexity and ``<s>`` never does.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .exceptions import DomainError, IngestionError, VocabularyError

UNK, BOS, EOS = "<unk>", "<s>", "</s>"
SPECIALS = (UNK, BOS, EOS)


class Vocabulary:
    """Bijection between tokens and dense ids; the specials take ids 0, 1, 2."""

    def __init__(self, tokens: Iterable[str]):
        tokens = list(tokens)
        if tuple(tokens[:3]) != SPECIALS:
            raise VocabularyError(f"vocabulary must start with {SPECIALS}, got {tokens[:3]}")
        index = {}
        for i, tok in enumerate(tokens):
            if not tok or any(ch.isspace() for ch in tok):
                raise VocabularyError(f"invalid token {tok!r} at id {i}")
            if tok in index:
                raise VocabularyError(f"duplicate token {tok!r} at ids {index[tok]} and {i}")
            index[tok] = i
        self._tokens = tuple(tokens)
        self._index = index

    unk_id, bos_id, eos_id = 0, 1, 2

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, tok: str) -> bool:
        return tok in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def id(self, tok: str) -> int:
        return self._index.get(tok, self.unk_id)

    def token(self, i: int) -> str:
        if not 0 <= i < len(self._tokens):
            raise VocabularyError(f"id {i} outside vocabulary of size {len(self)}")
        return self._tokens[i]

    def to_text(self) -> str:
        return "".join(t + "\n" for t in self._tokens)

    @property
    def hash(self) -> str:
        """SHA-256 of the on-disk representation."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        return cls(text.split("\n")[:-1] if text.endswith("\n") else text.split("\n"))


def build_vocab(lines: Iterable[str], max_size: int | None = None, min_count: int = 1) -> Vocabulary:
    """Keep the most frequent tokens (specials excluded from ``max_size``).

    Ties are broken by first occurrence.  Tokens spelled like a special symbol
    are folded into it.
    """
    if max_size is not None and max_size < 0:
        raise DomainError("max_size must be non-negative")
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    n_lines = 0
    for line in lines:
        for tok in line.split():
            if tok in SPECIALS:
                continue
            if tok not in first:
                first[tok] = len(first)
            counts[tok] += 1
        n_lines += 1 if line.split() else 0
    if n_lines == 0:
        raise IngestionError("cannot build a vocabulary from an empty corpus")
    ranked = sorted((t for t in counts if counts[t] >= min_count), key=lambda t: (-counts[t], first[t]))
    if max_size is not None:
        ranked = ranked[:max_size]
    return Vocabulary(SPECIALS + tuple(ranked))


@dataclass(frozen=True)
class EncodedSentence:
    ids: np.ndarray

    def __post_init__(self):
        if self.ids.ndim != 1 or self.ids.shape[0] < 2:
            raise IngestionError("an encoded sentence needs at least <s> and </s>")

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def inputs(self) -> np.ndarray:
        return self.ids[:-1]

    @property
    def targets(self) -> np.ndarray:
        return self.ids[1:]

    @property
    def n_targets(self) -> int:
        return self.ids.shape[0] - 1


def encode(vocab: Vocabulary, line: str) -> EncodedSentence | None:
    """Encode one line; ``None`` signals an empty line to be skipped."""
    words = line.split()
    if not words:
        return None
    ids = [vocab.bos_id] + [vocab.id(w) for w in words] + [vocab.eos_id]
    return EncodedSentence(np.asarray(ids, dtype=np.intp))


def decode(vocab: Vocabulary, sentence: EncodedSentence) -> list[str]:
    """Surface words between the boundary symbols."""
    return [vocab.token(int(i)) for i in sentence.ids[1:-1]]


@dataclass
class EncodedCorpus:
    sentences: list[EncodedSentence]
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]


def encode_corpus(vocab: Vocabulary, lines: Iterable[str]) -> EncodedCorpus:
    sentences, skipped = [], 0
    for line in lines:
        enc = encode(vocab, line)
        if enc is None:
            skipped += 1
        else:
            sentences.append(enc)
    return EncodedCorpus(sentences, skipped)


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


@dataclass(frozen=True)
class CorpusStats:
    n_sentences: int
    n_tokens: int
    mean_length: float  # words per sentence, boundary symbols excluded


def corpus_stats(sentences: Iterable[EncodedSentence]) -> CorpusStats:
    sentences = list(sentences)
    n_tokens = sum(s.n_targets for s in sentences)
    words = sum(len(s) - 2 for s in sentences)
    return CorpusStats(len(sentences), n_tokens, words / len(sentences) if sentences else 0.0)


def perplexity(total_nll: float, token_count: int) -> float:
    """``exp(total_nll / token_count)`` with the NLL in nats."""
    if token_count < 1:
        raise DomainError("perplexity needs at least one predicted token")
    return math.exp(total_nll / token_count)
