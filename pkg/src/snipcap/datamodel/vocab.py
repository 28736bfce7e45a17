"""Tokenizer and vocabulary.

Normalization is a declared convention: lowercase, split into runs of
alphanumerics (apostrophes allowed inside a word) or single punctuation
characters. Reserved ids 0-3 are PAD, BOS, EOS, UNK; the vocabulary
file stores one non-reserved token per line so id = line_number - 1 + 4.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")
NUM_RESERVED = len(RESERVED)

MAX_SENTENCE_TOKENS = 150

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)*|[^\sa-z0-9]")


class VocabError(ValueError):
    pass


def normalize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]  # non-reserved; token i has id i + NUM_RESERVED

    def __post_init__(self):
        index = {tok: i + NUM_RESERVED for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise VocabError("duplicate tokens in vocabulary")
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.tokens) + NUM_RESERVED

    def id_of(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        if 0 <= token_id < NUM_RESERVED:
            return RESERVED[token_id]
        if NUM_RESERVED <= token_id < self.size:
            return self.tokens[token_id - NUM_RESERVED]
        raise VocabError(f"token id {token_id} outside vocabulary of size {self.size}")

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(tok + "\n" for tok in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(lines))


def build_vocab(corpus: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Tokens with count >= min_count, ordered by frequency desc then lexicographic."""
    counts = Counter()
    seen_any = False
    for text in corpus:
        seen_any = True
        counts.update(normalize(text))
    if not seen_any:
        raise VocabError("cannot build a vocabulary from an empty corpus")
    kept = [(tok, c) for tok, c in counts.items() if c >= min_count]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    return Vocabulary(tuple(tok for tok, _ in kept))


def tokenize(text: str, vocab: Vocabulary, max_len: int = MAX_SENTENCE_TOKENS) -> list[int]:
    """Normalize, map to ids (OOV -> UNK), truncate interior to max_len, wrap in BOS/EOS."""
    ids = [vocab.id_of(tok) for tok in normalize(text)][:max_len]
    return [BOS_ID] + ids + [EOS_ID]


def detokenize(ids: Sequence[int], vocab: Vocabulary) -> str:
    """Inverse of tokenize up to normalization: space-joined tokens, reserved ids dropped."""
    words = []
    for i in ids:
        if i in (PAD_ID, BOS_ID, EOS_ID):
            continue
        words.append(vocab.token_of(i))
    return " ".join(words)
