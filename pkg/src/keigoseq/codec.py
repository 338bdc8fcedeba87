"""Vocabularies and reversible tokenization.

Japanese is tokenized per character, English per lowercased whitespace word.
Vocab files hold one token per line; the first four lines are the special
tokens ``<pad>``, ``<s>``, ``</s>``, ``<unk>`` in id order.
"""

from __future__ import annotations

import enum
from collections import Counter
from typing import Iterable, Sequence

from .errors import DataError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<s>", "</s>", "<unk>")


class Granularity(enum.Enum):
    CHAR = "char"
    WORD = "word"


def tokenize(sentence: str, granularity: Granularity) -> list[str]:
    if granularity is Granularity.CHAR:
        return list(sentence)
    return sentence.lower().split()


class Vocab:
    def __init__(self, tokens: Sequence[str], granularity: Granularity):
        """``tokens`` excludes the four specials, which always take ids 0-3."""
        self.granularity = granularity
        self.token_of = list(SPECIALS) + list(tokens)
        self.id_of = {tok: i for i, tok in enumerate(self.token_of)}
        if len(self.id_of) != len(self.token_of):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.token_of)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocab)
            and self.granularity is other.granularity
            and self.token_of == other.token_of
        )

    def __repr__(self) -> str:
        return f"Vocab({self.granularity.value}, size={len(self)})"

    def encode(self, sentence: str) -> list[int]:
        ids = [self.id_of.get(tok, UNK) for tok in tokenize(sentence, self.granularity)]
        return [BOS] + ids + [EOS]

    def decode(self, ids: Iterable[int]) -> str:
        toks = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.token_of):
                raise DataError(f"token id {i} outside vocabulary of size {len(self)}")
            if i in (PAD, BOS, EOS):
                continue
            toks.append(self.token_of[i])
        sep = "" if self.granularity is Granularity.CHAR else " "
        return sep.join(toks)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(tok + "\n" for tok in self.token_of))

    @classmethod
    def load(cls, path, granularity: Granularity) -> "Vocab":
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:4]) != SPECIALS:
            raise DataError(f"{path}: vocab file must start with {SPECIALS}")
        return cls(lines[4:], granularity)


def build_vocab(
    sentences: Iterable[str], granularity: Granularity, min_count: int = 1
) -> Vocab:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    n = 0
    for sentence in sentences:
        n += 1
        counts.update(tokenize(sentence, granularity))
    if n == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    kept = [tok for tok, c in counts.items() if c >= min_count and tok not in SPECIALS]
    kept.sort(key=lambda tok: (-counts[tok], tok))
    return Vocab(kept, granularity)
