"""Corpus loading, formality annotation and deterministic train/dev/test splits.

File formats (UTF-8, LF line endings):

* raw corpus: one record per line, ``ja`` or ``ja<TAB>en``; every line in a
  file must have the same number of columns.
* annotated corpus: ``label<TAB>ja[<TAB>en]`` with label ``F`` or ``I``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DataError
from .rules import DEFAULT_RULES, FormalityLabel, RuleTable, classify_formality

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class AnnotatedSentence:
    ja: str
    label: FormalityLabel
    en: str | None = None

    def __post_init__(self):
        if not self.ja:
            raise DataError("Japanese sentence must be non-empty")
        for text in (self.ja, self.en):
            if text is not None and ("\t" in text or "\n" in text):
                raise DataError(f"sentence contains a tab or newline: {text!r}")


@dataclass
class CorpusSplit:
    train: list[AnnotatedSentence]
    dev: list[AnnotatedSentence]
    test: list[AnnotatedSentence]
    seed: int = 0

    def part(self, name: str) -> list[AnnotatedSentence]:
        if name not in ("train", "dev", "test"):
            raise ValueError(f"unknown split part {name!r}")
        return getattr(self, name)


class XorShift64Star:
    """xorshift64* generator; the state is never allowed to be zero."""

    def __init__(self, seed: int):
        state = seed & _MASK64
        self.state = state if state else 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def below(self, n: int) -> int:
        # plain modulo; the bias is negligible for corpus-sized n
        return self.next_u64() % n


def shuffled(items: Sequence, seed: int) -> list:
    """Fisher-Yates shuffle driven by xorshift64*."""
    out = list(items)
    rng = XorShift64Star(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def _read_lines(path) -> list[str]:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: malformed UTF-8 ({exc})") from exc
    if text.startswith("\ufeff"):
        text = text[1:]
    return [line.rstrip("\r") for line in text.split("\n")]


def load_raw_corpus(path) -> list[tuple[str, str | None]]:
    records = []
    width = None
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) > 2:
            raise DataError(f"{path}:{lineno}: expected 1 or 2 columns, got {len(cols)}")
        if width is None:
            width = len(cols)
        elif len(cols) != width:
            raise DataError(f"{path}:{lineno}: mixed 1- and 2-column lines")
        records.append((cols[0], cols[1] if width == 2 else None))
    return records


def annotate_corpus(
    records: Iterable[tuple[str, str | None]], rules: RuleTable = DEFAULT_RULES
) -> list[AnnotatedSentence]:
    return [AnnotatedSentence(ja, classify_formality(ja, rules), en) for ja, en in records]


def filter_unknown(annotated: Iterable[AnnotatedSentence]) -> list[AnnotatedSentence]:
    return [a for a in annotated if a.label is not FormalityLabel.UNKNOWN]


def split_corpus(
    annotated: Sequence[AnnotatedSentence], dev_count: int, test_count: int, seed: int
) -> CorpusSplit:
    if dev_count < 0 or test_count < 0:
        raise ValueError("split counts must be non-negative")
    if dev_count + test_count > len(annotated):
        raise DataError(
            f"dev ({dev_count}) + test ({test_count}) exceeds corpus size {len(annotated)}"
        )
    order = shuffled(annotated, seed)
    dev = order[:dev_count]
    test = order[dev_count : dev_count + test_count]
    train = order[dev_count + test_count :]
    return CorpusSplit(train=train, dev=dev, test=test, seed=seed)


def format_annotated(sentence: AnnotatedSentence) -> str:
    if sentence.label is FormalityLabel.UNKNOWN:
        raise DataError(f"cannot write Unknown-labelled sentence {sentence.ja!r}")
    cols = [sentence.label.code, sentence.ja]
    if sentence.en is not None:
        cols.append(sentence.en)
    return "\t".join(cols)


def write_annotated(path, annotated: Iterable[AnnotatedSentence]) -> None:
    lines = [format_annotated(a) for a in annotated]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(line + "\n" for line in lines))


def read_annotated(path) -> list[AnnotatedSentence]:
    out = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) not in (2, 3):
            raise DataError(f"{path}:{lineno}: expected 2 or 3 columns, got {len(cols)}")
        if cols[0] not in ("F", "I"):
            raise DataError(f"{path}:{lineno}: unknown label {cols[0]!r}")
        label = FormalityLabel.from_code(cols[0])
        en = cols[2] if len(cols) == 3 else None
        try:
            out.append(AnnotatedSentence(cols[1], label, en))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_split(directory, split: CorpusSplit) -> dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name in ("train", "dev", "test"):
        path = os.path.join(directory, f"{name}.tsv")
        write_annotated(path, split.part(name))
        paths[name] = path
    return paths
