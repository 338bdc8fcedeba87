"""Corpus BLEU and formality-correctness metrics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from .corpus import AnnotatedSentence
from .rules import FormalityLabel, classify_formality

MAX_ORDER = 4


@dataclass
class EvalReport:
    bleu: float
    formality_correct_pct: float
    n_sentences: int
    n_unknown_outputs: int

    def tsv(self) -> str:
        header = "bleu\tformality_correct_pct\tn_sentences\tn_unknown_outputs"
        row = f"{self.bleu!r}\t{self.formality_correct_pct!r}\t{self.n_sentences}\t{self.n_unknown_outputs}"
        return header + "\n" + row + "\n"

    def text(self) -> str:
        return (
            f"BLEU                {self.bleu * 100:.2f}\n"
            f"correct formality   {self.formality_correct_pct:.2f}%\n"
            f"sentences           {self.n_sentences}\n"
            f"unknown outputs     {self.n_unknown_outputs}\n"
        )


def _ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: Sequence[Sequence], references: Sequence[Sequence]) -> float:
    """Single-reference corpus BLEU, max order 4.

    Orders with no hypothesis n-grams in the whole corpus are left out of the
    geometric mean, so short exact matches still score 1.0.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, MAX_ORDER + 1):
            h = _ngrams(hyp, n)
            r = _ngrams(ref, n)
            totals[n - 1] += sum(h.values())
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
    if hyp_len == 0:
        return 0.0
    orders = [n for n in range(MAX_ORDER) if totals[n] > 0]
    if any(matches[n] == 0 for n in orders):
        return 0.0
    log_p = sum(math.log(matches[n] / totals[n]) for n in orders) / len(orders)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def formality_correctness(outputs: Sequence[str], labels: Sequence[FormalityLabel]) -> float:
    """Percentage of outputs the rule classifier gives the expected label.

    Outputs classified Unknown are counted as wrong.
    """
    if not outputs:
        raise ValueError("no outputs to score")
    if len(outputs) != len(labels):
        raise ValueError("outputs and labels differ in length")
    hits = sum(classify_formality(o) is lab for o, lab in zip(outputs, labels))
    return 100.0 * hits / len(outputs)


def count_unknown(outputs: Sequence[str]) -> int:
    return sum(classify_formality(o) is FormalityLabel.UNKNOWN for o in outputs)


def evaluate_outputs(outputs: Sequence[str], sentences: Sequence[AnnotatedSentence]) -> EvalReport:
    """Score decoded outputs against their source sentences (char-level BLEU)."""
    bleu = corpus_bleu([list(o) for o in outputs], [list(s.ja) for s in sentences])
    pct = formality_correctness(outputs, [s.label for s in sentences])
    return EvalReport(bleu, pct, len(sentences), count_unknown(outputs))


def evaluate(decode: Callable[[Sequence[AnnotatedSentence]], list[str]],
             sentences: Sequence[AnnotatedSentence]) -> EvalReport:
    """Decode every sentence and compute both metrics.

    ``decode`` maps the source sentences to output strings; see
    ``system.translate`` for the model-backed version.
    """
    outputs = decode(sentences)
    if len(outputs) != len(sentences):
        raise ValueError("decoder returned the wrong number of outputs")
    return evaluate_outputs(outputs, sentences)
