"""Formality-aware Japanese sequence-to-sequence toolkit."""

from .rules import (
    ConjugationGroup,
    FormalityLabel,
    RuleTable,
    classify_formality,
    convert_formality,
    detect_conjugation_group,
    normalize_tail,
)

__version__ = "0.1.0"
