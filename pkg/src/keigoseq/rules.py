"""Rule-based formality classification and conversion for Japanese sentences.

Japanese marks sentence-level politeness on the final verb or copula, so the
rules only ever look at the tail of a sentence. There is no morphological
analyzer behind this: an ordered suffix table is matched against raw
characters and anything it cannot positively identify comes back as
``FormalityLabel.UNKNOWN``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ConversionError, RuleError


class FormalityLabel(enum.Enum):
    FORMAL = "F"
    INFORMAL = "I"
    UNKNOWN = "U"

    @property
    def code(self) -> str:
        return self.value

    @property
    def bit(self) -> int:
        """1 for formal, 0 for informal. Unknown has no binary value."""
        if self is FormalityLabel.FORMAL:
            return 1
        if self is FormalityLabel.INFORMAL:
            return 0
        raise ValueError("Unknown label has no binary value")

    @classmethod
    def from_code(cls, code: str) -> "FormalityLabel":
        for label in cls:
            if label.value == code:
                return label
        raise ValueError(f"unknown label code {code!r}")

    @classmethod
    def from_bit(cls, bit: int) -> "FormalityLabel":
        if bit == 1:
            return cls.FORMAL
        if bit == 0:
            return cls.INFORMAL
        raise ValueError(f"formality bit must be 0 or 1, got {bit!r}")


class ConjugationGroup(enum.Enum):
    GODAN = "godan"
    ICHIDAN = "ichidan"
    SURU_IRREGULAR = "suru"
    KURU_IRREGULAR = "kuru"
    COPULA = "copula"


def _longest_first(items):
    return tuple(sorted(items, key=len, reverse=True))


@dataclass(frozen=True)
class RuleTable:
    strip_punct: frozenset = frozenset("。．.!?！？…「」")
    strip_particles: frozenset = frozenset("ねよかなわぞぜさ")
    formal_suffixes: tuple = _longest_first(
        [
            "ませんでした", "ございました", "ございます", "ではありません",
            "じゃありません", "ましょう", "ました", "ません", "まして",
            "でしょう", "でした", "ください", "ませ", "ます", "です",
        ]
    )
    informal_suffixes: tuple = _longest_first(
        [
            "ではなかった", "じゃなかった", "なかった", "ではない", "じゃない",
            "かった", "だろう", "だった", "ない", "た", "だ", "い",
        ]
    )
    dictionary_endings: frozenset = frozenset("うくぐすつぬふぶむる")
    max_particles: int = 3

    def __post_init__(self):
        for suffixes in (self.formal_suffixes, self.informal_suffixes):
            lengths = [len(s) for s in suffixes]
            if lengths != sorted(lengths, reverse=True):
                raise ValueError("suffix lists must be sorted longest-first")
        if set(self.formal_suffixes) & set(self.informal_suffixes):
            raise ValueError("a suffix cannot be both formal and informal")
        if not self.dictionary_endings <= set("うくぐすつぬふぶむる"):
            raise ValueError("dictionary endings must be u-row kana")


DEFAULT_RULES = RuleTable()

# u-row dictionary ending -> i-row masu stem. ふ is deliberately absent.
_GODAN_TO_STEM = dict(zip("うくぐすつぬぶむる", "いきぎしちにびみり"))
_STEM_TO_GODAN = {v: k for k, v in _GODAN_TO_STEM.items()}

_I_ROW = frozenset("いきぎしちにひびみり")
_E_ROW = frozenset("えけげせてねへべめれ")
_ICHIDAN_PRE_RU = _I_ROW | _E_ROW

# Characters after which a one-kana masu stem is read as a standalone verb
# (います -> いる, きます -> くる) rather than the tail of a longer godan verb.
_STEM_BOUNDARY = frozenset("はがをにへでともての、")


def _is_kanji(ch: str) -> bool:
    return "\u4e00" <= ch <= "\u9fff" or ch == "々"


def normalize_tail(sentence: str, rules: RuleTable = DEFAULT_RULES) -> str:
    """Strip trailing whitespace, punctuation and up to three final particles."""

    def strip_marks(s: str) -> str:
        end = len(s)
        while end and (s[end - 1].isspace() or s[end - 1] in rules.strip_punct):
            end -= 1
        return s[:end]

    out = strip_marks(sentence)
    for _ in range(rules.max_particles):
        if not out or out[-1] not in rules.strip_particles:
            break
        out = strip_marks(out[:-1])
    return out


def split_tail(sentence: str, rules: RuleTable = DEFAULT_RULES) -> tuple[str, str]:
    """Split into ``(core, tail)`` where ``core`` is the normalized sentence."""
    core = normalize_tail(sentence, rules)
    return core, sentence[len(core):]


def _formal_match(core: str, rules: RuleTable) -> str | None:
    for suffix in rules.formal_suffixes:
        if core.endswith(suffix):
            return suffix
    return None


def _informal_match(core: str, rules: RuleTable) -> str | None:
    for suffix in rules.informal_suffixes:
        if core.endswith(suffix):
            return suffix
    if core and core[-1] in rules.dictionary_endings:
        return core[-1]
    return None


def classify_formality(sentence: str, rules: RuleTable = DEFAULT_RULES) -> FormalityLabel:
    core = normalize_tail(sentence, rules)
    if _formal_match(core, rules) is not None:
        return FormalityLabel.FORMAL
    if _informal_match(core, rules) is not None:
        return FormalityLabel.INFORMAL
    return FormalityLabel.UNKNOWN


def detect_conjugation_group(plain_verb: str, rules: RuleTable = DEFAULT_RULES) -> ConjugationGroup:
    """Guess the conjugation class of a plain-form verb or copula.

    る-verbs preceded by an i-row or e-row kana are read as ichidan. That gets
    kana-spelled godan verbs like かえる (帰る) wrong; kanji-final stems such
    as 帰る or 作る fall through to godan, which is usually right.
    """
    if plain_verb.endswith("する"):
        return ConjugationGroup.SURU_IRREGULAR
    if plain_verb.endswith("来る") or plain_verb.endswith("くる"):
        return ConjugationGroup.KURU_IRREGULAR
    if plain_verb.endswith("だ") or plain_verb.endswith("です"):
        return ConjugationGroup.COPULA
    if not plain_verb or plain_verb[-1] not in rules.dictionary_endings:
        raise RuleError(f"no conjugation rule applies to {plain_verb!r}")
    if plain_verb[-1] == "る" and len(plain_verb) >= 2 and plain_verb[-2] in _ICHIDAN_PRE_RU:
        return ConjugationGroup.ICHIDAN
    return ConjugationGroup.GODAN


def _to_formal(core: str, rules: RuleTable) -> str:
    suffix = _informal_match(core, rules)
    if suffix == "だ":
        return core[:-1] + "です"
    if suffix is None or len(suffix) != 1 or suffix not in rules.dictionary_endings:
        raise ConversionError(f"informal form of {core!r} is outside conversion coverage")
    group = detect_conjugation_group(core, rules)
    if group is ConjugationGroup.SURU_IRREGULAR:
        return core[:-2] + "します"
    if group is ConjugationGroup.KURU_IRREGULAR:
        return core[:-2] + ("来ます" if core.endswith("来る") else "きます")
    if group is ConjugationGroup.ICHIDAN:
        return core[:-1] + "ます"
    stem = _GODAN_TO_STEM.get(core[-1])
    if stem is None:
        raise ConversionError(f"no masu stem for godan ending {core[-1]!r}")
    return core[:-1] + stem + "ます"


def _to_informal(core: str, rules: RuleTable) -> str:
    suffix = _formal_match(core, rules)
    if suffix == "です":
        return core[:-2] + "だ"
    if suffix == "でした":
        return core[:-3] + "だった"
    if suffix != "ます":
        raise ConversionError(f"formal form of {core!r} is outside conversion coverage")
    stem = core[:-2]
    if not stem:
        raise ConversionError("bare ます has no verb stem")
    last = stem[-1]
    before = stem[:-1]
    standalone = not before or before[-1] in _STEM_BOUNDARY
    if last == "し":
        # 勉強します -> 勉強する, but 話します -> 話す: Sino-Japanese verbal nouns
        # are two or more kanji long.
        if standalone or (len(before) >= 2 and _is_kanji(before[-1]) and _is_kanji(before[-2])):
            return before + "する"
        return before + "す"
    if last == "来":
        return before + "来る"
    if last == "き" and standalone:
        return before + "くる"
    if last in _E_ROW or _is_kanji(last):
        return stem + "る"
    if last in _I_ROW:
        if standalone:
            return stem + "る"
        if last in _STEM_TO_GODAN:
            return before + _STEM_TO_GODAN[last]
    raise ConversionError(f"cannot recover the plain form of {core!r}")


def convert_formality(
    sentence: str, target: FormalityLabel, rules: RuleTable = DEFAULT_RULES
) -> str:
    """Re-conjugate the sentence-final verb/copula to ``target`` formality.

    Only non-past affirmative verbs and the copula (plus でした -> だった) are
    covered. Trailing punctuation and particles are carried over unchanged.
    Raises ``ConversionError`` for anything else.
    """
    if target is FormalityLabel.UNKNOWN:
        raise ValueError("conversion target must be FORMAL or INFORMAL")
    current = classify_formality(sentence, rules)
    if current is FormalityLabel.UNKNOWN:
        raise ConversionError(f"formality of {sentence!r} could not be identified")
    if current is target:
        raise ConversionError(f"{sentence!r} is already {target.name.lower()}")
    core, tail = split_tail(sentence, rules)
    if target is FormalityLabel.FORMAL:
        return _to_formal(core, rules) + tail
    return _to_informal(core, rules) + tail
