"""Template-generated Japanese/English sentence pairs for desk-scale runs.

Sentences are built in plain form from a small lexicon; the formal variant is
produced by ``convert_formality``, so every generated pair is, by
construction, labelled consistently with the rule classifier.
"""

from __future__ import annotations

import random

from .corpus import AnnotatedSentence
from .rules import FormalityLabel, classify_formality, convert_formality

SUBJECTS = [
    ("私は", "i"), ("彼は", "he"), ("彼女は", "she"), ("友達は", "my friend"),
    ("先生は", "the teacher"), ("母は", "my mother"), ("子供は", "the child"),
    ("田中さんは", "tanaka"), ("兄は", "my brother"), ("学生は", "the student"),
]

# (plain-form predicate, english verb phrase with {s} for 3rd-person -s)
PREDICATES = [
    ("本を読む", "read{s} a book"),
    ("水を飲む", "drink{s} water"),
    ("手紙を書く", "write{s} a letter"),
    ("音楽を聞く", "listen{s} to music"),
    ("学校に行く", "go{es} to school"),
    ("家に帰る", "go{es} home"),
    ("パンを食べる", "eat{s} bread"),
    ("友達に会う", "meet{s} a friend"),
    ("日本語を話す", "speak{s} japanese"),
    ("電車を待つ", "wait{s} for the train"),
    ("公園で遊ぶ", "play{s} in the park"),
    ("海で泳ぐ", "swim{s} in the sea"),
    ("日本語を勉強する", "stud{ies} japanese"),
    ("料理を作る", "make{s} dinner"),
    ("ここに来る", "come{s} here"),
    ("家にいる", "stay{s} at home"),
    ("窓を開ける", "open{s} the window"),
    ("歌を歌う", "sing{s} a song"),
    ("公園を走る", "run{s} in the park"),
    ("服を買う", "buy{s} clothes"),
    ("写真を撮る", "take{s} a photo"),
    ("早く起きる", "get{s} up early"),
    ("英語を教える", "teach{es} english"),
    ("名前を忘れる", "forget{s} the name"),
    ("仕事を始める", "start{s} work"),
    ("質問に答える", "answer{s} the question"),
    ("学生だ", "{be} a student"),
    ("元気だ", "{be} well"),
    ("医者だ", "{be} a doctor"),
    ("忙しい人だ", "{be} a busy person"),
]

TIMES = [
    ("", ""), ("毎日", " every day"), ("明日", " tomorrow"), ("今日", " today"),
    ("よく", " often"), ("時々", " sometimes"), ("朝", " in the morning"),
]

ENDINGS = ["", "。", "よ。", "ね。"]


def _english(subject_en: str, phrase: str, time_en: str) -> str:
    third = subject_en not in ("i",)
    if third:
        verb = phrase.format(s="s", es="es", ies="ies", be="is")
    else:
        verb = phrase.format(s="", es="", ies="y", be="am")
    return f"{subject_en} {verb}{time_en} ."


def plain_sentences(rng: random.Random):
    """Yield ``(plain_ja, en)`` forever."""
    while True:
        subj, subj_en = rng.choice(SUBJECTS)
        pred, pred_en = rng.choice(PREDICATES)
        time, time_en = rng.choice(TIMES)
        if pred.endswith("だ"):
            time, time_en = "", ""
        end = rng.choice(ENDINGS)
        yield f"{subj}{time}{pred}{end}", _english(subj_en, pred_en, time_en)


def synthetic_corpus(n: int, seed: int = 0, formal_ratio: float = 0.5,
                     unique: bool = True) -> list[AnnotatedSentence]:
    """``n`` labelled sentences; each formal one is a converted plain sentence."""
    rng = random.Random(seed)
    out: list[AnnotatedSentence] = []
    seen: set[str] = set()
    gen = plain_sentences(rng)
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 50 * n + 1000:
            raise ValueError(f"could not generate {n} distinct sentences from the templates")
        ja, en = next(gen)
        if rng.random() < formal_ratio:
            ja = convert_formality(ja, FormalityLabel.FORMAL)
        if unique and ja in seen:
            continue
        seen.add(ja)
        out.append(AnnotatedSentence(ja, classify_formality(ja), en))
    return out


def conversion_pairs(n: int, seed: int = 0) -> list[AnnotatedSentence]:
    """``n`` sentences as informal/formal pairs of the same content (n even)."""
    rng = random.Random(seed)
    gen = plain_sentences(rng)
    out: list[AnnotatedSentence] = []
    seen: set[str] = set()
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 50 * n + 1000:
            raise ValueError(f"could not generate {n} distinct pairs from the templates")
        ja, en = next(gen)
        if ja in seen:
            continue
        seen.add(ja)
        formal = convert_formality(ja, FormalityLabel.FORMAL)
        out.append(AnnotatedSentence(ja, FormalityLabel.INFORMAL, en))
        out.append(AnnotatedSentence(formal, FormalityLabel.FORMAL, en))
    return out[:n]
