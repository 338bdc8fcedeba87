"""Builders shared by the test modules."""

import torch

from keigoseq.augment import AugmentMode
from keigoseq.codec import Granularity, build_vocab
from keigoseq.corpus import AnnotatedSentence
from keigoseq.model import ModelConfig
from keigoseq.objectives import ObjectiveConfig, Task
from keigoseq.rules import FormalityLabel
from keigoseq.system import Batch, build_classifier, build_system, collate, pad_ids

MICRO = [
    AnnotatedSentence("行きます", FormalityLabel.FORMAL, "i go ."),
    AnnotatedSentence("本を読む", FormalityLabel.INFORMAL, "i read a book ."),
]

OBJECTIVES = {
    "reconstruct": ObjectiveConfig(Task.RECONSTRUCT, 0.0),
    "probe": ObjectiveConfig(Task.PROBE, 0.5),
    "side": ObjectiveConfig(Task.SIDE, 0.5),
    "augmented_add": ObjectiveConfig(Task.AUGMENTED, 0.5, AugmentMode.ADDITIVE),
    "augmented_mul": ObjectiveConfig(Task.AUGMENTED, 0.5, AugmentMode.MULTIPLICATIVE),
    "backtranslate": ObjectiveConfig(Task.BACKTRANSLATE, 0.5, AugmentMode.MULTIPLICATIVE),
}


def vocabs(sentences=MICRO):
    ja = build_vocab([s.ja for s in sentences], Granularity.CHAR)
    en = build_vocab([s.en for s in sentences], Granularity.WORD)
    return ja, en


def micro_config(vocab_size, dropout=0.0, **kw):
    base = dict(d_model=8, n_heads=2, ffn_dim=16, dropout=dropout, max_len=40)
    base.update(kw)
    return ModelConfig(vocab_size, vocab_size, **base)


def micro_system(objective, ja_vocab, en_vocab=None, seed=0, dropout=0.0, perturb=0.0,
                 dtype=torch.float64):
    """A tiny system; ``perturb`` adds seeded noise to every trainable tensor
    so identity-initialized pieces (r0, r1, probe) get nonzero gradients."""
    cfg = micro_config(len(ja_vocab), dropout)
    classifier = None
    if objective.task.needs_classifier:
        classifier = build_classifier(cfg, seed=seed + 100, dtype=dtype)
        with torch.no_grad():
            gen = torch.Generator().manual_seed(seed + 101)
            classifier.probe.weight.copy_(torch.randn(cfg.d_model, generator=gen, dtype=dtype))
        classifier.freeze()
    en_size = len(en_vocab) if objective.task is Task.BACKTRANSLATE else None
    system = build_system(cfg, objective, seed=seed, en_vocab_size=en_size,
                          classifier=classifier, dtype=dtype)
    if perturb:
        gen = torch.Generator().manual_seed(seed + 7)
        with torch.no_grad():
            for p in system.trainable().values():
                p.add_(perturb * torch.randn(p.shape, generator=gen, dtype=dtype))
    return system


def micro_batch(objective, ja_vocab, en_vocab, sentences=MICRO):
    return collate(sentences, ja_vocab, en_vocab if objective.task is Task.BACKTRANSLATE else None)


def random_batch(gen, ja_vocab, en_vocab, size=3, max_len=6):
    """Random id batches with a fixed layout: BOS, tokens, EOS, pads."""
    def ids(vocab):
        rows = []
        for _ in range(size):
            n = int(torch.randint(0, max_len, (1,), generator=gen))
            body = torch.randint(4, len(vocab), (n,), generator=gen).tolist()
            rows.append([1] + body + [2])
        return pad_ids(rows)

    labels = torch.randint(0, 2, (size,), generator=gen)
    return Batch(ids(ja_vocab), labels, ids(en_vocab))
