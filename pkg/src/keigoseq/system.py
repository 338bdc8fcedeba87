"""Wires models, augmentation and the frozen classifier together per task."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn as nn

from .augment import init_augment_vectors
from .codec import BOS, EOS, PAD, Vocab
from .corpus import AnnotatedSentence
from .model import ModelConfig, Seq2Seq, greedy_decode_batch, init_parameters
from .objectives import (
    FormalityClassifier,
    LossParts,
    ObjectiveConfig,
    ProbeClassifier,
    Task,
    backtranslation_loss,
    probe_loss,
    reconstruction_loss,
    side_constraint_loss,
)
from .rules import FormalityLabel, classify_formality


@dataclass
class Batch:
    ja: torch.Tensor  # [B, Lj]
    labels: torch.Tensor  # [B] formality bits
    en: torch.Tensor | None = None  # [B, Le]

    def __len__(self) -> int:
        return self.ja.shape[0]


def pad_ids(seqs: Sequence[Sequence[int]]) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), PAD, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.as_tensor(list(s), dtype=torch.long)
    return out


def collate(
    sentences: Sequence[AnnotatedSentence], ja_vocab: Vocab, en_vocab: Vocab | None = None
) -> Batch:
    if not sentences:
        raise ValueError("empty batch")
    ja = pad_ids([ja_vocab.encode(s.ja) for s in sentences])
    labels = torch.tensor([s.label.bit for s in sentences], dtype=torch.long)
    en = None
    if en_vocab is not None:
        if any(s.en is None for s in sentences):
            raise ValueError("batch is missing English references")
        en = pad_ids([en_vocab.encode(s.en) for s in sentences])
    return Batch(ja, labels, en)


class FormalitySystem(nn.Module):
    """Every trainable and frozen piece needed for one objective.

    Reconstruction tasks use ``model`` (Ja->Ja); back translation uses
    ``ja_en`` and ``en_ja``. ``classifier`` is the frozen side-constraint
    judge and never receives gradients; without one a frozen placeholder of
    the same architecture is created, to be filled from a checkpoint.
    """

    def __init__(self, cfg: ModelConfig, objective: ObjectiveConfig,
                 en_vocab_size: int | None = None,
                 classifier: FormalityClassifier | None = None):
        super().__init__()
        self.cfg = cfg
        self.objective = objective
        task = objective.task
        if task is Task.BACKTRANSLATE:
            if en_vocab_size is None:
                raise ValueError("back translation needs an English vocabulary size")
            self.ja_en = Seq2Seq(_with_vocab(cfg, cfg.vocab_src, en_vocab_size))
            self.en_ja = Seq2Seq(_with_vocab(cfg, en_vocab_size, cfg.vocab_src))
        else:
            self.model = Seq2Seq(cfg)
        self.probe = ProbeClassifier(cfg.d_model) if task is Task.PROBE else None
        self.augment = init_augment_vectors(cfg.d_model, objective.augment)
        self.classifier = None
        if task.needs_classifier:
            if classifier is None:
                classifier = FormalityClassifier(cfg).freeze()
            _check_classifier(classifier, cfg)
            self.classifier = classifier

    @property
    def en_vocab_size(self) -> int | None:
        return self.ja_en.cfg.vocab_tgt if self.objective.task is Task.BACKTRANSLATE else None

    @property
    def generator(self) -> Seq2Seq:
        """The model producing the final Japanese output."""
        return self.en_ja if self.objective.task is Task.BACKTRANSLATE else self.model

    def trainable(self) -> dict[str, nn.Parameter]:
        return {n: p for n, p in self.named_parameters() if p.requires_grad}

    def augmented_memory(self, memory, labels):
        return memory if self.augment is None else self.augment(memory, labels)

    def losses(self, batch: Batch, rng: torch.Generator | None = None) -> LossParts:
        obj = self.objective
        lam = obj.lam
        if obj.task is Task.BACKTRANSLATE:
            return backtranslation_loss(
                self.ja_en, self.en_ja, self.classifier, batch.ja, batch.en, batch.labels,
                lam, self.augment, rng,
            )
        memory, pad = self.model.encode(batch.ja, rng)
        if obj.task is Task.PROBE:
            logits = self.model.decode(batch.ja[:, :-1], memory, pad, rng)
            rec = reconstruction_loss(logits, batch.ja)
            form = probe_loss(self.probe, memory, pad, batch.labels)
            return LossParts((1 - lam) * rec + lam * form, rec, form)
        memory = self.augmented_memory(memory, batch.labels)
        logits = self.model.decode(batch.ja[:, :-1], memory, pad, rng)
        rec = reconstruction_loss(logits, batch.ja)
        if obj.task is Task.RECONSTRUCT:
            return LossParts(rec, rec, torch.zeros((), dtype=rec.dtype))
        form = side_constraint_loss(self.classifier, torch.softmax(logits, -1), batch.ja, batch.labels)
        return LossParts((1 - lam) * rec + lam * form, rec, form)


def _check_classifier(classifier: FormalityClassifier, cfg: ModelConfig) -> None:
    if not classifier.frozen:
        raise ValueError("side-constraint classifier must be frozen")
    if classifier.vocab_size != cfg.vocab_src:
        raise ValueError("classifier vocabulary does not match the Japanese vocabulary")
    ccfg = classifier.cfg
    if (ccfg.d_model, ccfg.n_heads, ccfg.n_layers, ccfg.ffn_dim) != (
        cfg.d_model, cfg.n_heads, cfg.n_layers, cfg.ffn_dim
    ):
        raise ValueError("classifier architecture must match the system configuration")


def _with_vocab(cfg: ModelConfig, src: int, tgt: int) -> ModelConfig:
    d = cfg.to_dict()
    d.update(vocab_src=src, vocab_tgt=tgt)
    return ModelConfig(**d)


def build_system(cfg: ModelConfig, objective: ObjectiveConfig, seed: int = 0,
                 en_vocab_size: int | None = None,
                 classifier: FormalityClassifier | None = None,
                 dtype=torch.float64) -> FormalitySystem:
    """Construct and seed-initialize a system; the classifier keeps its weights."""
    if objective.task.needs_classifier:
        if classifier is None:
            raise ValueError(f"task {objective.task.value} needs a pre-trained classifier")
        _check_classifier(classifier, cfg)
    # Cast before drawing so float64 weights are not first rounded through
    # whatever the global default dtype happens to be.
    system = FormalitySystem(cfg, objective, en_vocab_size).to(dtype)
    init_parameters(system, seed)
    if classifier is not None and system.classifier is not None:
        system.classifier = classifier
    return system.to(dtype)


def build_classifier(cfg: ModelConfig, seed: int = 0, dtype=torch.float64) -> FormalityClassifier:
    return init_parameters(FormalityClassifier(cfg).to(dtype), seed)


def resolve_styles(sentences: Sequence[str], override: FormalityLabel | None = None) -> list[int]:
    """Inference-time formality bits: the override, else the rule classifier.

    Sentences the rules cannot label fall back to informal.
    """
    if override is not None:
        return [override.bit] * len(sentences)
    out = []
    for s in sentences:
        label = classify_formality(s)
        out.append(label.bit if label is not FormalityLabel.UNKNOWN else 0)
    return out


@torch.no_grad()
def translate(system: FormalitySystem, sentences: Sequence[str], ja_vocab: Vocab,
              en_vocab: Vocab | None = None, styles: Sequence[int] | None = None,
              batch_size: int = 64) -> list[str]:
    """Greedy-decode Japanese outputs for Japanese inputs.

    Back-translation systems go Ja->En->Ja; the augmentation style for the
    second leg comes from ``styles`` (default: rule classification of the
    Japanese input).
    """
    system.eval()
    if styles is None:
        styles = resolve_styles(sentences)
    out: list[str] = []
    for start in range(0, len(sentences), batch_size):
        chunk = list(sentences[start : start + batch_size])
        chunk_styles = torch.tensor(list(styles[start : start + batch_size]), dtype=torch.long)
        src = [ja_vocab.encode(s) for s in chunk]
        if system.objective.task is Task.BACKTRANSLATE:
            if en_vocab is None:
                raise ValueError("back translation needs the English vocabulary")
            pivot = greedy_decode_batch(system.ja_en, src)
            src = [[BOS] + ids + [EOS] for ids in pivot]
        hook = None
        if system.augment is not None:
            hook = lambda memory, s=chunk_styles: system.augment(memory, s)  # noqa: E731
        decoded = greedy_decode_batch(system.generator, src, hook)
        out.extend(ja_vocab.decode(ids) for ids in decoded)
    return out
