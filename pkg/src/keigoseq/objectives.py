"""Loss functions: reconstruction, formality probe, output-formality side
constraint and the Ja-En-Ja back-translation chain.

Every loss is a mean over the batch, so the weighted combinations stay on a
comparable scale whatever the batch size.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .augment import AugmentMode
from .codec import BOS, PAD
from .model import Encoder, ModelConfig


class Task(enum.Enum):
    RECONSTRUCT = "reconstruct"
    PROBE = "probe"
    SIDE = "side"
    AUGMENTED = "augmented"
    BACKTRANSLATE = "backtranslate"

    @property
    def needs_classifier(self) -> bool:
        return self in (Task.SIDE, Task.AUGMENTED, Task.BACKTRANSLATE)


@dataclass(frozen=True)
class ObjectiveConfig:
    task: Task = Task.RECONSTRUCT
    lam: float = 0.0
    augment: AugmentMode = AugmentMode.NONE

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.augment is not AugmentMode.NONE and self.task not in (
            Task.AUGMENTED,
            Task.BACKTRANSLATE,
        ):
            raise ValueError(f"augmentation is not available for task {self.task.value}")


@dataclass
class LossParts:
    total: torch.Tensor
    rec: torch.Tensor
    form: torch.Tensor


class ProbeClassifier(nn.Module):
    """Logistic regression on the mean of the non-pad encoder rows."""

    def __init__(self, d_model: int):
        super().__init__()
        self.weight = nn.Parameter(torch.zeros(d_model))
        self.bias = nn.Parameter(torch.zeros(()))

    def forward(self, encoder_output, pad_mask):
        keep = (~pad_mask).to(encoder_output.dtype).unsqueeze(-1)
        pooled = (encoder_output * keep).sum(1) / keep.sum(1)
        return pooled @ self.weight + self.bias


class FormalityClassifier(nn.Module):
    """Transformer encoder plus a linear probe, used as the side-constraint judge."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg.vocab_src, cfg)
        self.probe = ProbeClassifier(cfg.d_model)
        self.frozen = False

    @property
    def vocab_size(self) -> int:
        return self.encoder.embed.num_embeddings

    def freeze(self) -> "FormalityClassifier":
        for p in self.parameters():
            p.requires_grad_(False)
        self.frozen = True
        return self.eval()

    def forward(self, x, pad_mask, rng=None):
        """Logit of P(formal); ``x`` is ids ``[B, L]`` or distributions ``[B, L, V]``."""
        return self.probe(self.encoder(x, pad_mask, rng), pad_mask)

    @torch.no_grad()
    def predict(self, ids) -> torch.Tensor:
        return (self(ids, ids == PAD) > 0).long()


def bernoulli_nll(logit, labels) -> torch.Tensor:
    """Mean of -[s ln p + (1-s) ln(1-p)] with p = sigmoid(logit)."""
    s = torch.as_tensor(labels, dtype=logit.dtype)
    return -(s * F.logsigmoid(logit) + (1 - s) * F.logsigmoid(-logit)).mean()


def reconstruction_loss(logits, target_ids) -> torch.Tensor:
    """Mean NLL over non-pad targets; ``logits[:, t]`` predicts ``target_ids[:, t+1]``."""
    if logits.dim() == 2:
        logits, target_ids = logits.unsqueeze(0), torch.as_tensor(target_ids).unsqueeze(0)
    gold = target_ids[:, 1:]
    logits = logits[:, : gold.shape[1]]
    keep = gold != PAD
    if not bool(keep.any()):
        raise ValueError("no non-pad target positions")
    logp = torch.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, gold.unsqueeze(-1)).squeeze(-1)
    return nll[keep].mean()


def probe_loss(probe: ProbeClassifier, encoder_output, pad_mask, labels) -> torch.Tensor:
    return bernoulli_nll(probe(encoder_output, pad_mask), labels)


def joint_probe_loss(rec_loss, probe_loss, lam: float):
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    return (1 - lam) * rec_loss + lam * probe_loss


def soft_output_sequence(probs, target_ids) -> torch.Tensor:
    """BOS one-hot followed by the teacher-forced output distributions.

    Aligned with ``target_ids`` so the classifier sees the same layout it was
    trained on (BOS, tokens..., EOS, pads).
    """
    n = target_ids.shape[1]
    bos = torch.zeros(probs.shape[0], 1, probs.shape[-1], dtype=probs.dtype)
    bos[:, 0, BOS] = 1.0
    return torch.cat([bos, probs[:, : n - 1]], dim=1)


def side_constraint_loss(classifier: FormalityClassifier, probs, target_ids, labels) -> torch.Tensor:
    """-log c(y) for formal sources, -log(1 - c(y)) for informal ones.

    ``probs`` are the generator's per-position output distributions; they are
    fed to the frozen classifier as expected embeddings so gradients reach
    the generator.
    """
    if probs.shape[-1] != classifier.vocab_size:
        raise ValueError(
            f"output vocabulary {probs.shape[-1]} != classifier vocabulary {classifier.vocab_size}"
        )
    soft = soft_output_sequence(probs, target_ids)
    logit = classifier(soft, target_ids == PAD)
    return bernoulli_nll(logit, labels)


def side_constrained(rec, form, lam: float) -> torch.Tensor:
    return (1 - lam) * rec + lam * form


def backtranslation_loss(ja_en, en_ja, classifier, ja, en, labels, lam: float,
                         augment=None, rng=None) -> LossParts:
    """Two teacher-forced legs (Ja->En, En->Ja) plus the side constraint on
    the final Japanese output distributions."""
    if en is None:
        raise ValueError("back translation needs English references")
    leg1 = reconstruction_loss(ja_en(ja, en[:, :-1], rng), en)
    memory, pad = en_ja.encode(en, rng)
    if augment is not None:
        memory = augment(memory, labels)
    logits = en_ja.decode(ja[:, :-1], memory, pad, rng)
    leg2 = reconstruction_loss(logits, ja)
    rec = leg1 + leg2
    form = side_constraint_loss(classifier, torch.softmax(logits, -1), ja, labels)
    return LossParts((1 - lam) * rec + lam * form, rec, form)
