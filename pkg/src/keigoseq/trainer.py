"""Adam optimization, classifier pre-training and the training loop.

Everything random is derived from ``(seed, step)``: batch composition comes
from per-epoch xorshift shuffles and dropout from a generator seeded per step.
A run resumed from a checkpoint therefore follows exactly the same
trajectory as an uninterrupted one.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import torch

from .codec import PAD, Vocab
from .corpus import AnnotatedSentence, shuffled
from .errors import DataError, NumericError
from .model import ModelConfig
from .objectives import FormalityClassifier, LossParts, Task, bernoulli_nll
from .system import FormalitySystem, build_classifier, collate

log = logging.getLogger(__name__)

DTYPES = {32: torch.float32, 64: torch.float64}


@dataclass
class OptimState:
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]
    t: int = 0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: Mapping[str, torch.Tensor], **hyper) -> "OptimState":
        return cls(
            m={n: torch.zeros_like(p) for n, p in params.items()},
            v={n: torch.zeros_like(p) for n, p in params.items()},
            **hyper,
        )


def adam_step(params: Mapping[str, torch.Tensor], grads: Mapping[str, torch.Tensor],
              state: OptimState) -> OptimState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if g.shape != params[name].shape or g.shape != state.m[name].shape:
            raise ValueError(f"shape mismatch for {name}")
        if not bool(torch.isfinite(g).all()):
            raise NumericError(f"non-finite gradient for {name} at step {state.t}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            m, v = state.m[name], state.v[name]
            m.mul_(state.beta1).add_(g, alpha=1.0 - state.beta1)
            v.mul_(state.beta2).addcmul_(g, g, value=1.0 - state.beta2)
            p.sub_(state.lr * (m / bc1) / (torch.sqrt(v / bc2) + state.eps))
    return state


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_steps: int = 2000
    seed: int = 0
    precision: int = 64
    checkpoint_every: int = 0
    lr: float = 5e-4

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.precision not in DTYPES:
            raise ValueError("precision must be 32 or 64")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")

    @property
    def dtype(self) -> torch.dtype:
        return DTYPES[self.precision]


@dataclass
class StepRecord:
    step: int
    loss: float
    rec_loss: float
    form_loss: float

    def tsv(self) -> str:
        return f"{self.step}\t{self.loss!r}\t{self.rec_loss!r}\t{self.form_loss!r}"


@dataclass
class TrainResult:
    state: OptimState
    log: list[StepRecord] = field(default_factory=list)
    dev_log: list[StepRecord] = field(default_factory=list)


def write_step_log(path, records: Sequence[StepRecord], append: bool = False) -> None:
    """TSV with a header line; ``append`` extends an existing log instead."""
    with open(path, "a" if append else "w", encoding="utf-8", newline="\n") as fh:
        if not append or fh.tell() == 0:
            fh.write("step\tloss\trec_loss\tform_loss\n")
        fh.writelines(r.tsv() + "\n" for r in records)


def _mix(seed: int, step: int) -> int:
    return (seed * 6364136223846793005 + step * 1442695040888963407 + 1) % (2**63)


class BatchSchedule:
    """Epoch-wise shuffled order over ``n`` items, addressable by step."""

    def __init__(self, n: int, batch_size: int, seed: int):
        if n == 0:
            raise DataError("cannot train on an empty corpus")
        self.n, self.batch_size, self.seed = n, batch_size, seed
        self._perms: dict[int, list[int]] = {}

    def _perm(self, epoch: int) -> list[int]:
        if epoch not in self._perms:
            self._perms = {epoch: shuffled(range(self.n), _mix(self.seed, epoch))}
        return self._perms[epoch]

    def indices(self, step: int) -> list[int]:
        start = step * self.batch_size
        return [self._perm(p // self.n)[p % self.n] for p in range(start, start + self.batch_size)]


def _step_rng(seed: int, step: int, dropout: float) -> torch.Generator | None:
    if dropout == 0.0:
        return None
    return torch.Generator().manual_seed(_mix(seed ^ 0x5DEECE66D, step))


def _optimize(params: dict[str, torch.Tensor], loss_at: Callable[[int, torch.Generator | None], LossParts],
              config: TrainConfig, state: OptimState, dropout: float,
              on_step: Callable[[int], None] | None = None) -> list[StepRecord]:
    records = []
    tensors = list(params.values())
    for step in range(state.t, config.max_steps):
        parts = loss_at(step, _step_rng(config.seed, step, dropout))
        total = float(parts.total.detach())
        if not math.isfinite(total):
            raise NumericError(f"non-finite loss {total} at step {step}")
        grads = torch.autograd.grad(parts.total, tensors, allow_unused=True)
        grads = {n: torch.zeros_like(p) if g is None else g for (n, p), g in zip(params.items(), grads)}
        adam_step(params, grads, state)
        records.append(StepRecord(step, total, float(parts.rec.detach()), float(parts.form.detach())))
        if on_step is not None:
            on_step(step + 1)
    return records


def train(system: FormalitySystem, data: Sequence[AnnotatedSentence], ja_vocab: Vocab,
          config: TrainConfig, en_vocab: Vocab | None = None, state: OptimState | None = None,
          dev: Sequence[AnnotatedSentence] | None = None,
          checkpoint: Callable[[OptimState], None] | None = None) -> TrainResult:
    """Train ``system`` in place until ``config.max_steps`` total steps.

    ``state`` resumes from a previous run. ``checkpoint(state)`` is called
    every ``config.checkpoint_every`` steps, right after the dev loss is
    logged.
    """
    params = system.trainable()
    if state is None:
        state = OptimState.zeros(params, lr=config.lr)
    schedule = BatchSchedule(len(data), config.batch_size, config.seed)
    needs_en = system.objective.task is Task.BACKTRANSLATE
    if needs_en and en_vocab is None:
        raise ValueError("back translation needs an English vocabulary")

    def loss_at(step, rng):
        system.train()
        idx = schedule.indices(step)
        batch = collate([data[i] for i in idx], ja_vocab, en_vocab if needs_en else None)
        return system.losses(batch, rng)

    result = TrainResult(state)

    def on_step(done):
        if config.checkpoint_every and done % config.checkpoint_every == 0:
            if dev:
                result.dev_log.append(evaluate_loss(system, dev, ja_vocab, en_vocab, step=done))
            if checkpoint is not None:
                checkpoint(state)

    result.log = _optimize(params, loss_at, config, state, system.cfg.dropout, on_step)
    system.eval()
    return result


@torch.no_grad()
def evaluate_loss(system: FormalitySystem, data: Sequence[AnnotatedSentence], ja_vocab: Vocab,
                  en_vocab: Vocab | None = None, step: int = 0, batch_size: int = 64) -> StepRecord:
    """Eval-mode objective averaged over ``data`` (weighted by batch size)."""
    system.eval()
    needs_en = system.objective.task is Task.BACKTRANSLATE
    sums = [0.0, 0.0, 0.0]
    for start in range(0, len(data), batch_size):
        chunk = data[start : start + batch_size]
        parts = system.losses(collate(chunk, ja_vocab, en_vocab if needs_en else None))
        for i, t in enumerate((parts.total, parts.rec, parts.form)):
            sums[i] += float(t) * len(chunk)
    n = max(len(data), 1)
    return StepRecord(step, sums[0] / n, sums[1] / n, sums[2] / n)


def pretrain_probe_classifier(data: Sequence[AnnotatedSentence], ja_vocab: Vocab, cfg: ModelConfig,
                              config: TrainConfig,
                              classifier: FormalityClassifier | None = None) -> FormalityClassifier:
    """Train an encoder + linear probe on formality labels, then freeze it."""
    if not data:
        raise DataError("cannot pre-train a classifier on an empty corpus")
    if len({s.label for s in data}) < 2:
        warnings.warn("classifier corpus has a single formality class; the probe will be degenerate")
    if classifier is None:
        classifier = build_classifier(cfg, seed=config.seed, dtype=config.dtype)
    if classifier.frozen:
        raise ValueError("classifier is frozen and cannot be trained further")
    params = {n: p for n, p in classifier.named_parameters() if p.requires_grad}
    state = OptimState.zeros(params, lr=config.lr)
    schedule = BatchSchedule(len(data), config.batch_size, config.seed)

    def loss_at(step, rng):
        classifier.train()
        batch = collate([data[i] for i in schedule.indices(step)], ja_vocab)
        loss = bernoulli_nll(classifier(batch.ja, batch.ja == PAD, rng), batch.labels)
        return LossParts(loss, torch.zeros(()), loss)

    records = _optimize(params, loss_at, config, state, cfg.dropout)
    if records:
        log.info("classifier pre-training: final loss %.4f", records[-1].loss)
    return classifier.freeze()


@torch.no_grad()
def classifier_accuracy(classifier: FormalityClassifier, data: Sequence[AnnotatedSentence],
                        ja_vocab: Vocab, batch_size: int = 256) -> float:
    classifier.eval()
    correct = 0
    for start in range(0, len(data), batch_size):
        batch = collate(data[start : start + batch_size], ja_vocab)
        correct += int((classifier.predict(batch.ja) == batch.labels).sum())
    return correct / len(data)


@torch.no_grad()
def probe_accuracy(system: FormalitySystem, data: Sequence[AnnotatedSentence], ja_vocab: Vocab,
                   batch_size: int = 256) -> float:
    """Held-out accuracy of the joint-task probe reading the system's encoder."""
    if system.probe is None:
        raise ValueError("system has no probe")
    system.eval()
    correct = 0
    for start in range(0, len(data), batch_size):
        batch = collate(data[start : start + batch_size], ja_vocab)
        memory, pad = system.model.encode(batch.ja)
        pred = (system.probe(memory, pad) > 0).long()
        correct += int((pred == batch.labels).sum())
    return correct / len(data)
