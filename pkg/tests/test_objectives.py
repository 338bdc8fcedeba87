import math

import pytest
import torch
from hypothesis import given, settings, strategies as st

from helpers import OBJECTIVES, micro_batch, micro_config, micro_system, random_batch, vocabs
from keigoseq.augment import AugmentMode
from keigoseq.codec import BOS, EOS, PAD
from keigoseq.gradcheck import finite_difference_check
from keigoseq.objectives import (
    ObjectiveConfig,
    ProbeClassifier,
    Task,
    backtranslation_loss,
    bernoulli_nll,
    joint_probe_loss,
    probe_loss,
    reconstruction_loss,
    side_constraint_loss,
)
from keigoseq.model import ModelConfig
from keigoseq.system import build_classifier, build_system

@pytest.fixture(autouse=True)
def _float64_default():
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)


def test_objective_config_validation():
    with pytest.raises(ValueError):
        ObjectiveConfig(Task.SIDE, 1.5)
    with pytest.raises(ValueError):
        ObjectiveConfig(Task.PROBE, 0.5, AugmentMode.ADDITIVE)
    ObjectiveConfig(Task.BACKTRANSLATE, 0.75, AugmentMode.MULTIPLICATIVE)


# -- reconstruction ----------------------------------------------------------

def test_reconstruction_perfect_prediction():
    target = torch.tensor([[BOS, 4, 5, EOS]])
    logits = torch.full((1, 3, 6), -1e4)
    for t, tok in enumerate([4, 5, EOS]):
        logits[0, t, tok] = 0.0
    assert reconstruction_loss(logits, target).item() == 0.0


def test_reconstruction_uniform():
    target = torch.tensor([[BOS, 4, 5, EOS]])
    assert reconstruction_loss(torch.zeros(1, 3, 7), target).item() == pytest.approx(math.log(7), abs=1e-12)


def test_reconstruction_hand_case():
    # gold tokens 4 then 5, predicted with probabilities .5 and .25
    probs = torch.full((2, 6), 0.05)
    probs[0, 4], probs[0, 5] = 0.5, 0.3
    probs[1, 4], probs[1, 5] = 0.55, 0.25
    loss = reconstruction_loss(probs.log(), torch.tensor([BOS, 4, 5]))
    assert loss.item() == pytest.approx(-(math.log(0.5) + math.log(0.25)) / 2, abs=1e-12)
    assert loss.item() == pytest.approx(1.0397, abs=1e-4)


def test_reconstruction_ignores_padding():
    target = torch.tensor([[BOS, 4, EOS, PAD, PAD], [BOS, 4, 5, 6, EOS]])
    logits = torch.randn(2, 4, 8)
    full = reconstruction_loss(logits, target)
    changed = logits.clone()
    changed[0, 2:] = 100.0  # positions predicting padding
    assert full.item() == reconstruction_loss(changed, target).item()


def test_reconstruction_requires_targets():
    with pytest.raises(ValueError):
        reconstruction_loss(torch.zeros(1, 1, 4), torch.tensor([[BOS, PAD]]))


# -- probe -------------------------------------------------------------------

def test_probe_zero_weights_gives_ln2():
    probe = ProbeClassifier(4)
    enc = torch.randn(3, 5, 4)
    pad = torch.zeros(3, 5, dtype=torch.bool)
    for labels in ([0, 0, 0], [1, 1, 1], [0, 1, 0]):
        assert probe_loss(probe, enc, pad, torch.tensor(labels)).item() == pytest.approx(math.log(2), abs=1e-15)


def test_probe_mean_pools_non_pad_rows():
    probe = ProbeClassifier(2)
    with torch.no_grad():
        probe.weight.copy_(torch.tensor([1.0, 0.0]))
    enc = torch.tensor([[[1.0, 0.0], [3.0, 0.0], [100.0, 0.0]]])
    pad = torch.tensor([[False, False, True]])
    assert probe(enc, pad).item() == pytest.approx(2.0)


def test_bernoulli_limits():
    assert bernoulli_nll(torch.tensor([50.0]), torch.tensor([1])).item() < 1e-20
    p = 0.8
    z = torch.tensor([math.log(p / (1 - p))])
    assert bernoulli_nll(z, torch.tensor([1])).item() == pytest.approx(-math.log(p))
    assert bernoulli_nll(z, torch.tensor([0])).item() == pytest.approx(-math.log(1 - p))


# -- joint -------------------------------------------------------------------

def test_joint_examples():
    rec, probe = torch.tensor(2.0), torch.tensor(1.0)
    assert joint_probe_loss(rec, probe, 0.0).item() == 2.0
    assert joint_probe_loss(rec, probe, 1.0).item() == 1.0
    assert joint_probe_loss(rec, probe, 0.9).item() == pytest.approx(1.1, abs=1e-12)
    with pytest.raises(ValueError):
        joint_probe_loss(rec, probe, -0.1)


@given(st.floats(0, 1), st.floats(0, 10), st.floats(0, 10))
def test_joint_is_affine(lam, rec, probe):
    a = joint_probe_loss(rec, probe, lam)
    assert a == pytest.approx(rec + lam * (probe - rec), abs=1e-9)
    assert a >= 0


# -- side constraint ---------------------------------------------------------

def _classifier_at(p_target, ja_vocab, sentence_ids):
    system = micro_system(OBJECTIVES["side"], ja_vocab)
    clf = system.classifier
    z = clf(sentence_ids, sentence_ids == PAD).item()
    with torch.no_grad():
        clf.probe.bias.add_(math.log(p_target / (1 - p_target)) - z)
    return clf


def _one_hot_outputs(ids, vocab_size):
    # teacher-forced outputs for positions 1..n: one-hot on the next target token
    return torch.nn.functional.one_hot(ids[:, 1:], vocab_size).to(torch.float64)


def test_side_constraint_one_hot_hand_case():
    ja, _ = vocabs()
    ids = torch.tensor([ja.encode("行きます")])
    clf = _classifier_at(0.9, ja, ids)
    probs = _one_hot_outputs(ids, len(ja))
    loss = side_constraint_loss(clf, probs, ids, torch.tensor([1]))
    assert loss.item() == pytest.approx(-math.log(0.9), abs=1e-9)
    assert loss.item() == pytest.approx(0.1054, abs=1e-4)


def test_side_constraint_half_probability():
    ja, _ = vocabs()
    ids = torch.tensor([ja.encode("本を読む")])
    clf = _classifier_at(0.5, ja, ids)
    loss = side_constraint_loss(clf, _one_hot_outputs(ids, len(ja)), ids, torch.tensor([0]))
    assert loss.item() == pytest.approx(math.log(2), abs=1e-9)


def test_side_constraint_vocab_mismatch():
    ja, _ = vocabs()
    clf = micro_system(OBJECTIVES["side"], ja).classifier
    ids = torch.tensor([ja.encode("行く")])
    with pytest.raises(ValueError):
        side_constraint_loss(clf, torch.rand(1, ids.shape[1] - 1, len(ja) + 1), ids, torch.tensor([1]))


def test_side_constraint_leaves_classifier_untouched():
    ja, en = vocabs()
    system = micro_system(OBJECTIVES["side"], ja, perturb=0.1)
    before = {k: v.clone() for k, v in system.classifier.state_dict().items()}
    parts = system.losses(micro_batch(OBJECTIVES["side"], ja, en))
    parts.total.backward()
    assert all(p.grad is None for p in system.classifier.parameters())
    assert any(p.grad is not None and bool(p.grad.abs().sum() > 0) for p in system.model.parameters())
    for k, v in system.classifier.state_dict().items():
        assert torch.equal(v, before[k])


def test_system_rejects_unfrozen_or_mismatched_classifier():
    ja, _ = vocabs()
    cfg = micro_config(len(ja))
    with pytest.raises(ValueError):
        build_system(cfg, OBJECTIVES["side"], classifier=build_classifier(cfg))
    other = micro_config(len(ja) + 1)
    with pytest.raises(ValueError):
        build_system(cfg, OBJECTIVES["side"], classifier=build_classifier(other).freeze())
    with pytest.raises(ValueError):
        build_system(cfg, OBJECTIVES["side"])


# -- back translation ---------------------------------------------------------

def test_backtranslation_lambda_zero_is_leg_sum():
    ja, en = vocabs()
    obj = ObjectiveConfig(Task.BACKTRANSLATE, 0.0)
    system = micro_system(obj, ja, en, perturb=0.1)
    batch = micro_batch(obj, ja, en)
    parts = system.losses(batch)
    leg1 = reconstruction_loss(system.ja_en(batch.ja, batch.en[:, :-1]), batch.en)
    leg2 = reconstruction_loss(system.en_ja(batch.en, batch.ja[:, :-1]), batch.ja)
    assert parts.total.item() == pytest.approx((leg1 + leg2).item(), abs=1e-12)


class _Forced(torch.nn.Module):
    """Stand-in seq2seq whose logits put all mass on the gold next token."""

    def __init__(self, gold, vocab):
        super().__init__()
        self.gold, self.vocab = gold, vocab

    def _logits(self):
        out = torch.full((*self.gold[:, 1:].shape, self.vocab), -1e4)
        return out.scatter(-1, self.gold[:, 1:, None], 0.0)

    def forward(self, src, tgt_in, rng=None):
        return self._logits()

    def encode(self, src, rng=None):
        return torch.zeros(*src.shape, 4), src == PAD

    def decode(self, tgt_in, memory, pad, rng=None):
        return self._logits()


class _Sure(torch.nn.Module):
    """Stand-in classifier that is certain of the given labels."""

    def __init__(self, labels, vocab):
        super().__init__()
        self.labels, self.vocab_size = labels, vocab

    def forward(self, x, pad_mask, rng=None):
        return 60.0 * (2 * self.labels.to(torch.float64) - 1)


def test_backtranslation_perfect_is_zero():
    ja, en = vocabs()
    batch = micro_batch(OBJECTIVES["backtranslate"], ja, en)
    parts = backtranslation_loss(_Forced(batch.en, len(en)), _Forced(batch.ja, len(ja)),
                                 _Sure(batch.labels, len(ja)), batch.ja, batch.en, batch.labels, 0.5)
    assert parts.rec.item() == 0.0
    assert parts.total.item() == pytest.approx(0.0, abs=1e-20)


def test_backtranslation_needs_english():
    ja, en = vocabs()
    obj = ObjectiveConfig(Task.BACKTRANSLATE, 0.5)
    system = micro_system(obj, ja, en)
    batch = micro_batch(OBJECTIVES["side"], ja, en)
    with pytest.raises(ValueError):
        system.losses(batch)


# -- shared properties --------------------------------------------------------

@pytest.mark.parametrize("name", list(OBJECTIVES))
def test_losses_non_negative(name):
    ja, en = vocabs()
    obj = OBJECTIVES[name]
    parts = micro_system(obj, ja, en, perturb=0.3).losses(micro_batch(obj, ja, en))
    assert parts.total.item() >= 0 and parts.rec.item() >= 0 and parts.form.item() >= 0


@pytest.mark.parametrize("name", list(OBJECTIVES))
def test_gradcheck_micro_batch(name):
    ja, en = vocabs()
    obj = OBJECTIVES[name]
    system = micro_system(obj, ja, en, perturb=0.1)
    batch = micro_batch(obj, ja, en)
    report = finite_difference_check(lambda: system.losses(batch).total, system.trainable(), samples=4)
    assert report.ok, report.per_parameter()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["probe", "side", "augmented_add", "backtranslate"]))
def test_lambda_boundaries(seed, name):
    ja, en = vocabs()
    base = OBJECTIVES[name]
    gen = torch.Generator().manual_seed(seed)
    batch = random_batch(gen, ja, en)
    out = {}
    for lam in (0.0, 1.0):
        obj = ObjectiveConfig(base.task, lam, base.augment)
        out[lam] = micro_system(obj, ja, en, perturb=0.1).losses(batch)
    assert abs(out[0.0].total.item() - out[0.0].rec.item()) <= 1e-12
    assert abs(out[1.0].total.item() - out[1.0].form.item()) <= 1e-12


def test_float64_init_ignores_global_default_dtype():
    cfg = ModelConfig(12, 12, d_model=8, n_heads=2, ffn_dim=16, max_len=20)
    obj = ObjectiveConfig(Task.RECONSTRUCT)
    built = {}
    for default in (torch.float32, torch.float64):
        torch.set_default_dtype(default)
        built[default] = (build_system(cfg, obj, seed=3), build_classifier(cfg, seed=3))
    torch.set_default_dtype(torch.float64)
    for a, b in zip(built[torch.float32], built[torch.float64]):
        sa, sb = a.state_dict(), b.state_dict()
        assert all(sa[k].dtype == torch.float64 and torch.equal(sa[k], sb[k]) for k in sa)
