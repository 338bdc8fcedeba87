import pytest
import torch
from hypothesis import given, settings, strategies as st

from keigoseq.augment import AugmentMode, AugmentVectors, apply_augmentation, init_augment_vectors

ADD, MUL = AugmentMode.ADDITIVE, AugmentMode.MULTIPLICATIVE


def test_init_values():
    add = init_augment_vectors(4, ADD)
    assert add.r0.tolist() == [0, 0, 0, 0] and add.r1.tolist() == [0, 0, 0, 0]
    mul = init_augment_vectors(4, MUL)
    assert mul.r0.tolist() == [1, 1, 1, 1] and mul.r1.tolist() == [1, 1, 1, 1]
    assert init_augment_vectors(4, AugmentMode.NONE) is None
    assert add.r0.requires_grad and mul.r1.requires_grad


@pytest.mark.parametrize("mode", [ADD, MUL])
def test_identity_at_init_exact(mode):
    x = torch.randn(5, 4, dtype=torch.float64)
    vec = init_augment_vectors(4, mode).double()
    for s in (0, 1):
        assert torch.equal(apply_augmentation(vec, x, s), x)


def test_additive_arithmetic():
    vec = init_augment_vectors(2, ADD)
    with torch.no_grad():
        vec.r1.copy_(torch.tensor([0.5, -1.0]))
    out = apply_augmentation(vec, torch.tensor([[1.0, 2.0]]), 1)
    assert out.tolist() == [[1.5, 1.0]]


def test_multiplicative_arithmetic():
    vec = init_augment_vectors(2, MUL)
    with torch.no_grad():
        vec.r0.copy_(torch.tensor([2.0, -1.0]))
    out = apply_augmentation(vec, torch.tensor([[1.0, 3.0], [0.5, 0.5]]), 0)
    assert out.tolist() == [[2.0, -3.0], [1.0, -0.5]]


def test_label_routing_per_batch_element():
    vec = init_augment_vectors(3, ADD)
    with torch.no_grad():
        vec.r0.fill_(-1.0)
        vec.r1.fill_(1.0)
    x = torch.zeros(2, 4, 3)
    out = apply_augmentation(vec, x, torch.tensor([0, 1]))
    assert bool((out[0] == -1).all()) and bool((out[1] == 1).all())


def test_errors():
    vec = init_augment_vectors(3, ADD)
    with pytest.raises(ValueError):
        apply_augmentation(vec, torch.zeros(2, 4), 0)
    with pytest.raises(ValueError):
        apply_augmentation(vec, torch.zeros(2, 3), 2)
    with pytest.raises(ValueError):
        apply_augmentation(None, torch.zeros(2, 3), 0)
    with pytest.raises(ValueError):
        AugmentVectors(3, AugmentMode.NONE)


def test_gradients_reach_selected_vector_only():
    vec = init_augment_vectors(3, MUL).double()
    x = torch.randn(4, 3, dtype=torch.float64, requires_grad=True)
    apply_augmentation(vec, x, 1).sum().backward()
    assert vec.r0.grad is None or bool((vec.r0.grad == 0).all())
    assert torch.allclose(vec.r1.grad, x.detach().sum(0))
    assert x.grad is not None


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([ADD, MUL]), st.integers(1, 6), st.integers(0, 1), st.integers(0, 2**31 - 1))
def test_shape_preserved(mode, n, s, seed):
    g = torch.Generator().manual_seed(seed)
    vec = init_augment_vectors(4, mode)
    with torch.no_grad():
        vec.r0.copy_(torch.randn(4, generator=g))
        vec.r1.copy_(torch.randn(4, generator=g))
    x = torch.randn(n, 4, generator=g)
    out = apply_augmentation(vec, x, s)
    assert out.shape == x.shape
    r = vec.r1 if s else vec.r0
    assert torch.equal(out, x + r if mode is ADD else x * r)
