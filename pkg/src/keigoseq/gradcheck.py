"""Central finite-difference verification of autograd gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import torch


@dataclass
class CoordinateCheck:
    name: str
    index: int
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        denom = max(abs(self.analytic), abs(self.numeric), 1e-12)
        return abs(self.analytic - self.numeric) / denom


@dataclass
class GradCheckReport:
    tolerance: float
    checks: list[CoordinateCheck] = field(default_factory=list)

    @property
    def failures(self) -> list[CoordinateCheck]:
        return [c for c in self.checks if c.rel_error >= self.tolerance]

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def max_rel_error(self) -> float:
        return max((c.rel_error for c in self.checks), default=0.0)

    def per_parameter(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for c in self.checks:
            out[c.name] = max(out.get(c.name, 0.0), c.rel_error)
        return out


def finite_difference_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Mapping[str, torch.Tensor],
    epsilon: float = 1e-5,
    tolerance: float = 1e-5,
    samples: int = 10,
    seed: int = 0,
) -> GradCheckReport:
    """Compare autograd gradients of ``loss_fn()`` with central differences.

    ``samples`` coordinates per parameter are drawn without replacement (all
    of them for smaller tensors). Parameters must be float64 and ``loss_fn``
    must be deterministic (dropout off).
    """
    names = list(params)
    tensors = [params[n] for n in names]
    for n, t in zip(names, tensors):
        if t.dtype != torch.float64:
            raise ValueError(f"parameter {n} is {t.dtype}; the check needs float64")
    loss = loss_fn()
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    gen = torch.Generator().manual_seed(seed)
    report = GradCheckReport(tolerance)
    for name, p, g in zip(names, tensors, grads):
        g = torch.zeros_like(p) if g is None else g
        flat = p.data.view(-1)
        k = min(samples, flat.numel())
        for idx in torch.randperm(flat.numel(), generator=gen)[:k].tolist():
            orig = flat[idx].item()
            with torch.no_grad():
                flat[idx] = orig + epsilon
                up = loss_fn().item()
                flat[idx] = orig - epsilon
                down = loss_fn().item()
                flat[idx] = orig
            numeric = (up - down) / (2 * epsilon)
            report.checks.append(CoordinateCheck(name, idx, g.view(-1)[idx].item(), numeric))
    return report
