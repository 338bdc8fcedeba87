"""Learned formality augmentation of the encoder output.

Two trainable vectors ``r0`` (informal) and ``r1`` (formal) are applied to
every position of the encoder output, either added or multiplied
element-wise, selected by the sentence's formality bit.
"""

from __future__ import annotations

import enum

import torch
import torch.nn as nn


class AugmentMode(enum.Enum):
    NONE = "none"
    ADDITIVE = "add"
    MULTIPLICATIVE = "mul"


class AugmentVectors(nn.Module):
    def __init__(self, d_model: int, mode: AugmentMode):
        super().__init__()
        if mode is AugmentMode.NONE:
            raise ValueError("AugmentVectors needs an additive or multiplicative mode")
        self.mode = mode
        fill = 0.0 if mode is AugmentMode.ADDITIVE else 1.0
        # identity at init in both modes
        self.r0 = nn.Parameter(torch.full((d_model,), fill))
        self.r1 = nn.Parameter(torch.full((d_model,), fill))

    @property
    def d_model(self) -> int:
        return self.r0.shape[0]

    def forward(self, encoder_output, style):
        return apply_augmentation(self, encoder_output, style)


def init_augment_vectors(d_model: int, mode: AugmentMode) -> AugmentVectors | None:
    if mode is AugmentMode.NONE:
        return None
    return AugmentVectors(d_model, mode)


def apply_augmentation(vectors: AugmentVectors, encoder_output: torch.Tensor, style) -> torch.Tensor:
    """Shift or scale every row of ``encoder_output`` by ``r_style``.

    ``encoder_output`` is ``[len, d]`` with an int style, or ``[B, len, d]``
    with an int or a length-B tensor of styles.
    """
    if vectors is None or vectors.mode is AugmentMode.NONE:
        raise ValueError("augmentation mode is None")
    if encoder_output.shape[-1] != vectors.d_model:
        raise ValueError(
            f"encoder output width {encoder_output.shape[-1]} != d_model {vectors.d_model}"
        )
    s = torch.as_tensor(style, dtype=torch.long)
    if bool(((s != 0) & (s != 1)).any()):
        raise ValueError(f"style must be 0 or 1, got {style!r}")
    table = torch.stack([vectors.r0, vectors.r1])
    if s.dim() == 0:
        r = table[s]
    else:
        if encoder_output.dim() != 3 or s.shape[0] != encoder_output.shape[0]:
            raise ValueError("per-sentence styles need a batched [B, len, d] encoder output")
        r = table[s].unsqueeze(1)
    if vectors.mode is AugmentMode.ADDITIVE:
        return encoder_output + r
    return encoder_output * r
