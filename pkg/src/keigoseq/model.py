"""A small post-LayerNorm Transformer encoder-decoder.

Dropout draws from an explicit ``torch.Generator``: passing ``rng`` to a
forward call selects training behaviour, ``rng=None`` is eval mode and fully
deterministic.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .codec import BOS, EOS, PAD


@dataclass
class ModelConfig:
    vocab_src: int
    vocab_tgt: int
    d_model: int = 512
    n_heads: int = 8
    n_layers: int = 1
    ffn_dim: int = 0  # 0 means 4 * d_model
    dropout: float = 0.1
    max_len: int = 256

    def __post_init__(self):
        if self.ffn_dim == 0:
            self.ffn_dim = 4 * self.d_model
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.d_model % 2:
            raise ValueError("d_model must be even for sinusoidal positions")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if min(self.vocab_src, self.vocab_tgt, self.n_layers, self.ffn_dim, self.max_len) < 1:
            raise ValueError("sizes must be positive")

    @classmethod
    def desk(cls, vocab_src: int, vocab_tgt: int, **overrides) -> "ModelConfig":
        """Small configuration used for CPU-scale runs."""
        kw = dict(d_model=64, n_heads=4, n_layers=1, ffn_dim=256, dropout=0.1)
        kw.update(overrides)
        return cls(vocab_src=vocab_src, vocab_tgt=vocab_tgt, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def sinusoidal_positions(max_len: int, d_model: int, dtype=torch.float64) -> torch.Tensor:
    if d_model % 2:
        raise ValueError("d_model must be even")
    pos = torch.arange(max_len, dtype=torch.float64).unsqueeze(1)
    i2 = torch.arange(0, d_model, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i2 / d_model)
    table = torch.zeros(max_len, d_model, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angle)
    table[:, 1::2] = torch.cos(angle)
    return table.to(dtype)


def dropout(x: torch.Tensor, p: float, rng: torch.Generator | None) -> torch.Tensor:
    if rng is None or p == 0.0:
        return x
    keep = torch.rand(x.shape, generator=rng, dtype=x.dtype) >= p
    return x * keep / (1.0 - p)


def scaled_dot_attention(q, k, v, mask=None, return_weights=False):
    """softmax(q k^T / sqrt(d)) v.

    ``mask`` is boolean and broadcastable to ``[..., Lq, Lk]``; True marks a
    disallowed key. Every query must keep at least one allowed key.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValueError(f"shape mismatch: q{tuple(q.shape)} k{tuple(k.shape)} v{tuple(v.shape)}")
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    if mask is not None:
        mask = mask.expand(scores.shape)
        if bool(mask.all(dim=-1).any()):
            raise ValueError("attention row with every key masked")
        scores = scores.masked_fill(mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    out = weights @ v
    return (out, weights) if return_weights else out


def causal_mask(length: int, device=None) -> torch.Tensor:
    return torch.triu(torch.ones(length, length, dtype=torch.bool, device=device), diagonal=1)


class MultiHeadAttention(nn.Module):
    # no projection biases: a key bias only shifts scores uniformly per query
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.q = nn.Linear(d_model, d_model, bias=False)
        self.k = nn.Linear(d_model, d_model, bias=False)
        self.v = nn.Linear(d_model, d_model, bias=False)
        self.o = nn.Linear(d_model, d_model, bias=False)

    def _heads(self, x):
        b, n, d = x.shape
        return x.view(b, n, self.n_heads, d // self.n_heads).transpose(1, 2)

    def forward(self, x_q, x_kv, mask):
        q, k, v = self._heads(self.q(x_q)), self._heads(self.k(x_kv)), self._heads(self.v(x_kv))
        out = scaled_dot_attention(q, k, v, mask.unsqueeze(1))
        b, _, n, _ = out.shape
        return self.o(out.transpose(1, 2).reshape(b, n, -1))


class FeedForward(nn.Module):
    def __init__(self, d_model: int, ffn_dim: int):
        super().__init__()
        self.inner = nn.Linear(d_model, ffn_dim)
        self.outer = nn.Linear(ffn_dim, d_model)

    def forward(self, x, p, rng):
        return self.outer(dropout(F.relu(self.inner(x)), p, rng))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.p = cfg.dropout
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim)
        self.norm2 = nn.LayerNorm(cfg.d_model)

    def forward(self, x, key_pad, rng=None):
        mask = key_pad[:, None, :]
        x = self.norm1(x + dropout(self.self_attn(x, x, mask), self.p, rng))
        return self.norm2(x + dropout(self.ffn(x, self.p, rng), self.p, rng))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.p = cfg.dropout
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim)
        self.norm3 = nn.LayerNorm(cfg.d_model)

    def forward(self, y, memory, self_mask, memory_pad, rng=None):
        y = self.norm1(y + dropout(self.self_attn(y, y, self_mask), self.p, rng))
        y = self.norm2(y + dropout(self.cross_attn(y, memory, memory_pad[:, None, :]), self.p, rng))
        return self.norm3(y + dropout(self.ffn(y, self.p, rng), self.p, rng))


class _Embedder(nn.Module):
    def __init__(self, vocab: int, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(vocab, cfg.d_model)
        self.register_buffer(
            "positions", sinusoidal_positions(cfg.max_len, cfg.d_model), persistent=False
        )

    def _check_len(self, n: int):
        if n > self.cfg.max_len:
            raise ValueError(f"sequence length {n} exceeds max_len {self.cfg.max_len}")

    def embed_ids(self, ids):
        self._check_len(ids.shape[1])
        e = self.embed(ids) * math.sqrt(self.cfg.d_model)
        return e + self.positions[: ids.shape[1]].to(e.dtype)

    def embed_soft(self, probs):
        """Expected embedding under per-position distributions ``[B, L, V]``."""
        self._check_len(probs.shape[1])
        e = (probs @ self.embed.weight) * math.sqrt(self.cfg.d_model)
        return e + self.positions[: probs.shape[1]].to(e.dtype)


class Encoder(_Embedder):
    def __init__(self, vocab: int, cfg: ModelConfig):
        super().__init__(vocab, cfg)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))

    def forward(self, x, pad_mask, rng=None):
        """``x`` is either ids ``[B, L]`` or a soft input ``[B, L, V]``."""
        h = self.embed_ids(x) if x.dim() == 2 else self.embed_soft(x)
        h = dropout(h, self.cfg.dropout, rng)
        for layer in self.layers:
            h = layer(h, pad_mask, rng)
        return h


class Decoder(_Embedder):
    def __init__(self, vocab: int, cfg: ModelConfig):
        super().__init__(vocab, cfg)
        self.layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.n_layers))
        self.out = nn.Linear(cfg.d_model, vocab)

    def forward(self, tgt_in, memory, memory_pad, rng=None):
        n = tgt_in.shape[1]
        # position 0 is always BOS, so no query loses every key
        self_mask = causal_mask(n, tgt_in.device)[None] | (tgt_in == PAD)[:, None, :]
        h = dropout(self.embed_ids(tgt_in), self.cfg.dropout, rng)
        for layer in self.layers:
            h = layer(h, memory, self_mask, memory_pad, rng)
        return self.out(h)


class Seq2Seq(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg.vocab_src, cfg)
        self.decoder = Decoder(cfg.vocab_tgt, cfg)

    def encode(self, src, rng=None):
        pad = src == PAD
        return self.encoder(src, pad, rng), pad

    def decode(self, tgt_in, memory, memory_pad, rng=None):
        return self.decoder(tgt_in, memory, memory_pad, rng)

    def forward(self, src, tgt_in, rng=None):
        memory, pad = self.encode(src, rng)
        return self.decode(tgt_in, memory, pad, rng)


def init_parameters(module: nn.Module, seed: int) -> nn.Module:
    """Re-initialize every parameter deterministically.

    Each parameter draws from its own generator keyed on (seed, name), so a
    parameter's initial value does not depend on which other modules exist.
    """
    with torch.no_grad():
        for name, p in module.named_parameters():
            gen = torch.Generator().manual_seed((seed * 0x9E3779B1 + zlib.crc32(name.encode())) % 2**63)
            leaf = name.rsplit(".", 1)[-1]
            if "norm" in name:
                p.fill_(1.0 if leaf == "weight" else 0.0)
            elif name.endswith("embed.weight"):
                p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * p.shape[1] ** -0.5)
            elif p.dim() >= 2:
                bound = math.sqrt(6.0 / (p.shape[0] + p.shape[1]))
                p.copy_((torch.rand(p.shape, generator=gen, dtype=torch.float64) * 2 - 1) * bound)
            elif leaf == "bias":
                p.zero_()
    return module


def _ids_tensor(ids) -> torch.Tensor:
    t = torch.as_tensor(ids, dtype=torch.long)
    return t.unsqueeze(0) if t.dim() == 1 else t


def _rng_for(mode: str, seed: int | None) -> torch.Generator | None:
    if mode == "eval":
        return None
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if seed is None:
        raise ValueError("train mode needs an explicit dropout seed")
    return torch.Generator().manual_seed(seed)


def encoder_forward(model: Seq2Seq, src_ids, mode: str = "eval", seed: int | None = None):
    """Encoder output ``[len, d_model]`` for a single unpadded id sequence."""
    src = _ids_tensor(src_ids)
    memory, _ = model.encode(src, _rng_for(mode, seed))
    return memory[0]


def decoder_forward(model: Seq2Seq, tgt_ids, memory, mode: str = "eval", seed: int | None = None):
    """Logits ``[len, vocab_tgt]`` for a single target sequence over ``memory``."""
    tgt = _ids_tensor(tgt_ids)
    if memory.dim() == 2:
        memory = memory.unsqueeze(0)
    pad = torch.zeros(memory.shape[:2], dtype=torch.bool)
    return model.decode(tgt, memory, pad, _rng_for(mode, seed))[0]


def max_output_length(src_ids, cfg: ModelConfig) -> int:
    content = sum(1 for i in src_ids if int(i) not in (PAD, BOS, EOS))
    return min(2 * content + 10, cfg.max_len - 1)


@torch.no_grad()
def greedy_decode_batch(model: Seq2Seq, sources, memory_fn=None) -> list[list[int]]:
    """Greedy decoding for a list of id sequences (each with BOS/EOS).

    ``memory_fn(memory)`` may rewrite the encoder output before decoding; the
    formality augmentation hooks in here. Ties go to the lowest token id.
    Returned sequences exclude BOS and EOS.
    """
    if not sources:
        return []
    limits = [max_output_length(s, model.cfg) for s in sources]
    width = max(len(s) for s in sources)
    src = torch.full((len(sources), width), PAD, dtype=torch.long)
    for i, s in enumerate(sources):
        src[i, : len(s)] = torch.as_tensor(list(s), dtype=torch.long)
    memory, pad = model.encode(src)
    if memory_fn is not None:
        memory = memory_fn(memory)
    out = [[] for _ in sources]
    done = [lim == 0 for lim in limits]
    tgt = torch.full((len(sources), 1), BOS, dtype=torch.long)
    for _ in range(max(limits)):
        if all(done):
            break
        logits = model.decode(tgt, memory, pad)[:, -1]
        nxt = torch.argmax(logits, dim=-1)
        step = torch.full((len(sources),), PAD, dtype=torch.long)
        for i in range(len(sources)):
            if done[i]:
                continue
            tok = int(nxt[i])
            if tok == EOS:
                done[i] = True
                continue
            out[i].append(tok)
            step[i] = tok
            if len(out[i]) >= limits[i]:
                done[i] = True
        tgt = torch.cat([tgt, step[:, None]], dim=1)
    return out


def greedy_decode(model: Seq2Seq, src_ids, memory_fn=None) -> list[int]:
    return greedy_decode_batch(model, [list(src_ids)], memory_fn)[0]
