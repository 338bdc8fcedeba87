"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"KSQ1"  u32 version (=1)
    repeated records until EOF:
        u32 name_len, UTF-8 name,
        u8 dtype (0 = float32, 1 = float64), u8 rank, rank x u32 dims,
        little-endian payload

Names are namespaced: ``param/<name>`` for model state, ``adam.m/<name>``
and ``adam.v/<name>`` for optimizer moments, ``adam/<field>`` for optimizer
scalars and ``config/<key>`` for run configuration (all float64 scalars).
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np
import torch

from .augment import AugmentMode
from .errors import CheckpointError
from .model import ModelConfig
from .objectives import ObjectiveConfig, Task
from .system import FormalitySystem
from .trainer import DTYPES, OptimState, TrainConfig

MAGIC = b"KSQ1"
VERSION = 1
_DTYPE_CODES = {torch.float32: (0, "<f4"), torch.float64: (1, "<f8")}
_CODE_DTYPES = {0: (torch.float32, "<f4", 4), 1: (torch.float64, "<f8", 8)}

_TASKS = list(Task)
_AUGMENTS = list(AugmentMode)


def write_records(path, records: Mapping[str, torch.Tensor]) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, tensor in records.items():
        if tensor.dtype not in _DTYPE_CODES:
            raise CheckpointError(f"record {name} has unsupported dtype {tensor.dtype}")
        code, np_dtype = _DTYPE_CODES[tensor.dtype]
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<BB", code, tensor.dim()))
        parts.append(struct.pack(f"<{tensor.dim()}I", *tensor.shape))
        parts.append(tensor.detach().cpu().contiguous().numpy().astype(np_dtype).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_records(path) -> dict[str, torch.Tensor]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    if len(buf) < 8:
        raise CheckpointError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: version mismatch (file {version}, supported {VERSION})")
    pos = 8
    out: dict[str, torch.Tensor] = {}

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated record")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    while pos < len(buf):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: record name is not UTF-8") from exc
        code, rank = struct.unpack("<BB", take(2))
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"{path}: record {name} has unknown dtype code {code}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        dtype, np_dtype, width = _CODE_DTYPES[code]
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(take(count * width), dtype=np_dtype).reshape(dims)
        out[name] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="))).to(dtype)
    return out


def _scalar(value) -> torch.Tensor:
    return torch.tensor(float(value), dtype=torch.float64)


def _encode_config(system: FormalitySystem, train: TrainConfig) -> dict[str, float]:
    cfg = system.cfg
    obj = system.objective
    return {
        "d_model": cfg.d_model,
        "n_heads": cfg.n_heads,
        "n_layers": cfg.n_layers,
        "ffn_dim": cfg.ffn_dim,
        "dropout": cfg.dropout,
        "max_len": cfg.max_len,
        "vocab_src": cfg.vocab_src,
        "vocab_tgt": cfg.vocab_tgt,
        "vocab_en": system.en_vocab_size or 0,
        "task": _TASKS.index(obj.task),
        "augment": _AUGMENTS.index(obj.augment),
        "lambda": obj.lam,
        "precision": train.precision,
        "batch_size": train.batch_size,
        "max_steps": train.max_steps,
        "checkpoint_every": train.checkpoint_every,
        "lr": train.lr,
        # float64 is exact only up to 2**53, so the 64-bit seed goes in halves
        "seed_lo": train.seed & 0xFFFFFFFF,
        "seed_hi": (train.seed >> 32) & 0xFFFFFFFF,
    }


def save_checkpoint(path, system: FormalitySystem, state: OptimState | None,
                    train: TrainConfig) -> None:
    records: dict[str, torch.Tensor] = {}
    for key, value in _encode_config(system, train).items():
        records[f"config/{key}"] = _scalar(value)
    for name, tensor in system.state_dict().items():
        records[f"param/{name}"] = tensor
    if state is not None:
        for field in ("t", "lr", "beta1", "beta2", "eps"):
            records[f"adam/{field}"] = _scalar(getattr(state, field))
        for name in state.m:
            records[f"adam.m/{name}"] = state.m[name]
            records[f"adam.v/{name}"] = state.v[name]
    write_records(path, records)


def load_checkpoint(path) -> tuple[FormalitySystem, OptimState | None, TrainConfig]:
    records = read_records(path)
    try:
        conf = {k.split("/", 1)[1]: v.item() for k, v in records.items() if k.startswith("config/")}
        cfg = ModelConfig(
            vocab_src=int(conf["vocab_src"]),
            vocab_tgt=int(conf["vocab_tgt"]),
            d_model=int(conf["d_model"]),
            n_heads=int(conf["n_heads"]),
            n_layers=int(conf["n_layers"]),
            ffn_dim=int(conf["ffn_dim"]),
            dropout=conf["dropout"],
            max_len=int(conf["max_len"]),
        )
        objective = ObjectiveConfig(
            _TASKS[int(conf["task"])], conf["lambda"], _AUGMENTS[int(conf["augment"])]
        )
        train = TrainConfig(
            batch_size=int(conf["batch_size"]),
            max_steps=int(conf["max_steps"]),
            seed=int(conf["seed_lo"]) | (int(conf["seed_hi"]) << 32),
            precision=int(conf["precision"]),
            checkpoint_every=int(conf["checkpoint_every"]),
            lr=conf["lr"],
        )
    except (KeyError, IndexError, ValueError) as exc:
        raise CheckpointError(f"{path}: incomplete or invalid configuration ({exc})") from exc
    en = int(conf["vocab_en"]) or None
    system = FormalitySystem(cfg, objective, en_vocab_size=en).to(DTYPES[train.precision])
    params = {k[len("param/"):]: v for k, v in records.items() if k.startswith("param/")}
    try:
        system.load_state_dict(params, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameters do not match configuration ({exc})") from exc
    state = None
    if "adam/t" in records:
        trainable = system.trainable()
        m = {k[len("adam.m/"):]: v for k, v in records.items() if k.startswith("adam.m/")}
        v = {k[len("adam.v/"):]: t for k, t in records.items() if k.startswith("adam.v/")}
        if set(m) != set(trainable) or set(v) != set(trainable):
            raise CheckpointError(f"{path}: optimizer moments do not match trainable parameters")
        state = OptimState(
            m=m, v=v,
            t=int(records["adam/t"].item()),
            lr=records["adam/lr"].item(),
            beta1=records["adam/beta1"].item(),
            beta2=records["adam/beta2"].item(),
            eps=records["adam/eps"].item(),
        )
    system.eval()
    return system, state, train
