"""Versioned binary checkpoints (.kbt) with an integrity checksum.

Layout, all little-endian, in order:

  magic            8 bytes  b"KBERTCKP"
  version          u32      format version (currently 1)
  source_format    u32      reserved for converted checkpoints, 0 for native
  layers/heads/hidden/d_ff/max_seq_len   5 x u32
  dropout          f64
  tokenize_mode    u8       0 = whitespace, 1 = char
  mask_after_scale u8
  head_kind        u8       0 = none, 1 = classify, 2 = tag
  vocab            u32 count, then per token u32 length + utf-8 bytes
  labels           u32 count, same string encoding (empty without a head)
  tensors          u32 count, then per tensor: name string, u32 ndim,
                   u32 dims, float64 row-major payload; sorted by name
  checksum         32 bytes, sha256 of everything above

Sorting the tensor records by name makes the byte stream a canonical
function of the model state, so save -> load -> save reproduces the file
bit for bit.
"""

from __future__ import annotations

import hashlib
import io
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .heads import TaskHead
from .model import KBertModel
from .tokenizer import Vocabulary

MAGIC = b"KBERTCKP"
VERSION = 1
_MODES = ("whitespace", "char")
_KINDS = (None, "classify", "tag")


class CheckpointError(Exception):
    """Malformed or inconsistent checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """File declares a format version this code does not read."""


class CheckpointIntegrityError(CheckpointError):
    """Stored checksum does not match the file contents."""


def _write_str(buf: io.BytesIO, s: str) -> None:
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        out = self.raw[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        vals = struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))
        return vals[0] if len(vals) == 1 else vals

    def string(self) -> str:
        return self.take(self.unpack("I")).decode("utf-8")


def expected_shapes(
    config: ModelConfig, vocab_size: int, num_classes: int | None
) -> dict[str, tuple[int, ...]]:
    """Tensor name -> shape for a model of this geometry."""
    h, f = config.hidden, config.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "embed.token": (vocab_size, h),
        "embed.position": (config.max_seq_len, h),
        "embed.segment": (2, h),
    }
    for i in range(config.layers):
        p = f"layer{i}."
        for name in ("wq", "wk", "wv", "wo"):
            shapes[p + name] = (h, h)
        for name in ("bq", "bk", "bv", "bo", "ln1_g", "ln1_b", "ln2_g", "ln2_b"):
            shapes[p + name] = (h,)
        shapes[p + "ffn_w1"] = (h, f)
        shapes[p + "ffn_b1"] = (f,)
        shapes[p + "ffn_w2"] = (f, h)
        shapes[p + "ffn_b2"] = (h,)
    if num_classes is not None:
        shapes["head.w"] = (h, num_classes)
        shapes["head.b"] = (num_classes,)
    return shapes


def save_checkpoint(path: str | Path, model: KBertModel, head: TaskHead | None = None) -> None:
    tensors = dict(model.params)
    if head is not None:
        tensors.update(head.params)
    for name, arr in tensors.items():
        if not np.isfinite(arr).all():
            raise ValueError(f"refusing to save non-finite tensor {name!r}")

    cfg = model.config
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, 0))
    buf.write(
        struct.pack(
            "<IIIII", cfg.layers, cfg.heads, cfg.hidden, cfg.d_ff, cfg.max_seq_len
        )
    )
    buf.write(struct.pack("<d", cfg.dropout))
    buf.write(
        struct.pack(
            "<BBB",
            _MODES.index(cfg.tokenize_mode),
            int(cfg.mask_after_scale),
            _KINDS.index(head.kind) if head is not None else 0,
        )
    )
    buf.write(struct.pack("<I", len(model.vocab)))
    for token in model.vocab.tokens:
        _write_str(buf, token)
    labels = head.labels if head is not None else []
    buf.write(struct.pack("<I", len(labels)))
    for label in labels:
        _write_str(buf, label)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
        _write_str(buf, name)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    payload = buf.getvalue()
    digest = hashlib.sha256(payload).digest()
    Path(path).write_bytes(payload + digest)


def _read_body(raw: bytes, verify: bool = True):
    if len(raw) < len(MAGIC) + 32:
        raise CheckpointError("file too short to be a checkpoint")
    payload, digest = raw[:-32], raw[-32:]
    if payload[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    if verify and hashlib.sha256(payload).digest() != digest:
        raise CheckpointIntegrityError("checksum mismatch; file is corrupt")
    r = _Reader(payload)
    r.take(len(MAGIC))
    version, source_format = r.unpack("II")
    if version != VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint version {version} (this build reads {VERSION})"
        )
    layers, heads, hidden, d_ff, max_seq_len = r.unpack("IIIII")
    dropout = r.unpack("d")
    mode_i, mask_after, kind_i = r.unpack("BBB")
    if mode_i >= len(_MODES):
        raise CheckpointError(f"unknown tokenize mode code {mode_i}")
    if kind_i >= len(_KINDS):
        raise CheckpointError(f"unknown head kind code {kind_i}")
    config = ModelConfig(
        layers=layers,
        heads=heads,
        hidden=hidden,
        d_ff=d_ff,
        max_seq_len=max_seq_len,
        dropout=dropout,
        tokenize_mode=_MODES[mode_i],
        mask_after_scale=bool(mask_after),
    )
    vocab_tokens = [r.string() for _ in range(r.unpack("I"))]
    labels = [r.string() for _ in range(r.unpack("I"))]
    tensors: dict[str, np.ndarray] = {}
    for _ in range(r.unpack("I")):
        name = r.string()
        ndim = r.unpack("I")
        shape = tuple(r.unpack("I") for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(r.take(count * 8), dtype="<f8").reshape(shape)
        tensors[name] = data.copy()
    if r.off != len(payload):
        raise CheckpointError("trailing bytes after tensor records")
    return config, source_format, vocab_tokens, labels, _KINDS[kind_i], tensors


def load_checkpoint(path: str | Path) -> tuple[KBertModel, TaskHead | None]:
    raw = Path(path).read_bytes()
    config, _, vocab_tokens, labels, kind, tensors = _read_body(raw)
    num_classes = len(labels) if kind is not None else None
    shapes = expected_shapes(config, len(vocab_tokens), num_classes)
    missing = sorted(set(shapes) - set(tensors))
    extra = sorted(set(tensors) - set(shapes))
    if missing or extra:
        raise CheckpointError(
            f"tensor set mismatch: missing {missing or 'none'}, unexpected {extra or 'none'}"
        )
    for name, shape in shapes.items():
        if tensors[name].shape != shape:
            raise CheckpointError(
                f"shape mismatch for tensor {name!r}: file has "
                f"{tensors[name].shape}, config implies {shape}"
            )
    vocab = Vocabulary(vocab_tokens)
    head_tensors = {}
    if kind is not None:
        head_tensors = {"head.w": tensors.pop("head.w"), "head.b": tensors.pop("head.b")}
    model = KBertModel(config, vocab, tensors)
    head = TaskHead(kind, labels, head_tensors) if kind is not None else None
    return model, head


def inspect_checkpoint(path: str | Path) -> dict:
    """Summary of a checkpoint without building a model from it."""
    raw = Path(path).read_bytes()
    config, source_format, vocab_tokens, labels, kind, tensors = _read_body(raw)
    return {
        "version": VERSION,
        "source_format": source_format,
        "config": {
            "layers": config.layers,
            "heads": config.heads,
            "hidden": config.hidden,
            "d_ff": config.d_ff,
            "max_seq_len": config.max_seq_len,
            "dropout": config.dropout,
            "tokenize_mode": config.tokenize_mode,
            "mask_after_scale": config.mask_after_scale,
        },
        "vocab_size": len(vocab_tokens),
        "head_kind": kind,
        "labels": labels,
        "tensors": {name: list(t.shape) for name, t in sorted(tensors.items())},
        "parameters": int(sum(t.size for t in tensors.values())),
        "file_bytes": len(raw),
        "checksum": raw[-32:].hex(),
    }
