"""Binary checkpoint container.

Layout (all integers little-endian u32, all text UTF-8):

    magic   b"SCM1"
    version u32
    config  u32 length + flat key=value text
    vocab   u32 length + sorted token<TAB>id lines
    count   u32 number of parameter records
    record  u32 name length + name
            u32 ndim + ndim * u32 dims
            row-major float32 little-endian payload
    digest  sha256 of everything above (32 raw bytes)

Training runs at 64-bit; payloads are quantized to 32-bit on save, so a
loaded model is the quantized twin of the saved one and re-saving it
reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from scmsel.errors import DataError

MAGIC = b"SCM1"
VERSION = 1


def _pack_block(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save(path, config_text: str, vocab_lines: list[str], named_params) -> None:
    """named_params: iterable of (name, Tensor-or-ndarray)."""
    body = [MAGIC, struct.pack("<I", VERSION)]
    body.append(_pack_block(config_text))
    body.append(_pack_block("\n".join(vocab_lines)))
    params = list(named_params)
    body.append(struct.pack("<I", len(params)))
    for name, tensor in params:
        arr = np.ascontiguousarray(
            getattr(tensor, "data", tensor), dtype=np.float32)
        raw_name = name.encode("utf-8")
        body.append(struct.pack("<I", len(raw_name)) + raw_name)
        body.append(struct.pack("<I", arr.ndim)
                    + struct.pack(f"<{arr.ndim}I", *arr.shape))
        body.append(arr.astype("<f4").tobytes())
    blob = b"".join(body)
    digest = hashlib.sha256(blob).digest()
    with open(path, "wb") as fh:
        fh.write(blob + digest)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise DataError("checkpoint ends early: corrupt or truncated")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def block(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def load(path) -> tuple[str, list[str], dict]:
    """Returns (config_text, vocab_lines, {name: float32 ndarray})."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}")
    if len(raw) < 32 + len(MAGIC) + 4:
        raise DataError("checkpoint checksum failed: file truncated")
    blob, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(blob).digest() != digest:
        raise DataError("checkpoint checksum failed: corrupt or truncated")
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise DataError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise DataError(
            f"checkpoint format version {version} needs migration; "
            f"this build reads version {VERSION} only")
    config_text = r.block()
    vocab_text = r.block()
    params = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        params[name] = arr
    if r.pos != len(blob):
        raise DataError("checkpoint has trailing bytes after parameters")
    vocab_lines = vocab_text.split("\n") if vocab_text else []
    return config_text, vocab_lines, params


def apply_params(model, params: dict) -> None:
    """Copy stored payloads into the model, checking the full inventory."""
    stored = dict(params)
    for name, tensor in model.named_parameters():
        if name not in stored:
            raise DataError(f"checkpoint is missing parameter '{name}'")
        arr = stored.pop(name)
        if tuple(arr.shape) != tensor.shape:
            raise DataError(
                f"parameter '{name}' has shape {tuple(arr.shape)} in the "
                f"checkpoint but the model expects {tensor.shape}")
        tensor.data[:] = arr.astype(np.float64)
    if stored:
        extra = sorted(stored)[0]
        raise DataError(f"checkpoint has unexpected parameter '{extra}'")


def quantize_model(model) -> None:
    """Round parameters to their 32-bit representation in place.

    Saving quantizes; calling this makes the live model match what a
    reader of the file will see.
    """
    for _, tensor in model.named_parameters():
        tensor.data[:] = tensor.data.astype(np.float32).astype(np.float64)
