"""Versioned binary checkpoint container.

Layout: 8 magic bytes | u32 version | u64 header length | UTF-8 JSON header |
payload of raw little-endian float64 tensors in header order. The header
carries model configuration, the embedded vocabulary with its hash, the
optimizer step, the RNG state, and a SHA-256 of the payload that is verified
on load.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .config import Hyper, ModelOptions
from .corpus import Vocabulary
from .model import KTModel

MAGIC = b"KTCKPT\x00\x01"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


def vocab_hash(vocab: Vocabulary) -> str:
    return hashlib.sha256(vocab.to_json().encode()).hexdigest()


def _tensor_entries(model: KTModel):
    store = model.store
    entries = []
    for name in store.params:
        entries.append((f"param:{name}", store.params[name].data))
    for name in store.constants:
        entries.append((f"const:{name}", store.constants[name].data))
    for name in store.params:
        entries.append((f"adam_m:{name}", store.m[name]))
        entries.append((f"adam_v:{name}", store.v[name]))
    return entries


def save_checkpoint(model: KTModel, path: str) -> None:
    entries = _tensor_entries(model)
    payload = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes()
                       for _, arr in entries)
    header = {
        "variant": model.variant,
        "hyper": model.hyper.to_dict(),
        "options": model.options.to_dict(),
        "vocab": json.loads(model.vocab.to_json()),
        "vocab_sha256": vocab_hash(model.vocab),
        "adam_step": model.store.step,
        "rng_state": _jsonable_rng(model.rng_state),
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in entries],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)


def _jsonable_rng(state):
    if state is None:
        return None
    return json.loads(json.dumps(state, default=int))


def load_checkpoint(path: str, expected_vocab_hash: str | None = None) -> KTModel:
    """Reconstruct a model bit-exactly; rejects bad magic, version, hash, or size."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 12 or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (hlen,) = struct.unpack_from("<Q", blob, off)
    off += 8
    if off + hlen > len(blob):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[off:off + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    off += hlen
    payload = blob[off:]
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload hash mismatch (truncated or corrupt)")
    if expected_vocab_hash is not None and header["vocab_sha256"] != expected_vocab_hash:
        raise CheckpointError(
            f"{path}: checkpoint was trained with a different vocabulary")

    vocab = Vocabulary.from_json(json.dumps(header["vocab"]))
    if vocab_hash(vocab) != header["vocab_sha256"]:
        raise CheckpointError(f"{path}: embedded vocabulary fails its hash")
    model = KTModel(header["variant"], Hyper.from_dict(header["hyper"]), vocab,
                    options=ModelOptions.from_dict(header["options"]))

    pos = 0
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        end = pos + 8 * n
        if end > len(payload):
            raise CheckpointError(f"{path}: truncated payload")
        arrays[entry["name"]] = np.frombuffer(
            payload[pos:end], dtype="<f8").reshape(shape).astype(np.float64)
        pos = end
    if pos != len(payload):
        raise CheckpointError(f"{path}: trailing bytes in payload")

    store = model.store
    expected = {f"param:{n}" for n in store.params}
    expected |= {f"const:{n}" for n in store.constants}
    expected |= {f"adam_m:{n}" for n in store.params}
    expected |= {f"adam_v:{n}" for n in store.params}
    if expected != set(arrays):
        raise CheckpointError(f"{path}: tensor names do not match the model layout")
    for name, arr in arrays.items():
        kind, pname = name.split(":", 1)
        if kind == "param":
            store.params[pname].data = arr
        elif kind == "const":
            store.constants[pname].data = arr
        elif kind == "adam_m":
            store.m[pname] = arr.copy()
        else:
            store.v[pname] = arr.copy()
    store.step = int(header["adam_step"])
    model.rng_state = header.get("rng_state")
    return model
