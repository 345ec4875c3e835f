"""Self-describing binary checkpoint container.

Layout: 8-byte magic, little-endian uint64 header length, JSON header,
then raw little-endian tensor payloads concatenated in header order. The
header records the format version, model config, a hash of the vocabulary,
the tensor directory (name/shape/dtype) and a SHA-256 of the payload, so
truncation or corruption is detected before anything is deserialized.
Saving is canonical (sorted tensor names, sorted JSON keys): save -> load
-> save reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..data import VocabSpec
from .sancd import ModelConfig, SANCDModel

MAGIC = b"IMKCKPT\x01"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


class CheckpointError(ValueError):
    """Unreadable, corrupt or incompatible checkpoint file."""


def vocab_hash(vocab: VocabSpec) -> str:
    return hashlib.sha256(vocab.to_json().encode("utf-8")).hexdigest()


def write_container(
    path: str | Path,
    config: dict,
    vocab: VocabSpec,
    tensors: dict[str, np.ndarray],
    extra: dict | None = None,
) -> None:
    names = sorted(tensors)
    directory = []
    payload = bytearray()
    for name in names:
        arr = np.asarray(tensors[name])
        if arr.dtype == np.float32:
            dt = "float32"
        elif arr.dtype == np.float64:
            dt = "float64"
        else:
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        directory.append({"name": name, "shape": list(arr.shape), "dtype": dt})
        payload.extend(np.ascontiguousarray(arr, dtype=_DTYPES[dt]).tobytes())

    header = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "vocab_hash": vocab_hash(vocab),
        "vocab": json.loads(vocab.to_json()),
        "tensors": directory,
        "payload_sha256": hashlib.sha256(bytes(payload)).hexdigest(),
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        fh.write(bytes(payload))


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (header, tensors); verifies magic, version and payload hash."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    header_len = int.from_bytes(blob[8:16], "little")
    header_end = 16 + header_len
    if len(blob) < header_end:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")

    payload = blob[header_end:]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header.get("payload_sha256"):
        raise CheckpointError(f"{path}: payload hash mismatch (corrupt or truncated file)")

    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["tensors"]:
        dt = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = count * dt.itemsize
        raw = payload[offset : offset + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError(f"{path}: truncated tensor payload for {entry['name']!r}")
        arr = np.frombuffer(raw, dtype=dt).reshape(entry["shape"]).astype(entry["dtype"], copy=True)
        tensors[entry["name"]] = arr
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing payload bytes")
    return header, tensors


def save_model(
    path: str | Path,
    model: SANCDModel,
    extra: dict | None = None,
    extra_tensors: dict[str, np.ndarray] | None = None,
) -> None:
    tensors = {name: p.data for name, p in model.parameters().items()}
    if extra_tensors:
        overlap = set(tensors) & set(extra_tensors)
        if overlap:
            raise CheckpointError(f"extra tensor names collide with parameters: {sorted(overlap)}")
        tensors.update(extra_tensors)
    write_container(path, model.cfg.to_dict(), model.vocab, tensors, extra)


def load_model(
    path: str | Path, vocab: VocabSpec | None = None
) -> tuple[SANCDModel, dict, dict[str, np.ndarray]]:
    """Rebuild a model from a checkpoint.

    If a vocabulary is supplied its hash must match the stored one;
    otherwise the vocabulary embedded in the header is used. Returns
    (model, extra, non-parameter tensors).
    """
    header, tensors = read_container(path)
    stored_vocab = VocabSpec.from_json(json.dumps(header["vocab"]))
    if vocab is not None:
        if vocab_hash(vocab) != header["vocab_hash"]:
            raise CheckpointError(f"{path}: vocabulary hash mismatch")
    else:
        vocab = stored_vocab
    cfg = ModelConfig.from_dict(header["config"])
    model = SANCDModel(cfg, vocab, seed=0)
    params = model.parameters()
    leftovers: dict[str, np.ndarray] = {}
    for name, arr in tensors.items():
        if name in params:
            p = params[name]
            if tuple(arr.shape) != p.data.shape:
                raise CheckpointError(f"{path}: shape mismatch for {name!r}")
            p.data = arr.astype(p.data.dtype, copy=True)
        else:
            leftovers[name] = arr
    missing = set(params) - set(tensors)
    if missing:
        raise CheckpointError(f"{path}: missing parameters: {sorted(missing)[:5]}")
    return model, header.get("extra", {}), leftovers
