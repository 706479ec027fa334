"""Versioned single-document parameter checkpoints.

Layout (JSON, keys sorted so identical content gives identical bytes)::

    {"format": "cpsguard-ckpt", "version": 1,
     "meta": {...}, "seed_lineage": {...},
     "tensors": [{"name": ..., "shape": [...], "data": <base64 float64 little-endian>}, ...]}

Raw IEEE-754 bytes make the round trip bit-exact.
"""
from __future__ import annotations

import base64
import json
import os
from typing import Mapping

import numpy as np

FORMAT = "cpsguard-ckpt"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_array(arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(entry: Mapping) -> np.ndarray:
    raw = base64.b64decode(entry["data"], validate=True)
    shape = tuple(int(s) for s in entry["shape"])
    arr = np.frombuffer(raw, dtype="<f8")
    if arr.size != int(np.prod(shape)):
        raise CheckpointError(f"tensor {entry.get('name')!r}: {arr.size} values for shape {shape}")
    return arr.reshape(shape).astype(np.float64)


def dumps(tensors: Mapping[str, np.ndarray], meta: Mapping | None = None,
          seed_lineage: Mapping | None = None) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "meta": dict(meta or {}),
        "seed_lineage": dict(seed_lineage or {}),
        "tensors": [{"name": name, **encode_array(arr)} for name, arr in tensors.items()],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def loads(text: str) -> tuple[dict[str, np.ndarray], dict, dict]:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError("not a cpsguard checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    tensors = {}
    try:
        for entry in doc["tensors"]:
            tensors[entry["name"]] = decode_array(entry)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"malformed tensor entry: {exc}") from exc
    return tensors, doc.get("meta", {}), doc.get("seed_lineage", {})


def save(path: str | os.PathLike, tensors, meta=None, seed_lineage=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(tensors, meta, seed_lineage))


def load(path: str | os.PathLike):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(text)
