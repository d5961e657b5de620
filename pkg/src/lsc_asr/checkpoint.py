"""Versioned JSON checkpoints.

Floats are written with Python's shortest round-trip repr, so
``save -> load -> save`` reproduces the file byte for byte.
"""
from __future__ import annotations

import hashlib
import json

import numpy as np

FORMAT = "lsc-checkpoint"
VERSION = 1


class CheckpointSchemaError(ValueError):
    pass


def to_document(values, config, seed):
    params = {}
    for name in sorted(values):
        v = np.asarray(values[name], dtype=np.float64)
        params[name] = {"shape": list(v.shape), "values": [float(x) for x in v.reshape(-1)]}
    return {"format": FORMAT, "version": VERSION, "seed": int(seed),
            "config": config, "params": params}


def dumps(values, config, seed):
    return json.dumps(to_document(values, config, seed), sort_keys=True, indent=1) + "\n"


def save(path, values, config, seed):
    text = dumps(values, config, seed)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode()).hexdigest()


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointSchemaError(f"checkpoint is not valid JSON: {exc}") from exc
    if doc.get("format") != FORMAT:
        raise CheckpointSchemaError(f"unexpected format tag {doc.get('format')!r}")
    if doc.get("version") != VERSION:
        raise CheckpointSchemaError(f"unsupported checkpoint version {doc.get('version')!r}")
    for key in ("seed", "config", "params"):
        if key not in doc:
            raise CheckpointSchemaError(f"checkpoint missing field {key!r}")
    values = {}
    for name, entry in doc["params"].items():
        arr = np.array(entry["values"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape)):
            raise CheckpointSchemaError(f"parameter {name!r}: {arr.size} values for shape {shape}")
        values[name] = arr.reshape(shape)
    return values, doc["config"], doc["seed"]


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def file_hash(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
