"""Serialization of reports to JSON/CSV with reproducibility metadata.

Every artifact embeds the hash of the resolved configuration and the seed
that produced it. JSON files additionally carry a determinism hash over
their own content with volatile fields (timestamp, the hash itself)
excluded, so two runs can be compared byte-for-byte after stripping those.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from pathlib import Path

import numpy as np

VOLATILE_KEYS = ("timestamp", "determinism_hash")


def to_jsonable(obj):
    """Recursively convert dataclasses/numpy containers to plain JSON types."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        return out
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        return [to_jsonable(v) for v in obj]
    return repr(obj)


def canonical_dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(config_dict: dict) -> str:
    """Stable hash of a resolved configuration mapping."""
    return hashlib.sha256(canonical_dumps(to_jsonable(config_dict)).encode()).hexdigest()[:16]


def _strip_volatile(payload):
    if isinstance(payload, dict):
        return {k: _strip_volatile(v) for k, v in payload.items() if k not in VOLATILE_KEYS}
    if isinstance(payload, list):
        return [_strip_volatile(v) for v in payload]
    return payload


def determinism_hash(payload: dict) -> str:
    return hashlib.sha256(canonical_dumps(_strip_volatile(payload)).encode()).hexdigest()[:16]


def write_json(path, payload: dict, cfg_hash: str, seed) -> dict:
    """Write a JSON report with meta block; returns the full document."""
    doc = {"meta": {"config_hash": cfg_hash, "seed": seed,
                    "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")},
           **to_jsonable(payload)}
    doc["meta"]["determinism_hash"] = determinism_hash(doc)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def write_csv(path, header: list[str], rows, cfg_hash: str, seed) -> None:
    """Write CSV with a comment line carrying the reproducibility metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_hash={cfg_hash} seed={seed}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, (tuple, list, np.ndarray)):
        return "(" + " ".join(repr(float(x)) for x in v) + ")"
    return str(v)
