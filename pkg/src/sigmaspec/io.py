"""JSON files for datasets and reports.

Floats are written with 17 significant digits so every float64 survives a
round trip; key order is fixed so identical inputs give identical bytes.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .manifold_forge import SpectralDataset

FORMAT_VERSION = "1"


class FormatError(ValueError):
    pass


def _encode(obj, out: list) -> None:
    if isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)))
            out.append(": ")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    elif isinstance(obj, np.ndarray):
        _encode(obj.tolist(), out)
    elif isinstance(obj, (bool, np.bool_)) or obj is None:
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            out.append(json.dumps(str(x)))
        else:
            out.append(format(x, ".17g"))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise FormatError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    out: list = []
    _encode(obj, out)
    return "".join(out) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def dataset_to_json(data: SpectralDataset) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "kind": data.kind,
        "manifold_id": data.manifold_id,
        "sigma": {"components": [list(map(int, c)) for c in data.components],
                  "weights": data.weights, "coords": data.coords},
        "lambdas": data.lambdas,
        "traces": data.traces,
    }
    if data.normal_traces is not None:
        doc["normal_traces"] = data.normal_traces
    return doc


def dataset_from_json(doc: dict) -> SpectralDataset:
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported dataset version {doc.get('version')!r}")
    sig = doc["sigma"]
    lam = np.asarray(doc["lambdas"], dtype=float)
    S = len(sig["weights"])
    traces = np.asarray(doc["traces"], dtype=float).reshape(lam.size, S)
    normal = doc.get("normal_traces")
    if normal is not None:
        normal = np.asarray(normal, dtype=float).reshape(lam.size, S)
    coords = np.asarray(sig["coords"], dtype=float).reshape(S, -1)
    return SpectralDataset(doc["kind"], doc["manifold_id"],
                           tuple(tuple(int(v) for v in c) for c in sig["components"]),
                           np.asarray(sig["weights"], dtype=float), coords, lam, traces, normal)


def save_dataset(path, data: SpectralDataset) -> None:
    write_json(path, dataset_to_json(data))


def load_dataset(path) -> SpectralDataset:
    return dataset_from_json(read_json(path))
