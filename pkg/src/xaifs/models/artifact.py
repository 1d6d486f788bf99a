"""Model artifact files.

Layout (all text lines UTF-8, ``\\n``-terminated)::

    XAIFS-MODEL
    <format version, integer>
    <JSON header: kind, n_features, n_classes, train_seed, hyperparams, payload_bytes>
    <payload: pickle of the fitted backend, exactly payload_bytes long>

The header is readable without unpickling anything. Loading reproduces
predictions bit-for-bit because the backend arrays are stored verbatim.
"""

from __future__ import annotations

import dataclasses
import json
import pickle
from pathlib import Path

from ..errors import DataError
from .core import ModelKind, TrainedModel, hyperparams_from_dict

MAGIC = b"XAIFS-MODEL"
FORMAT_VERSION = 1


def save_model(m: TrainedModel, path: str | Path) -> None:
    payload = pickle.dumps(m.backend, protocol=pickle.HIGHEST_PROTOCOL)
    header = {
        "kind": m.kind.value,
        "n_features": m.n_features,
        "n_classes": m.n_classes,
        "train_seed": m.train_seed,
        "hyperparams": dataclasses.asdict(m.hyperparams),
        "payload_bytes": len(payload),
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(f"{FORMAT_VERSION}\n".encode())
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def _read_header(fh, path) -> dict:
    if fh.readline().rstrip(b"\n") != MAGIC:
        raise DataError(f"{path}: not a model artifact")
    version = int(fh.readline())
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported artifact version {version}")
    return json.loads(fh.readline())


def load_model(path: str | Path) -> TrainedModel:
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        payload = fh.read()
    if len(payload) != header["payload_bytes"]:
        raise DataError(f"{path}: truncated payload")
    kind = ModelKind(header["kind"])
    return TrainedModel(kind, hyperparams_from_dict(kind, header["hyperparams"]), header["n_features"],
                        header["n_classes"], header["train_seed"], pickle.loads(payload))
