"""Model checkpoints: RBTK weight records plus a JSON manifest."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .. import rbtk

WEIGHTS = "weights.bin"
MANIFEST = "checkpoint.json"


def save_checkpoint(directory: str | os.PathLike, params: dict, meta: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = sorted(params)
    rbtk.write_records(directory / WEIGHTS, (params[n] for n in names))
    manifest = {"format": "rbtk-checkpoint", "version": 1,
                "layers": [{"name": n, "shape": list(params[n].shape)} for n in names],
                **(meta or {})}
    with open(directory / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return directory


def load_checkpoint(directory: str | os.PathLike) -> tuple[dict, dict]:
    directory = Path(directory)
    with open(directory / MANIFEST) as fh:
        manifest = json.load(fh)
    records = rbtk.read_records(directory / WEIGHTS)
    layers = manifest["layers"]
    if len(records) != len(layers):
        raise rbtk.FormatError(f"{len(records)} weight records for {len(layers)} layers")
    params = {layer["name"]: np.ascontiguousarray(rec.reshape(layer["shape"]))
              for layer, rec in zip(layers, records)}
    return params, manifest
