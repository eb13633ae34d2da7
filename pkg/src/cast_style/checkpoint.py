"""Single-file checkpoint archive.

Layout (numpy ``.npz``, no pickled objects):

    __meta__      0-d unicode array holding JSON:
                  {"schema": 1, "kind": ..., "config": {...}, "meta": {...}}
    <param name>  one dense float array per state_dict entry

``kind`` is one of "cast", "style_classifier", "coherence_classifier",
"language_model". ``meta`` carries the run config and seed that produced the
file, plus stage-specific extras (held-out accuracy, dev metric, ...).
"""
from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np
import torch
from torch import nn

SCHEMA = 1
KINDS = ("cast", "style_classifier", "coherence_classifier", "language_model")


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, kind: str, module: nn.Module, config: dict, meta: dict | None = None):
    if kind not in KINDS:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    header = {"schema": SCHEMA, "kind": kind, "config": config, "meta": meta or {}}
    arrays = {name: t.detach().cpu().numpy() for name, t in module.state_dict().items()}
    if "__meta__" in arrays:
        raise ValueError("parameter name collides with the header key")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(header, sort_keys=True)), **arrays)


def read_checkpoint(path, kind: str | None = None) -> tuple[dict, dict[str, torch.Tensor]]:
    """Return (header, state_dict) after validating schema and kind."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"missing checkpoint {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            if "__meta__" not in archive.files:
                raise CheckpointError(f"{path} has no checkpoint header")
            header = json.loads(str(archive["__meta__"]))
            state = {k: torch.from_numpy(archive[k].copy())
                     for k in archive.files if k != "__meta__"}
    except CheckpointError:
        raise
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"{path} is not a readable checkpoint ({exc})") from None
    if header.get("schema") != SCHEMA:
        raise CheckpointError(f"{path}: unsupported checkpoint schema {header.get('schema')}")
    if kind is not None and header.get("kind") != kind:
        raise CheckpointError(f"{path} holds a {header.get('kind')} checkpoint, expected {kind}")
    return header, state
