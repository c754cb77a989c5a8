"""JSON checkpoints. Floats are written with Python's shortest round-trip repr,
so every float64 parameter survives save/load bit for bit."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .models import ConfigurationError, Model, build_model, KINDS, SUB_KINDS, JointModel
from .data import NormStats

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def checkpoint_document(model: Model, seed: int | None = None, config: dict | None = None,
                        norm: NormStats | None = None) -> dict:
    return {
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "seed": seed,
        "config": config or {},
        "norm": norm.to_dict() if norm is not None else None,
        "params": {name: p.data.tolist() for name, p in model.named_params()},
    }


def save_checkpoint(model: Model, path, seed: int | None = None, config: dict | None = None,
                    norm: NormStats | None = None) -> Path:
    path = Path(path)
    doc = checkpoint_document(model, seed, config, norm)
    _atomic_write_text(path, json.dumps(doc, allow_nan=False))
    return path


def _skeleton(kind: str) -> Model:
    if kind == "jmwr":
        return build_model("jmwr", 0, {k: build_model(k, 0) for k in SUB_KINDS})
    return build_model(kind, 0)


def load_checkpoint(path, expect_kind: str | None = None):
    """Returns ``(model, document)``; raises CheckpointError without building a partial model."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}:{exc.lineno}:{exc.colno}: malformed checkpoint: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: top level must be an object")
    if doc.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {doc.get('version')!r}, expected {FORMAT_VERSION}")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"{path}: holds a {kind} model, expected {expect_kind}")
    params = doc.get("params")
    if not isinstance(params, dict):
        raise CheckpointError(f"{path}: missing 'params'")
    model = _skeleton(kind)
    arrays = {}
    for name, p in model.named_params():
        if name not in params:
            raise CheckpointError(f"{path}: params.{name} missing")
        try:
            arr = np.asarray(params[name], dtype=np.float64)
        except (TypeError, ValueError):
            raise CheckpointError(f"{path}: params.{name} is not a numeric array") from None
        if arr.shape != p.data.shape:
            raise CheckpointError(f"{path}: params.{name} has shape {arr.shape}, expected {p.data.shape}")
        arrays[name] = arr
    extra = set(params) - set(arrays)
    if extra:
        raise CheckpointError(f"{path}: unexpected parameter(s) {sorted(extra)[:3]}")
    for name, p in model.named_params():
        p.data = arrays[name]
    return model, doc


def load_norm(doc: dict) -> NormStats | None:
    return NormStats.from_dict(doc["norm"]) if doc.get("norm") else None


def joint_from_checkpoints(paths: dict, seed: int) -> JointModel:
    """Fresh J-MWR head on top of three sub-model checkpoints."""
    missing = [k for k in SUB_KINDS if not paths.get(k)]
    if missing:
        raise ConfigurationError(f"J-MWR needs checkpoints for {missing}")
    subs = {k: load_checkpoint(paths[k], expect_kind=k)[0] for k in SUB_KINDS}
    return build_model("jmwr", seed, subs)
