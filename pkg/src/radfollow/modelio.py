"""Model files: a tensor checkpoint plus a JSON sidecar with config and vocabularies."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .nn.params import tensors_from_json, tensors_to_json

SIDECAR_VERSION = 1


class ModelMismatchError(ValueError):
    """Checkpoint, sidecar and vocabulary do not belong together."""


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def save_model_files(directory: str | Path, name: str, kind: str, config: dict, vocabs: dict[str, list[str]],
                     tensors: dict[str, np.ndarray]) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensor_text = tensors_to_json(tensors)
    sidecar = {
        "kind": kind,
        "version": SIDECAR_VERSION,
        "config": config,
        "vocabularies": vocabs,
        "vocabulary_hashes": {k: sha256_text("\n".join(v)) for k, v in vocabs.items()},
        "tensors_file": f"{name}.tensors.json",
        "tensors_sha256": sha256_text(tensor_text),
    }
    tpath = directory / f"{name}.tensors.json"
    spath = directory / f"{name}.json"
    tpath.write_text(tensor_text, encoding="utf-8")
    spath.write_text(json.dumps(sidecar, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return [spath, tpath]


def load_model_files(path: str | Path, kind: str) -> tuple[dict, dict[str, list[str]], dict[str, np.ndarray]]:
    """Load ``<dir>/<name>.json`` (or a directory holding exactly one sidecar of ``kind``)."""
    path = Path(path)
    if path.is_dir():
        candidates = [p for p in sorted(path.glob("*.json")) if not p.name.endswith(".tensors.json")
                      and _kind_of(p) == kind]
        if len(candidates) != 1:
            raise ModelMismatchError(f"expected one {kind} model in {path}, found {len(candidates)}")
        path = candidates[0]
    sidecar = json.loads(path.read_text(encoding="utf-8"))
    if sidecar.get("kind") != kind:
        raise ModelMismatchError(f"{path} holds a {sidecar.get('kind')!r} model, expected {kind!r}")
    tensor_text = (path.parent / sidecar["tensors_file"]).read_text(encoding="utf-8")
    if sha256_text(tensor_text) != sidecar["tensors_sha256"]:
        raise ModelMismatchError(f"tensor checkpoint hash does not match {path.name}")
    vocabs = sidecar["vocabularies"]
    for k, v in vocabs.items():
        if sha256_text("\n".join(v)) != sidecar["vocabulary_hashes"].get(k):
            raise ModelMismatchError(f"vocabulary {k!r} hash does not match {path.name}")
    return sidecar["config"], vocabs, tensors_from_json(tensor_text)


def _kind_of(p: Path) -> str | None:
    try:
        return json.loads(p.read_text(encoding="utf-8")).get("kind")
    except (ValueError, OSError):
        return None
