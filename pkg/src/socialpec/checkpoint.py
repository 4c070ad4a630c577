"""JSON checkpoints: architecture, named parameters and training metadata.

Floats are written with ``repr``, which round-trips every float64 exactly.
"""

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import LocationPredictor, ModelConfig

FORMAT_VERSION = 1


def to_document(model, metadata=None):
    params = {}
    for name, p in model.named_parameters().items():
        params[name] = {"shape": list(p.shape), "values": p.data.tolist()}
    return {
        "format_version": FORMAT_VERSION,
        "architecture": model.config.to_dict(),
        "parameters": params,
        "metadata": dict(metadata or {}),
    }


def save_checkpoint(model, path, metadata=None):
    doc = to_document(model, metadata)
    text = json.dumps(doc, allow_nan=False, separators=(",", ":"), sort_keys=True)
    Path(path).write_text(text + "\n")


def _field(doc, key, kind):
    if key not in doc:
        raise CheckpointError(f"checkpoint is missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise CheckpointError(f"checkpoint field {key!r} has the wrong type")
    return value


def _check_architecture(found, expected):
    for key, want in expected.to_dict().items():
        have = found.to_dict()[key]
        if have != want:
            raise CheckpointError(
                f"architecture mismatch: {key} is {have} in the checkpoint, {want} in this run")


def from_document(doc, expected=None):
    """Rebuild ``(model, metadata)``; ``expected`` is an optional ModelConfig to match."""
    if not isinstance(doc, dict):
        raise CheckpointError("checkpoint root must be an object")
    version = _field(doc, "format_version", int)
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"format_version {version} is not supported (expected {FORMAT_VERSION})")
    arch = dict(_field(doc, "architecture", dict))
    try:
        config = ModelConfig(**arch)
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"architecture: {exc}") from None
    if expected is not None:
        _check_architecture(config, expected)
    stored = _field(doc, "parameters", dict)
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise CheckpointError("checkpoint field 'metadata' has the wrong type")

    model = LocationPredictor(config)
    named = model.named_parameters()
    missing = sorted(set(named) - set(stored))
    extra = sorted(set(stored) - set(named))
    if missing or extra:
        raise CheckpointError(f"parameters: missing {missing}, unexpected {extra}")
    for name, p in named.items():
        entry = stored[name]
        if not isinstance(entry, dict) or "shape" not in entry or "values" not in entry:
            raise CheckpointError(f"parameters.{name}: expected shape and values")
        shape = tuple(entry["shape"])
        if shape != p.shape:
            raise CheckpointError(f"parameters.{name}: shape {list(shape)} != {list(p.shape)}")
        try:
            values = np.array(entry["values"], dtype=np.float64)
        except (TypeError, ValueError):
            raise CheckpointError(f"parameters.{name}: values are not numeric") from None
        if values.shape != shape or not np.isfinite(values).all():
            raise CheckpointError(f"parameters.{name}: malformed values")
        p.data[...] = values
    return model, metadata


def load_checkpoint(path, expected=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is truncated or not valid JSON ({exc.msg} "
                              f"at line {exc.lineno})") from None
    return from_document(doc, expected)
