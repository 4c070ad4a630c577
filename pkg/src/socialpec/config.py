"""Flat ``key = value`` configuration files."""

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


def parse_key_values(text, source="<config>"):
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


@dataclass
class RunConfig:
    manifest: str = ""
    test_set: str = ""
    obs_len: int = 8
    pred_len: int = 12
    stride: int = 1
    k: int = 20
    seed: int = 0
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 150
    max_steps: int = 0
    val_fraction: float = 0.2
    val_every: int = 1
    checkpoint: str = "checkpoint.json"
    metrics_log: str = ""
    report: str = ""

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        entries = parse_key_values(path.read_text(), source=str(path))
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in entries.items():
            if key not in known:
                raise ConfigError(f"{path}: unknown key {key!r}")
            kind = known[key].type
            try:
                kwargs[key] = kind(value)
            except ValueError:
                raise ConfigError(
                    f"{path}: {key} = {value!r} is not a valid {kind.__name__}") from None
        cfg = cls(**kwargs)
        cfg.base_dir = path.parent
        return cfg

    def resolve(self, value):
        """Resolve a path relative to the config file's folder."""
        p = Path(value)
        base = getattr(self, "base_dir", Path("."))
        return p if p.is_absolute() else base / p
