"""ETH/UCY style annotations: parsing, scene windows and leave-one-out splits.

Annotation files hold one ``frame_id ped_id x y`` record per line, separated
by whitespace, with world coordinates in meters.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError

OBS_LEN = 8
PRED_LEN = 12


@dataclass(frozen=True, order=True)
class AnnotationRecord:
    frame_id: int
    ped_id: int
    x: float
    y: float


@dataclass
class SceneWindow:
    positions: np.ndarray  # (M, T_f, 2)
    ped_ids: list
    start_frame: int
    obs_len: int = OBS_LEN
    frame_step: int = 1

    @property
    def num_peds(self):
        return self.positions.shape[0]

    @property
    def total_len(self):
        return self.positions.shape[1]

    @property
    def obs(self):
        return self.positions[:, :self.obs_len]

    @property
    def future(self):
        return self.positions[:, self.obs_len:]

    def truncated(self, length):
        return SceneWindow(self.positions[:, :length].copy(), list(self.ped_ids),
                           self.start_frame, min(self.obs_len, length), self.frame_step)


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)
    test_set_name: str = ""


def _as_int(token):
    value = float(token)
    if not np.isfinite(value) or value != int(value):
        raise ValueError(f"{token!r} is not an integer")
    return int(value)


def load_annotations(stream):
    """Parse annotation text into records sorted by ``(frame_id, ped_id)``."""
    if isinstance(stream, str):
        stream = stream.splitlines()
    records = []
    seen = set()
    for lineno, line in enumerate(stream, start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields, found {len(fields)}", lineno)
        try:
            frame, ped = _as_int(fields[0]), _as_int(fields[1])
            x, y = float(fields[2]), float(fields[3])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise ParseError("non-finite coordinate", lineno)
        if (frame, ped) in seen:
            raise DataError(f"duplicate record for frame {frame}, pedestrian {ped} "
                            f"(line {lineno})")
        seen.add((frame, ped))
        records.append(AnnotationRecord(frame, ped, x, y))
    records.sort()
    return records


def load_file(path):
    with open(path) as fh:
        return load_annotations(fh)


def frame_step(records):
    """Annotation interval in frame-id units.

    Frames with nobody in them are allowed, so every gap must be a whole
    multiple of the smallest gap.
    """
    frames = np.unique([r.frame_id for r in records])
    if len(frames) < 2:
        return 1
    gaps = np.diff(frames)
    step = int(gaps.min())
    if np.any(gaps % step):
        raise DataError(f"frame ids are not evenly spaced (smallest gap {step}, "
                        f"found gaps {sorted(set(gaps.tolist()))[:5]})")
    return step


def build_windows(records, total_len=OBS_LEN + PRED_LEN, stride=1, obs_len=OBS_LEN):
    """Cut records into windows of ``total_len`` consecutive frames.

    Only pedestrians present at every frame of a window are kept; windows
    left with nobody are dropped.
    """
    if total_len < 1 or stride < 1:
        raise ValueError("window length and stride must be >= 1")
    if not records:
        return []
    step = frame_step(records)
    first = min(r.frame_id for r in records)
    last = max(r.frame_id for r in records)
    n_slots = (last - first) // step + 1

    ped_ids = sorted({r.ped_id for r in records})
    col = {p: i for i, p in enumerate(ped_ids)}
    grid = np.full((len(ped_ids), n_slots, 2), np.nan)
    for r in records:
        grid[col[r.ped_id], (r.frame_id - first) // step] = (r.x, r.y)
    present = ~np.isnan(grid[..., 0])

    windows = []
    for start in range(0, n_slots - total_len + 1, stride):
        full = present[:, start:start + total_len].all(axis=1)
        rows = np.flatnonzero(full)
        if len(rows) == 0:
            continue
        windows.append(SceneWindow(
            positions=grid[rows, start:start + total_len].copy(),
            ped_ids=[ped_ids[i] for i in rows],
            start_frame=first + start * step,
            obs_len=min(obs_len, total_len),
            frame_step=step,
        ))
    return windows


def split_leave_one_out(sets, test_name, val_fraction=0.2, seed=0,
                        total_len=OBS_LEN + PRED_LEN, stride=1, obs_len=OBS_LEN):
    """Hold out ``test_name``; shuffle the remaining windows into train/val.

    ``sets`` maps a set name to its list of annotation records.
    """
    if test_name not in sets:
        raise ConfigError(f"unknown test set {test_name!r}; available: {sorted(sets)}")
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    test = build_windows(sets[test_name], total_len, stride, obs_len)
    pool = []
    for name in sorted(sets):
        if name != test_name:
            pool.extend(build_windows(sets[name], total_len, stride, obs_len))
    order = np.random.default_rng(seed).permutation(len(pool))
    n_val = int(round(val_fraction * len(pool)))
    val = [pool[i] for i in order[:n_val]]
    train = [pool[i] for i in order[n_val:]]
    return DatasetSplit(train, val, test, test_name)


def load_manifest(path):
    """Read a ``name = path`` manifest; relative paths resolve against its folder."""
    from .config import parse_key_values

    path = Path(path)
    entries = parse_key_values(path.read_text(), source=str(path))
    sets = {}
    for name, rel in entries.items():
        target = Path(rel)
        if not target.is_absolute():
            target = path.parent / target
        if not target.exists():
            raise ConfigError(f"manifest {path}: file for set {name!r} not found: {target}")
        sets[name] = target
    return sets


def load_sets(manifest_path):
    return {name: load_file(p) for name, p in load_manifest(manifest_path).items()}
