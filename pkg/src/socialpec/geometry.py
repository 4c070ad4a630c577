"""Egocentric frames and the constant-velocity baseline.

Positions are plain numpy arrays whose last axis holds (x, y) in meters.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidLengthError


@dataclass(frozen=True)
class Frame:
    """Egocentric frame: ``origin`` in world coordinates, heading ``theta`` in (-pi, pi]."""

    origin: np.ndarray
    theta: float

    @property
    def rotation(self):
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.array([[c, -s], [s, c]])


def _normalize(theta):
    theta = float(theta)
    return np.pi if theta <= -np.pi else theta


def heading_of(traj):
    """Angle of the most recent nonzero displacement, or 0 for a stationary track."""
    traj = np.asarray(traj, dtype=np.float64)
    if len(traj) < 2:
        raise InvalidLengthError("heading needs at least two states")
    steps = np.diff(traj, axis=0)
    moving = np.flatnonzero(np.any(steps != 0.0, axis=1))
    if len(moving) == 0:
        return 0.0
    dx, dy = steps[moving[-1]]
    return _normalize(np.arctan2(dy, dx))


def frame_of(traj, anchor=-1):
    """Frame anchored at ``traj[anchor]`` with heading from the history up to it."""
    traj = np.asarray(traj, dtype=np.float64)
    anchor = anchor % len(traj)
    return Frame(traj[anchor].copy(), heading_of(traj[:anchor + 1]))


def to_frame(points, frame):
    """World -> egocentric: ``R(-theta) (p - origin)``."""
    d = np.asarray(points, dtype=np.float64) - frame.origin
    c, s = np.cos(frame.theta), np.sin(frame.theta)
    out = np.empty_like(d)
    out[..., 0] = c * d[..., 0] + s * d[..., 1]
    out[..., 1] = -s * d[..., 0] + c * d[..., 1]
    return out


def convert_back(points, frame):
    """Egocentric -> world, the exact inverse of :func:`to_frame`."""
    p = np.asarray(points, dtype=np.float64)
    c, s = np.cos(frame.theta), np.sin(frame.theta)
    out = np.empty_like(p)
    out[..., 0] = c * p[..., 0] - s * p[..., 1] + frame.origin[0]
    out[..., 1] = s * p[..., 0] + c * p[..., 1] + frame.origin[1]
    return out


def convert(positions, m, anchor=-1):
    """Express every pedestrian of ``positions[M, T, 2]`` in pedestrian ``m``'s frame.

    The frame sits at ``positions[m, anchor]`` and faces ``m``'s last nonzero
    displacement up to that step.  Returns ``(converted, frame)``.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if not -len(positions) <= m < len(positions):
        raise IndexError(f"pedestrian index {m} out of range for {len(positions)} pedestrians")
    frame = frame_of(positions[m], anchor)
    return to_frame(positions, frame), frame


def batch_frames(tracks):
    """Origins and headings for ``tracks[..., T, 2]``, anchored at the last step.

    Vectorized counterpart of :func:`frame_of` used by the rollout loop.
    """
    tracks = np.asarray(tracks, dtype=np.float64)
    if tracks.shape[-2] < 2:
        raise InvalidLengthError("heading needs at least two states")
    steps = np.diff(tracks, axis=-2)
    moving = np.any(steps != 0.0, axis=-1)
    n = moving.shape[-1]
    # index of the last moving step, or -1
    last = np.where(moving.any(axis=-1), n - 1 - np.argmax(moving[..., ::-1], axis=-1), -1)
    d = np.take_along_axis(steps, np.maximum(last, 0)[..., None, None], axis=-2)[..., 0, :]
    theta = np.where(last >= 0, np.arctan2(d[..., 1], d[..., 0]), 0.0)
    theta = np.where(theta <= -np.pi, np.pi, theta)
    return tracks[..., -1, :].copy(), theta


def linear_extrapolate(obs, n):
    """Continue ``obs`` for ``n`` steps at its least-squares velocity.

    The velocity is the slope of a per-axis line fit over the whole
    observation; the continuation starts from the last observed state.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if len(obs) < 2:
        raise InvalidLengthError("linear extrapolation needs at least two states")
    if n < 0:
        raise ValueError("number of steps must be non-negative")
    t = np.arange(len(obs), dtype=np.float64)
    tc = t - t.mean()
    velocity = tc @ (obs - obs.mean(axis=0)) / (tc @ tc)
    steps = np.arange(1, n + 1, dtype=np.float64)[:, None]
    return obs[-1] + steps * velocity
