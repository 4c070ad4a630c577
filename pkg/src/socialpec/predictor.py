"""Autoregressive rollout of the location predictor.

At every future step each pedestrian in turn becomes the target: the last
``T_h`` states of the scene are moved into its egocentric frame, the model
predicts a Gaussian for its next location, a location is drawn (or the mean
taken), mapped back to world coordinates and appended to the scene.  All
pedestrians at one step read the same window, so their predictions do not
depend on processing order.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import no_grad
from .errors import ConfigError, InvalidLengthError
from .geometry import batch_frames

_U64 = 1 << 64


@dataclass
class RolloutConfig:
    mode: str = "sample"  # "sample" or "mean"; "mean" is a deterministic extra
    k: int = 1
    seed: int = 0
    pred_len: int = 12

    def __post_init__(self):
        if self.mode not in ("sample", "mean"):
            raise ConfigError(f"unknown rollout mode {self.mode!r}")
        if self.k < 1:
            raise ConfigError("number of rollouts must be >= 1")
        if self.pred_len < 0:
            raise ConfigError("prediction horizon must be >= 0")


def stream(seed, rollout, ped_id, step):
    """Counter-based generator keyed by ``(seed, rollout)`` and positioned at ``(step, ped_id)``."""
    key = np.array([int(seed) % _U64, int(rollout) % _U64], dtype=np.uint64)
    counter = np.array([0, int(step) % _U64, int(ped_id) % _U64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def cholesky_factor(std, rho):
    """Lower Cholesky factor of ``[[sx^2, r sx sy], [r sx sy, sy^2]]``."""
    sx, sy = std[..., 0], std[..., 1]
    L = np.zeros(rho.shape + (2, 2))
    L[..., 0, 0] = sx
    L[..., 1, 0] = rho * sy
    L[..., 1, 1] = sy * np.sqrt(1.0 - rho * rho)
    return L


def sample_location(g, rng=None, mode="sample"):
    """Draw one location from a single (unbatched) Gaussian, or return its mean."""
    mu = np.array(g.mu.data, dtype=np.float64)
    if mode == "mean":
        return mu
    L = cholesky_factor(g.std, g.rho.data)
    return mu + L @ rng.standard_normal(2)


def _rotate(points, c, s):
    out = np.empty_like(points)
    out[..., 0] = c * points[..., 0] - s * points[..., 1]
    out[..., 1] = s * points[..., 0] + c * points[..., 1]
    return out


def egocentric_batch(window):
    """Every pedestrian of ``window[M, T, 2]`` as target in turn.

    Returns ``(targets[M, T, 2], contexts[M*(M-1), T, 2], owners, origins, thetas)``.
    """
    M = window.shape[0]
    origins, thetas = batch_frames(window)
    c, s = np.cos(thetas), np.sin(thetas)
    rel = window[None, :, :, :] - origins[:, None, None, :]  # [target, ped, T, 2]
    ego = _rotate(rel, c[:, None, None], -s[:, None, None])
    idx = np.arange(M)
    targets = ego[idx, idx]
    off = ~np.eye(M, dtype=bool)
    contexts = ego[off]
    owners = np.nonzero(off)[0]
    return targets, contexts, owners, origins, thetas


def rollout(model, obs, cfg, ped_ids=None):
    """Predict ``cfg.pred_len`` steps for every pedestrian, ``cfg.k`` times.

    ``obs`` is ``[M, >=T_h, 2]`` (or a scene window); only the last ``T_h``
    states are used.  Random streams are keyed by rollout index, pedestrian
    id and absolute step, so relabeling pedestrians permutes the output
    without changing any value.  Returns ``[K, M, pred_len, 2]``.
    """
    if hasattr(obs, "positions"):
        ped_ids = obs.ped_ids if ped_ids is None else ped_ids
        obs = obs.obs
    obs = np.asarray(obs, dtype=np.float64)
    T_h = model.config.obs_len
    M = obs.shape[0]
    if obs.ndim != 3 or obs.shape[1] < T_h:
        raise InvalidLengthError(f"need {T_h} observed steps per pedestrian, got {obs.shape}")
    if ped_ids is None:
        ped_ids = list(range(M))
    out = np.empty((cfg.k, M, cfg.pred_len, 2))
    if cfg.pred_len == 0 or M == 0:
        return out

    n_runs = 1 if cfg.mode == "mean" else cfg.k
    for k in range(n_runs):
        traj = np.concatenate([obs[:, -T_h:], np.empty((M, cfg.pred_len, 2))], axis=1)
        for i in range(cfg.pred_len):
            targets, contexts, owners, origins, thetas = egocentric_batch(traj[:, i:i + T_h])
            with no_grad():
                g = model.forward(targets, contexts, owners)
            local = np.array(g.mu.data)
            if cfg.mode == "sample":
                L = cholesky_factor(g.std, g.rho.data)
                z = np.stack([stream(cfg.seed, k, pid, T_h + i).standard_normal(2)
                              for pid in ped_ids])
                local = local + np.einsum("mij,mj->mi", L, z)
            world = _rotate(local, np.cos(thetas), np.sin(thetas)) + origins
            traj[:, T_h + i] = world
        out[k] = traj[:, T_h:]
    if n_runs == 1 and cfg.k > 1:
        out[1:] = out[0]
    return out
