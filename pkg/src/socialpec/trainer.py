"""One-step training: Gaussian negative log-likelihood minimized with Adam."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, TrainingDivergedError
from .geometry import convert
from .model import nll
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 150
    seed: int = 0
    val_every: int = 1
    log_path: str = ""
    max_steps: int = 0  # 0 = no cap

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1 or self.val_every < 1:
            raise ConfigError(f"invalid training configuration: {self}")


@dataclass
class TrainingHistory:
    train_nll: list = field(default_factory=list)
    val_nll: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    steps: int = 0
    best_epoch: int = 0
    best_val_nll: float = float("nan")


@dataclass
class SampleSet:
    """Egocentric training samples, one per (window, pedestrian)."""

    targets: np.ndarray  # (S, T_h, 2)
    contexts: np.ndarray  # (n, T_h, 2)
    offsets: np.ndarray  # (S + 1,) context rows of sample i: offsets[i]:offsets[i+1]
    truth: np.ndarray  # (S, 2)

    def __len__(self):
        return len(self.targets)

    def batch(self, idx):
        rows = [np.arange(self.offsets[i], self.offsets[i + 1]) for i in idx]
        counts = [len(r) for r in rows]
        rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
        owners = np.repeat(np.arange(len(idx)), counts)
        return self.targets[idx], self.contexts[rows], owners, self.truth[idx]


def make_samples(windows, obs_len):
    """Every fully observed pedestrian of every window, in its own frame.

    The frame comes from the first ``obs_len`` steps; the truth is the
    following step expressed in that same frame.
    """
    targets, contexts, truth, offsets = [], [], [], [0]
    for win in windows:
        pos = win.positions[:, :obs_len + 1]
        if pos.shape[1] < obs_len + 1:
            raise ConfigError(f"window shorter than {obs_len + 1} steps")
        for m in range(pos.shape[0]):
            ego, _ = convert(pos, m, anchor=obs_len - 1)
            targets.append(ego[m, :obs_len])
            truth.append(ego[m, obs_len])
            others = np.delete(ego[:, :obs_len], m, axis=0)
            contexts.extend(others)
            offsets.append(offsets[-1] + len(others))
    T = obs_len
    return SampleSet(
        targets=np.array(targets).reshape(-1, T, 2),
        contexts=np.array(contexts).reshape(-1, T, 2),
        offsets=np.array(offsets),
        truth=np.array(truth).reshape(-1, 2),
    )


def batch_nll(model, samples, idx):
    """Per-sample NLL tensor for the samples ``idx``."""
    targets, contexts, owners, truth = samples.batch(idx)
    return nll(model.forward(targets, contexts, owners), truth)


def batch_loss(model, samples, idx):
    return ad.mean(batch_nll(model, samples, idx))


def window_loss(model, window, obs_len=None):
    """Summed NLL over all pedestrians of one window."""
    obs_len = obs_len or model.config.obs_len
    samples = make_samples([window], obs_len)
    return ad.sum(batch_nll(model, samples, np.arange(len(samples))))


def mean_nll(model, samples, chunk=256):
    if len(samples) == 0:
        return float("nan")
    total = 0.0
    with ad.no_grad():
        for start in range(0, len(samples), chunk):
            idx = np.arange(start, min(start + chunk, len(samples)))
            total += float(batch_nll(model, samples, idx).data.sum())
    return total / len(samples)


def _snapshot(params):
    return [p.data.copy() for p in params]


def train(model, splits, cfg):
    """Fit ``model`` on ``splits.train``; returns ``(model, history)``.

    The parameters left in the model are those of the epoch with the lowest
    validation NLL (or the last epoch when there is no validation data).
    """
    if not splits.train:
        raise ConfigError("training set is empty")
    obs_len = model.config.obs_len
    train_set = make_samples(splits.train, obs_len)
    val_set = make_samples(splits.val, obs_len) if splits.val else None
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    history = TrainingHistory()
    best = None
    logfile = open(cfg.log_path, "a") if cfg.log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(train_set))
            total, seen = 0.0, 0
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss = batch_loss(model, train_set, idx)
                if not np.isfinite(loss.data):
                    raise TrainingDivergedError(f"non-finite loss at step {history.steps + 1}")
                ad.backward(loss)
                opt.step()
                if not all(np.isfinite(p.data).all() for p in params):
                    raise TrainingDivergedError(
                        f"non-finite parameter after step {history.steps + 1}")
                history.steps += 1
                total += float(loss.data) * len(idx)
                seen += len(idx)
                if cfg.max_steps and history.steps >= cfg.max_steps:
                    break
            train_nll = total / seen
            val_nll = float("nan")
            if val_set is not None and epoch % cfg.val_every == 0:
                val_nll = mean_nll(model, val_set)
                if best is None or val_nll < history.best_val_nll:
                    best = _snapshot(params)
                    history.best_epoch, history.best_val_nll = epoch, val_nll
            seconds = time.perf_counter() - t0
            history.train_nll.append(train_nll)
            history.val_nll.append(val_nll)
            history.seconds.append(seconds)
            log.info("epoch %d train_nll %.6f val_nll %.6f (%.1fs)", epoch, train_nll, val_nll,
                     seconds)
            if logfile:
                logfile.write(f"{epoch} {train_nll!r} {val_nll!r} {seconds:.3f}\n")
                logfile.flush()
            if cfg.max_steps and history.steps >= cfg.max_steps:
                break
    finally:
        if logfile:
            logfile.close()
    if best is not None:
        for p, saved in zip(params, best):
            p.data[...] = saved
    else:
        history.best_epoch = len(history.train_nll)
    return model, history
