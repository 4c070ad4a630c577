"""Displacement metrics and the best-of-K evaluation harness."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .geometry import linear_extrapolate
from .predictor import RolloutConfig, rollout


def displacement_metrics(pred, truth):
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim < 2 or pred.shape[-2] < 1:
        raise DimensionError(f"prediction {pred.shape} and truth {truth.shape} differ")
    err = np.linalg.norm(pred - truth, axis=-1)
    return err.mean(axis=-1), err[..., -1]


def window_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


class LinearBaseline:
    """Deterministic constant-velocity predictor."""

    deterministic = True

    def predict(self, obs, ped_ids, k, seed, pred_len):
        pred = np.stack([linear_extrapolate(track, pred_len) for track in obs])
        return np.broadcast_to(pred, (k,) + pred.shape).copy()


class ModelPredictor:
    def __init__(self, model, mode="sample"):
        self.model = model
        self.mode = mode

    @property
    def deterministic(self):
        return self.mode == "mean"

    def predict(self, obs, ped_ids, k, seed, pred_len):
        cfg = RolloutConfig(mode=self.mode, k=k, seed=seed, pred_len=pred_len)
        return rollout(self.model, obs, cfg, ped_ids)


@dataclass
class MetricsReport:
    ade: float
    fde: float
    k: int
    num_windows: int
    num_pedestrians: int
    seed: int
    set_name: str = ""
    per_set: dict = field(default_factory=dict)
    ped_ade: np.ndarray = field(default=None, repr=False)
    ped_fde: np.ndarray = field(default=None, repr=False)
    window_ade: list = field(default_factory=list, repr=False)

    def summary(self):
        return f"ADE/FDE: {self.ade:.2f} / {self.fde:.2f} (K={self.k}, set={self.set_name or 'all'})"

    def to_dict(self):
        return {
            "set": self.set_name,
            "ade": self.ade,
            "fde": self.fde,
            "k": self.k,
            "num_windows": self.num_windows,
            "num_pedestrians": self.num_pedestrians,
            "seed": self.seed,
            "per_set": self.per_set,
        }


def best_of_k(ade, fde, independent=False):
    """Pick per pedestrian from ``[K, M]`` errors; FDE follows the ADE pick by default."""
    pick = np.argmin(ade, axis=0)
    cols = np.arange(ade.shape[1])
    best_fde = fde.min(axis=0) if independent else fde[pick, cols]
    return ade[pick, cols], best_fde


def evaluate(predictor, windows, k=20, seed=0, independent_fde=False, set_name=""):
    """Best-of-K ADE/FDE over ``windows``, averaged over every pedestrian."""
    if k < 1:
        raise ConfigError("K must be >= 1")
    ped_ade, ped_fde, window_ade = [], [], []
    for w, win in enumerate(windows):
        future = win.future
        pred = predictor.predict(win.obs, win.ped_ids, k, window_seed(seed, w), future.shape[1])
        ade, fde = displacement_metrics(pred, np.broadcast_to(future, pred.shape))
        a, f = best_of_k(ade, fde, independent_fde)
        ped_ade.append(a)
        ped_fde.append(f)
        window_ade.append(a)
    ped_ade = np.concatenate(ped_ade) if ped_ade else np.zeros(0)
    ped_fde = np.concatenate(ped_fde) if ped_fde else np.zeros(0)
    n = len(ped_ade)
    report = MetricsReport(
        ade=float(ped_ade.mean()) if n else float("nan"),
        fde=float(ped_fde.mean()) if n else float("nan"),
        k=k, num_windows=len(windows), num_pedestrians=n, seed=seed, set_name=set_name,
        ped_ade=ped_ade, ped_fde=ped_fde, window_ade=window_ade)
    if set_name:
        report.per_set[set_name] = {"ade": report.ade, "fde": report.fde,
                                    "num_windows": report.num_windows, "num_pedestrians": n}
    return report


def combine(reports):
    """Pedestrian-weighted aggregate of per-set reports."""
    if not reports:
        raise ValueError("nothing to combine")
    ped_ade = np.concatenate([r.ped_ade for r in reports])
    ped_fde = np.concatenate([r.ped_fde for r in reports])
    per_set = {}
    for r in reports:
        per_set.update(r.per_set)
    return MetricsReport(
        ade=float(ped_ade.mean()), fde=float(ped_fde.mean()), k=reports[0].k,
        num_windows=sum(r.num_windows for r in reports), num_pedestrians=len(ped_ade),
        seed=reports[0].seed, set_name="", per_set=per_set, ped_ade=ped_ade, ped_fde=ped_fde,
        window_ade=[a for r in reports for a in r.window_ade])
