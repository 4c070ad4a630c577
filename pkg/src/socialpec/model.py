"""Location predictor built on pattern extraction convolution.

A trajectory is scored against a bank of short motion patterns: for every
window of ``L`` states and every pattern ``j`` the response is
``lambda[j] * log(eps + sum_k |phi[t+k] - P[j, k]|) + bias[j]``.  Two
encoders (target and context) turn egocentric trajectories into pattern
responses, the context responses are max-pooled across pedestrians, and an
MLP maps both onto a bivariate Gaussian for the next location.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, record
from .errors import DimensionError, InvalidLengthError

PEC_EPS = 1e-8
RHO_LIMIT = 1.0 - 1e-6
LOG_2PI = float(np.log(2.0 * np.pi))

# pattern initialization: start points uniform in a square around the target,
# per-step displacement ~ N(0, 0.56 m) (about 1.4 m/s over 0.4 s)
INIT_START_RANGE = 4.0
INIT_STEP_STD = 0.56


@dataclass
class ModelConfig:
    obs_len: int = 8
    pattern_len: int = 2
    context_patterns: int = 100
    context_channels: int = 160
    target_patterns: int = 50
    target_channels: int = 80
    conv_len: int = 2
    pool_size: int = 2
    pool_stride: int = 2
    pool_ceil: bool = True
    mlp_widths: tuple = (300, 120, 80, 5)
    leaky_slope: float = 0.01

    def __post_init__(self):
        self.mlp_widths = tuple(int(w) for w in self.mlp_widths)
        if self.mlp_widths[-1] != 5:
            raise ValueError("the last MLP layer must have width 5")
        if self.embed_len < 1:
            raise InvalidLengthError(
                f"observation length {self.obs_len} too short for this architecture")

    @property
    def embed_len(self):
        t = self.obs_len - self.pattern_len + 1
        if t < 1:
            return 0
        t = ad.pool_length(t, self.pool_size, self.pool_stride, self.pool_ceil)
        return t - self.conv_len + 1

    @property
    def mlp_in(self):
        return (self.context_channels + self.target_channels) * self.embed_len

    def to_dict(self):
        d = asdict(self)
        d["mlp_widths"] = list(self.mlp_widths)
        return d


# -- pattern extraction convolution ---------------------------------------------------

@dataclass
class PatternSet:
    patterns: Parameter  # (N, L, 2)
    scale: Parameter  # (N,)
    bias: Parameter  # (N,)

    @property
    def count(self):
        return self.patterns.shape[0]

    @property
    def length(self):
        return self.patterns.shape[1]

    @classmethod
    def initialize(cls, n, length, rng, prefix=""):
        start = rng.uniform(-INIT_START_RANGE, INIT_START_RANGE, size=(n, 1, 2))
        step = rng.normal(0.0, INIT_STEP_STD, size=(n, 1, 2))
        pts = start + np.arange(length)[None, :, None] * step
        return cls(Parameter(pts, name=prefix + "patterns"),
                   Parameter(-np.ones(n), name=prefix + "scale"),
                   Parameter(np.zeros(n), name=prefix + "bias"))

    def parameters(self):
        return [self.patterns, self.scale, self.bias]


def pec(phi, patterns, scale=None, bias=None, eps=PEC_EPS):
    """Pattern extraction convolution of ``phi[..., T, 2]`` -> ``[..., T-L+1, N]``.

    ``patterns`` may be a :class:`PatternSet` or the ``(N, L, 2)`` pattern
    tensor, in which case ``scale`` and ``bias`` must be given too.
    """
    if isinstance(patterns, PatternSet):
        patterns, scale, bias = patterns.patterns, patterns.scale, patterns.bias
    phi, P = ad.as_tensor(phi), ad.as_tensor(patterns)
    lam, b = ad.as_tensor(scale), ad.as_tensor(bias)
    if phi.ndim < 2 or phi.shape[-1] != 2 or P.ndim != 3 or P.shape[-1] != 2:
        raise DimensionError(f"pec: trajectory {phi.shape} / patterns {P.shape}")
    N, L = P.shape[0], P.shape[1]
    if lam.shape != (N,) or b.shape != (N,):
        raise DimensionError(f"pec: scale {lam.shape} / bias {b.shape} for {N} patterns")
    T = phi.shape[-2]
    if T < L:
        raise InvalidLengthError(f"pec: trajectory length {T} shorter than pattern length {L}")
    Tp = T - L + 1

    segs = np.lib.stride_tricks.sliding_window_view(phi.data, L, axis=-2)  # [..., Tp, 2, L]
    segs = np.swapaxes(segs, -1, -2)  # [..., Tp, L, 2]
    diff = segs[..., None, :, :] - P.data  # [..., Tp, N, L, 2]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))  # [..., Tp, N, L]
    total = eps + dist.sum(axis=-1)  # [..., Tp, N]
    log_total = np.log(total)
    out = lam.data * log_total + b.data

    def grad_fn(g):
        batch_axes = tuple(range(g.ndim - 1))
        g_bias = g.sum(axis=batch_axes)
        g_scale = (g * log_total).sum(axis=batch_axes)
        g_total = g * lam.data / total
        safe = np.where(dist > 0.0, dist, 1.0)
        unit = np.where((dist > 0.0)[..., None], diff / safe[..., None], 0.0)
        g_diff = g_total[..., None, None] * unit  # [..., Tp, N, L, 2]
        g_P = -g_diff.reshape((-1,) + P.shape).sum(axis=0)
        g_seg = g_diff.sum(axis=-3)  # [..., Tp, L, 2]
        g_phi = np.zeros_like(phi.data)
        for k in range(L):
            g_phi[..., k:k + Tp, :] += g_seg[..., k, :]
        return g_phi, g_P, g_scale, g_bias

    return record(out, (phi, P, lam, b), grad_fn)


# -- encoders ------------------------------------------------------------------------

@dataclass
class Encoder:
    """PEC -> tanh -> max pool -> conv -> tanh."""

    patterns: PatternSet
    conv_weight: Parameter  # (C_out, N, conv_len)
    conv_bias: Parameter  # (C_out,)
    pool_size: int = 2
    pool_stride: int = 2
    pool_ceil: bool = True

    @classmethod
    def initialize(cls, n_patterns, channels, pattern_len, conv_len, rng, prefix="",
                   pool_size=2, pool_stride=2, pool_ceil=True):
        pats = PatternSet.initialize(n_patterns, pattern_len, rng, prefix)
        bound = 1.0 / np.sqrt(n_patterns * conv_len)
        w = rng.uniform(-bound, bound, size=(channels, n_patterns, conv_len))
        b = rng.uniform(-bound, bound, size=channels)
        return cls(pats, Parameter(w, name=prefix + "conv.weight"),
                   Parameter(b, name=prefix + "conv.bias"), pool_size, pool_stride, pool_ceil)

    @property
    def channels(self):
        return self.conv_weight.shape[0]

    def parameters(self):
        return self.patterns.parameters() + [self.conv_weight, self.conv_bias]

    def __call__(self, traj):
        """Encode time-major trajectories ``[..., T, 2]`` into ``[..., C_out, T']``."""
        psi = ad.tanh(pec(traj, self.patterns))  # [..., T-L+1, N]
        psi = ad.swapaxes(psi, -1, -2)  # [..., N, T-L+1]
        pooled = ad.maxpool1d(psi, self.pool_size, self.pool_stride, self.pool_ceil)
        return ad.tanh(ad.conv1d(pooled, self.conv_weight, self.conv_bias))


def encode(encoder, phi):
    """Encode a channels-first trajectory ``phi[..., 2, T]``."""
    phi = ad.as_tensor(phi)
    if phi.ndim < 2 or phi.shape[-2] != 2:
        raise DimensionError(f"encode expects shape (..., 2, T), got {phi.shape}")
    return encoder(ad.swapaxes(phi, -1, -2))


def pool_context(omegas, shape=None):
    """Elementwise max over a list of context embeddings; ``-1`` when empty."""
    if not omegas:
        if shape is None:
            raise ValueError("shape is required to pool an empty context")
        return Tensor(np.full(shape, -1.0))
    first = omegas[0].shape
    for om in omegas:
        if om.shape != first:
            raise DimensionError(f"pool_context: shapes {first} and {om.shape} differ")
    stacked = ad.concat([ad.reshape(om, (1,) + first) for om in omegas], axis=0)
    return ad.reshape(ad.segment_max(stacked, np.zeros(len(omegas), dtype=int), 1), first)


# -- gaussian head ------------------------------------------------------------------------

@dataclass
class GaussianParams:
    """Bivariate Gaussian over the next egocentric location.

    Kept in the unconstrained-friendly form (mean, log std, correlation) so
    that the likelihood can be built without forming the covariance.
    """

    mu: Tensor  # (..., 2)
    log_std: Tensor  # (..., 2)
    rho: Tensor  # (...)

    @property
    def std(self):
        return np.exp(self.log_std.data)

    @property
    def sigma(self):
        sx, sy = self.std[..., 0], self.std[..., 1]
        cxy = self.rho.data * sx * sy
        out = np.empty(self.rho.shape + (2, 2))
        out[..., 0, 0] = sx * sx
        out[..., 1, 1] = sy * sy
        out[..., 0, 1] = cxy
        out[..., 1, 0] = cxy
        return out

    @property
    def det(self):
        var = self.std ** 2
        return var[..., 0] * var[..., 1] * (1.0 - self.rho.data ** 2)


def gaussian_head(raw):
    """Map raw outputs ``(x, y, a, b, c)`` to mean ``(x, y)``, std ``exp(a), exp(b)``
    and correlation ``tanh(c)`` kept within ``1 - 1e-6`` of +-1."""
    raw = ad.as_tensor(raw)
    if raw.shape[-1:] != (5,):
        raise DimensionError(f"gaussian head expects 5 raw outputs, got {raw.shape}")
    rho = ad.clip(ad.tanh(raw[..., 4]), -RHO_LIMIT, RHO_LIMIT)
    return GaussianParams(raw[..., 0:2], raw[..., 2:4], rho)


def nll(g, target):
    """Negative log density of ``target[..., 2]`` under ``g``, per sample."""
    target = ad.as_tensor(target)
    std = ad.exp(g.log_std)
    z = (target - g.mu) / std
    zx, zy = z[..., 0], z[..., 1]
    one_m_r2 = 1.0 - ad.square(g.rho)
    quad = (ad.square(zx) + ad.square(zy) - 2.0 * g.rho * zx * zy) / (2.0 * one_m_r2)
    return LOG_2PI + ad.sum(g.log_std, axis=-1) + 0.5 * ad.log(one_m_r2) + quad


# -- full predictor --------------------------------------------------------------------

class LocationPredictor:
    def __init__(self, config=None, seed=0):
        self.config = config or ModelConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        pool = dict(pool_size=cfg.pool_size, pool_stride=cfg.pool_stride,
                    pool_ceil=cfg.pool_ceil)
        self.context_encoder = Encoder.initialize(
            cfg.context_patterns, cfg.context_channels, cfg.pattern_len, cfg.conv_len, rng,
            prefix="context.", **pool)
        self.target_encoder = Encoder.initialize(
            cfg.target_patterns, cfg.target_channels, cfg.pattern_len, cfg.conv_len, rng,
            prefix="target.", **pool)
        self.mlp = []
        width = cfg.mlp_in
        for i, out in enumerate(cfg.mlp_widths):
            bound = 1.0 / np.sqrt(width)
            W = Parameter(rng.uniform(-bound, bound, size=(out, width)), name=f"mlp.{i}.weight")
            b = Parameter(rng.uniform(-bound, bound, size=out), name=f"mlp.{i}.bias")
            self.mlp.append((W, b))
            width = out

    def parameters(self):
        params = self.target_encoder.parameters() + self.context_encoder.parameters()
        for W, b in self.mlp:
            params += [W, b]
        return params

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def head(self, features):
        h = features
        last = len(self.mlp) - 1
        for i, (W, b) in enumerate(self.mlp):
            h = ad.dense(h, W, b)
            if i < last:
                h = ad.leaky_relu(h, self.config.leaky_slope)
        return h

    def forward(self, targets, contexts, owners):
        """Predict one step for a batch of egocentric samples.

        targets:  ``[B, T_h, 2]`` target trajectories, each in its own frame.
        contexts: ``[n, T_h, 2]`` context trajectories in their owner's frame.
        owners:   ``[n]`` sample index of each context row.
        """
        targets = np.asarray(targets, dtype=np.float64)
        B = targets.shape[0]
        omega_t = self.target_encoder(Tensor(targets))
        C, Tp = self.context_encoder.channels, omega_t.shape[-1]
        if len(contexts):
            omega_c = self.context_encoder(Tensor(np.asarray(contexts, dtype=np.float64)))
            omega_bar = ad.segment_max(omega_c, owners, B, fill=-1.0)
        else:
            omega_bar = Tensor(np.full((B, C, Tp), -1.0))
        features = ad.concat([ad.reshape(omega_t, (B, -1)), ad.reshape(omega_bar, (B, -1))],
                             axis=-1)
        return gaussian_head(self.head(features))

    def predict_window(self, positions, m):
        """One-step Gaussian for pedestrian ``m`` of an already egocentric window."""
        positions = np.asarray(positions, dtype=np.float64)
        M = positions.shape[0]
        if not 0 <= m < M:
            raise IndexError(f"pedestrian index {m} out of range for {M} pedestrians")
        if positions.shape[1] != self.config.obs_len:
            raise InvalidLengthError(
                f"window has {positions.shape[1]} steps, model expects {self.config.obs_len}")
        others = np.delete(positions, m, axis=0)
        g = self.forward(positions[m:m + 1], others, np.zeros(len(others), dtype=int))
        return GaussianParams(g.mu[0], g.log_std[0], g.rho[0])


def loc_predict(model, window, m):
    """Gaussian for pedestrian ``m``; ``window`` is ``[M, T_h, 2]`` in m's frame."""
    positions = getattr(window, "positions", window)
    return model.predict_window(positions, m)
