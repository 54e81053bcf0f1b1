"""Unconditional velocity fields for the channel and the data symbols.

Channel priors
    :class:`GaussianPrior` evaluates the exact marginal velocity of a
    zero-mean Gaussian prior ``CN(0, C)``; :class:`VelocityNet` is a small
    feed-forward approximator trained with the flow-matching regression loss.

Data prior
    The constellation is a finite Gaussian mixture along the path, so its
    posterior mean (and therefore its velocity) is available in closed form.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelDataset, ChannelStats
from .errors import CorruptFileError, TrainingDivergedError
from .model import Constellation, as_rng, complex_normal, nearest_index
from .schedule import OT, Schedule

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-12
T_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# Analytic Gaussian channel prior
# ---------------------------------------------------------------------------


class GaussianPrior:
    """Marginal flow velocity of ``x_0 ~ CN(0, C)`` under an interpolation schedule.

    The velocity is evaluated as
    ``(sigma sigma' I + alpha alpha' C)(alpha^2 C + sigma^2 I)^{-1} x``,
    which stays finite at ``t = 1`` where ``alpha'/alpha`` does not.
    """

    backend = "analytic-gaussian"

    def __init__(self, stats: ChannelStats, schedule: Schedule = OT):
        self.stats = stats
        self.schedule = schedule

    def velocity_gain(self, t: float) -> np.ndarray:
        sv = self.schedule.at(t)
        lam = self.stats.eigenvalues
        num = sv.sigma * sv.dsigma + sv.alpha * sv.dalpha * lam
        den = np.maximum(sv.alpha ** 2 * lam + sv.sigma ** 2, 1e-12)
        return num / den

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.stats.from_eigen(self.velocity_gain(t) * self.stats.to_eigen(x))

    def jvp(self, x: np.ndarray, t: float, g: np.ndarray) -> np.ndarray:
        """Directional derivative of the velocity; the field is linear in ``x``."""
        return self(g, t)

    def posterior_variance(self, x: np.ndarray, t: float) -> np.ndarray:
        """Per-frame mean of ``Var[x_0 | x_t]`` over all entries of the last four axes."""
        sv = self.schedule.at(t)
        lam = self.stats.eigenvalues
        v = float(np.mean(lam * sv.sigma ** 2 / np.maximum(sv.alpha ** 2 * lam + sv.sigma ** 2, 1e-12)))
        return np.full(np.shape(x)[:-4], v)

    def score(self, x: np.ndarray, t: float) -> np.ndarray:
        """``grad log p_t(x) = -(alpha^2 C + sigma^2 I)^{-1} x``."""
        sv = self.schedule.at(t)
        return self.stats.apply(x, lambda lam: -1.0 / (sv.alpha ** 2 * lam + sv.sigma ** 2))

    def drift_form(self, x: np.ndarray, t: float) -> np.ndarray:
        """``a(t) x - kappa_t * score``; singular at ``t = 1``."""
        sv = self.schedule.at(t)
        return sv.drift * x - sv.kappa * self.score(x, t)

    def sample(self, rng, shape_lead=()) -> np.ndarray:
        """Draw ``x_0 ~ CN(0, C)`` grids."""
        lam, uf, ut = self.stats.eig()
        w = complex_normal(as_rng(rng), tuple(shape_lead) + lam.shape)
        return self.stats.from_eigen(np.sqrt(lam) * w)


def gaussian_prior_velocity(H_t: np.ndarray, t: float, stats: ChannelStats, schedule: Schedule = OT) -> np.ndarray:
    return GaussianPrior(stats, schedule)(H_t, t)


def denoise(x: np.ndarray, t: float, vf, schedule: Schedule = OT) -> np.ndarray:
    """Posterior-mean estimate of ``x_0`` implied by a velocity field.

    With ``v = alpha' x_0 + sigma' x_1`` and ``x = alpha x_0 + sigma x_1``,
    ``E[x_0 | x_t] = (sigma' x - sigma v) / (alpha sigma' - sigma alpha')``;
    on the OT path this is ``x - t v``.
    """
    sv = schedule.at(t)
    if sv.sigma == 0.0:
        return x / sv.alpha
    det = sv.alpha * sv.dsigma - sv.sigma * sv.dalpha
    return (sv.dsigma * x - sv.sigma * vf(x, t)) / det


def denoiser_jvp(x: np.ndarray, t: float, vf, g: np.ndarray, schedule: Schedule = OT,
                 rel_step: float = 1e-4) -> np.ndarray:
    """``J g`` with ``J`` the Jacobian of :func:`denoise` at ``x``.

    Uses ``vf.jvp`` when the field provides it, a forward difference otherwise.
    """
    sv = schedule.at(t)
    if sv.sigma == 0.0:
        return g / sv.alpha
    det = sv.alpha * sv.dsigma - sv.sigma * sv.dalpha
    if hasattr(vf, "jvp"):
        dv = vf.jvp(x, t, g)
    else:
        scale = np.sqrt(np.mean(np.abs(x) ** 2) + 1.0) / max(np.sqrt(np.mean(np.abs(g) ** 2)), 1e-300)
        h = rel_step * scale
        dv = (vf(x + h * g, t) - vf(x, t)) / h
    return (sv.dsigma * g - sv.sigma * dv) / det


def _probe(shape) -> np.ndarray:
    rng = np.random.default_rng(0x5EED)
    return (rng.choice([-1.0, 1.0], size=shape) + 1j * rng.choice([-1.0, 1.0], size=shape)) / np.sqrt(2.0)


def posterior_variance(x: np.ndarray, t: float, vf, schedule: Schedule = OT) -> np.ndarray:
    """Per-frame mean of ``Var[x_0 | x_t]`` over the last four axes.

    Uses ``vf.posterior_variance`` when available; otherwise a one-probe
    Hutchinson estimate of ``(sigma^2/alpha) tr(J) / n`` with a fixed probe,
    so a frame gives the same value whether or not it is batched.
    """
    if hasattr(vf, "posterior_variance"):
        return vf.posterior_variance(x, t)
    sv = schedule.at(t)
    if sv.sigma == 0.0:
        return np.zeros(np.shape(x)[:-4])
    z = _probe(np.shape(x)[-4:])
    z = np.broadcast_to(z, np.shape(x))
    tr = np.mean(np.real(np.conj(z) * denoiser_jvp(x, t, vf, z, schedule)), axis=(-4, -3, -2, -1))
    return np.maximum(sv.sigma ** 2 / sv.alpha * tr, 0.0)


# ---------------------------------------------------------------------------
# Constellation prior
# ---------------------------------------------------------------------------


def _mixture_weights(D_t, sv, c: Constellation) -> np.ndarray:
    s2 = max(sv.sigma, SIGMA_FLOOR) ** 2
    logits = -np.abs(D_t[..., None] - sv.alpha * c.points) ** 2 / (2.0 * s2)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def constellation_posterior_mean(D_t: np.ndarray, t: float, c: Constellation, schedule: Schedule = OT) -> np.ndarray:
    """Elementwise ``E[D_0 | D_t]`` for a uniform prior over the constellation.

    Weights are ``softmax_k(-|D_t - alpha x_k|^2 / (2 sigma^2))``. With
    ``sigma = 0`` the nearest point is returned.
    """
    sv = schedule.at(t)
    D_t = np.asarray(D_t)
    if sv.sigma == 0.0:
        return c.points[nearest_index(D_t / sv.alpha, c)]
    return _mixture_weights(D_t, sv, c) @ c.points


def constellation_posterior_moments(D_t: np.ndarray, t: float, c: Constellation,
                                    schedule: Schedule = OT) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance ``E|D_0 - E[D_0|D_t]|^2`` per element."""
    sv = schedule.at(t)
    D_t = np.asarray(D_t)
    if sv.sigma == 0.0:
        mean = c.points[nearest_index(D_t / sv.alpha, c)]
        return mean, np.zeros(D_t.shape)
    w = _mixture_weights(D_t, sv, c)
    mean = w @ c.points
    var = w @ (np.abs(c.points) ** 2) - np.abs(mean) ** 2
    return mean, np.maximum(var, 0.0)


def constellation_log_density(D_t: np.ndarray, t: float, c: Constellation, schedule: Schedule = OT) -> np.ndarray:
    """Unnormalised ``log p_t(D_t)`` of the smoothed mixture (for gradient checks)."""
    sv = schedule.at(t)
    logits = -np.abs(np.asarray(D_t)[..., None] - sv.alpha * c.points) ** 2 / (2.0 * sv.sigma ** 2)
    m = logits.max(axis=-1)
    return m + np.log(np.exp(logits - m[..., None]).sum(axis=-1))


def constellation_prior_velocity(D_t: np.ndarray, t: float, c: Constellation, schedule: Schedule = OT) -> np.ndarray:
    """Prior velocity of the data grids via Tweedie's posterior mean.

    On the OT path ``a(t) D - kappa (alpha E - D)/sigma^2`` collapses to
    ``(D - E[D_0|D_t]) / t``, which is what is evaluated there.
    """
    if t <= 0.0:
        raise ValueError("the constellation velocity is undefined at t = 0")
    mean = constellation_posterior_mean(D_t, t, c, schedule)
    if schedule is OT:
        return (D_t - mean) / t
    return constellation_prior_velocity_literal(D_t, t, c, schedule, mean=mean)


def constellation_prior_velocity_literal(D_t, t, c, schedule: Schedule = OT, mean=None) -> np.ndarray:
    sv = schedule.at(t)
    if mean is None:
        mean = constellation_posterior_mean(D_t, t, c, schedule)
    return sv.drift * D_t - sv.kappa * (sv.alpha * mean - D_t) / sv.sigma ** 2


class ConstellationPrior:
    def __init__(self, constellation: Constellation, schedule: Schedule = OT):
        self.constellation = constellation
        self.schedule = schedule

    def posterior_mean(self, D_t, t):
        return constellation_posterior_mean(D_t, t, self.constellation, self.schedule)

    def __call__(self, D_t, t):
        return constellation_prior_velocity(D_t, t, self.constellation, self.schedule)


# ---------------------------------------------------------------------------
# Feed-forward velocity approximator
# ---------------------------------------------------------------------------


def time_embedding(t, dim: int, max_freq: float = 64.0) -> np.ndarray:
    """Sinusoidal features ``[sin(w_k t), cos(w_k t)]`` with log-spaced ``w_k``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    freqs = np.pi * np.exp(np.linspace(0.0, np.log(max_freq), half))
    arg = t[:, None] * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


def grids_to_real(x: np.ndarray) -> np.ndarray:
    """Complex ``(..., N_S, N_T)`` grids to rows ``[Re | Im]`` of width ``2 N_S N_T``."""
    flat = x.reshape(-1, x.shape[-2] * x.shape[-1])
    return np.concatenate([flat.real, flat.imag], axis=1)


def real_to_grids(v: np.ndarray, grid_shape) -> np.ndarray:
    n = v.shape[1] // 2
    return (v[:, :n] + 1j * v[:, n:]).reshape((-1,) + tuple(grid_shape))


def _silu(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s, s


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 2e-3
    hidden: tuple[int, ...] = (256, 256)
    embed_dim: int = 32
    rank: int = 32
    t_min: float = 1e-3
    loss_t_floor: float = 0.03  # velocity-space loss with t floored here
    weight_decay: float = 0.0
    split: tuple[int, int, int] = (8, 1, 1)

    @property
    def hash(self) -> int:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


class VelocityNet:
    """Feed-forward velocity field on flattened real/imag grids.

    The network predicts the clean grid and the OT velocity follows as
    ``v = (x - x0) / t``::

        x0(x, t) = MLP([x, emb(t)]) + s(t) x + ((x A) * g(t)) B

    ``s(t)`` and ``g(t)`` are linear read-outs of the time embedding, so the
    last two terms form a rank-``r`` linear map with time-dependent gains.
    For Gaussian-like channels the clean-grid estimate is such a map; the MLP
    only has to learn the remainder. Predicting ``x0`` instead of ``v`` keeps
    the ``1/t`` gain on every empty direction exact.
    The same weights are applied to every receive-antenna/layer grid.
    """

    backend = "trained-net"

    def __init__(self, grid_shape, hidden=(256, 256), embed_dim: int = 32, rank: int = 32, seed=0):
        self.grid_shape = tuple(int(g) for g in grid_shape)
        self.embed_dim = int(embed_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.rank = int(rank)
        self.seed = int(seed) if not isinstance(seed, np.random.Generator) else 0
        self.config_hash = 0
        rng = as_rng(seed)
        self.params = {}
        sizes = (self.in_width,) + self.hidden + (self.out_width,)
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.params[f"W{i}"] = rng.standard_normal((a, b)) * np.sqrt(2.0 / a)
            self.params[f"b{i}"] = np.zeros(b)
        self.params[f"W{len(sizes) - 2}"] *= 0.1
        self.params["ws"] = np.zeros(self.embed_dim)
        self.params["bs"] = np.zeros(1)
        self.params["A"] = rng.standard_normal((self.out_width, self.rank)) / np.sqrt(self.out_width)
        self.params["Wg"] = np.zeros((self.embed_dim, self.rank))
        self.params["bg"] = np.ones(self.rank)
        self.params["B"] = np.zeros((self.rank, self.out_width))

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    @property
    def in_width(self) -> int:
        return 2 * self.grid_shape[0] * self.grid_shape[1] + self.embed_dim

    @property
    def out_width(self) -> int:
        return 2 * self.grid_shape[0] * self.grid_shape[1]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.in_width,) + self.hidden + (self.out_width,)

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    # -- real-valued core ---------------------------------------------------

    def forward(self, xr: np.ndarray, t: np.ndarray, keep: bool = False):
        t = np.broadcast_to(np.asarray(t, dtype=float), (xr.shape[0],))
        emb = time_embedding(t, self.embed_dim)
        a = np.concatenate([xr, emb], axis=1)
        cache = [a]
        for i in range(self.n_layers - 1):
            z = a @ self.params[f"W{i}"] + self.params[f"b{i}"]
            a, s = _silu(z)
            cache.append((z, s, a))
        last = self.n_layers - 1
        skip = emb @ self.params["ws"] + self.params["bs"]
        u = xr @ self.params["A"]
        g = emb @ self.params["Wg"] + self.params["bg"]
        out = a @ self.params[f"W{last}"] + self.params[f"b{last}"] + skip[:, None] * xr + (u * g) @ self.params["B"]
        if keep:
            return out, (cache, emb, skip, xr, u, g)
        return out

    def backward(self, grad_out: np.ndarray, ctx) -> dict:
        cache, emb, skip, xr, u, g_lin = ctx
        grads = {}
        grads["B"] = (u * g_lin).T @ grad_out
        dz = grad_out @ self.params["B"].T
        dg = dz * u
        grads["Wg"] = emb.T @ dg
        grads["bg"] = dg.sum(axis=0)
        grads["A"] = xr.T @ (dz * g_lin)
        last = self.n_layers - 1
        a_prev = cache[-1][2] if last > 0 else cache[0]
        grads[f"W{last}"] = a_prev.T @ grad_out
        grads[f"b{last}"] = grad_out.sum(axis=0)
        g_skip = np.einsum("bi,bi->b", grad_out, xr)
        grads["ws"] = emb.T @ g_skip
        grads["bs"] = np.array([g_skip.sum()])
        g = grad_out @ self.params[f"W{last}"].T
        for i in range(last - 1, -1, -1):
            z, s, _ = cache[i + 1]
            g = g * (s * (1.0 + z * (1.0 - s)))
            a_in = cache[i][2] if i > 0 else cache[0]
            grads[f"W{i}"] = a_in.T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            if i > 0:
                g = g @ self.params[f"W{i}"].T
        return grads

    # -- complex grid interface ----------------------------------------------

    def velocity(self, xr: np.ndarray, t) -> np.ndarray:
        """OT velocity on real rows; ``t`` is clipped to ``T_FLOOR`` from below."""
        t = np.maximum(np.broadcast_to(np.asarray(t, dtype=float), (xr.shape[0],)), T_FLOOR)
        return (xr - self.forward(xr, t)) / t[:, None]

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x)
        lead = x.shape[:-2]
        out = self.velocity(grids_to_real(x), t)
        return real_to_grids(out, self.grid_shape).reshape(lead + self.grid_shape)

    # -- persistence ---------------------------------------------------------

    def flat_arrays(self):
        names = []
        for i in range(self.n_layers):
            names += [f"W{i}", f"b{i}"]
        names += ["ws", "bs", "A", "Wg", "bg", "B"]
        return [(n, self.params[n]) for n in names]


def fm_loss(net, H0: np.ndarray, H1: np.ndarray, t, schedule: Schedule = OT) -> float:
    """Flow-matching regression loss: mean squared error per real component.

    ``net`` is any callable ``(x, t) -> velocity`` on complex grids; ``t`` holds
    one time per grid in ``H0``.
    """
    H0 = np.asarray(H0)
    H1 = np.asarray(H1)
    t = np.broadcast_to(np.asarray(t, dtype=float), H0.shape[:1])
    total = 0.0
    for i in range(H0.shape[0]):
        sv = schedule.at(t[i])
        xt = sv.alpha * H0[i] + sv.sigma * H1[i]
        target = sv.dalpha * H0[i] + sv.dsigma * H1[i]
        err = net(xt, t[i]) - target
        total += np.sum(err.real ** 2 + err.imag ** 2)
    return float(total / (2 * H0.size))


def _loss_weight(t, t_floor: float) -> np.ndarray:
    return 1.0 / np.maximum(t, t_floor) ** 2


def _batch_loss_and_grad(net: VelocityNet, x0r, x1r, t, t_floor: float):
    # Clean-grid error over t is the velocity error; flooring t caps the weight.
    xt = (1.0 - t)[:, None] * x0r + t[:, None] * x1r
    out, ctx = net.forward(xt, t, keep=True)
    diff = out - x0r
    w = _loss_weight(t, t_floor)[:, None]
    loss = float(np.mean(w * diff ** 2))
    grads = net.backward(2.0 * w * diff / diff.size, ctx)
    return loss, grads


@dataclass
class TrainResult:
    net: VelocityNet
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.k = 0

    def step(self, params, grads, lr):
        self.k += 1
        c1 = 1.0 - self.b1 ** self.k
        c2 = 1.0 - self.b2 ** self.k
        for name, g in grads.items():
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            params[name] -= lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


def _channel_grids(data) -> np.ndarray:
    H = data.channels if isinstance(data, ChannelDataset) else np.asarray(data)
    return H


def train_velocity_net(data, hp: TrainConfig | None = None, seed: int = 0, progress=None) -> TrainResult:
    """Fit a :class:`VelocityNet` to channel samples along the OT path.

    ``data`` is a :class:`ChannelDataset` or an array with a leading sample
    axis and grid axes last. Samples are split by ``hp.split`` into
    train/validation/test; the test part is left untouched. Optimisation is
    Adam with a cosine-annealed learning rate; every random draw comes from
    ``seed`` so repeated calls give identical weights. ``progress(epoch,
    result)`` is called after every epoch; a true return value stops training.
    """
    hp = hp or TrainConfig()
    H = _channel_grids(data)
    if H.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    grid_shape = H.shape[-2:]
    r = np.asarray(hp.split, dtype=float)
    n = H.shape[0]
    n_tr = max(1, int(round(n * r[0] / r.sum())))
    n_va = int(round(n * r[1] / r.sum()))
    x_tr = grids_to_real(H[:n_tr].astype(complex))
    x_va = grids_to_real(H[n_tr:n_tr + n_va].astype(complex))

    ss = np.random.SeedSequence(seed)
    init_ss, train_ss, val_ss = ss.spawn(3)
    net = VelocityNet(grid_shape, hp.hidden, hp.embed_dim, hp.rank, seed=as_rng(init_ss))
    net.seed = int(seed)
    net.config_hash = hp.hash
    rng = as_rng(train_ss)
    vrng = as_rng(val_ss)
    if len(x_va):
        v_t = vrng.uniform(hp.t_min, 1.0, len(x_va))
        v_x1 = vrng.standard_normal(x_va.shape) * np.sqrt(0.5)
    opt = _Adam(net.params, hp.learning_rate)
    result = TrainResult(net)
    n_rows = x_tr.shape[0]
    steps_per_epoch = max(1, int(np.ceil(n_rows / hp.batch_size)))
    total_steps = hp.epochs * steps_per_epoch
    step = 0
    for epoch in range(hp.epochs):
        perm = rng.permutation(n_rows)
        losses = []
        for b in range(steps_per_epoch):
            idx = perm[b * hp.batch_size:(b + 1) * hp.batch_size]
            x0 = x_tr[idx]
            x1 = rng.standard_normal(x0.shape) * np.sqrt(0.5)
            t = rng.uniform(hp.t_min, 1.0, len(idx))
            loss, grads = _batch_loss_and_grad(net, x0, x1, t, hp.loss_t_floor)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} at epoch {epoch}, step {b}")
            lr = 0.5 * hp.learning_rate * (1.0 + np.cos(np.pi * step / total_steps))
            if hp.weight_decay:
                for k in grads:
                    if k.startswith("W"):
                        grads[k] = grads[k] + hp.weight_decay * net.params[k]
            opt.step(net.params, grads, lr)
            losses.append(loss * len(idx))
            step += 1
        result.train_loss.append(float(np.sum(losses) / n_rows))
        if len(x_va):
            xt = (1.0 - v_t)[:, None] * x_va + v_t[:, None] * v_x1
            vl = float(np.mean(_loss_weight(v_t, hp.loss_t_floor)[:, None] * (net.forward(xt, v_t) - x_va) ** 2))
            result.val_loss.append(vl)
        log.info("epoch %d train %.5f val %s", epoch, result.train_loss[-1],
                 f"{result.val_loss[-1]:.5f}" if result.val_loss else "-")
        if progress is not None and progress(epoch, result):
            break
    return result


# ---------------------------------------------------------------------------
# Weights file
# ---------------------------------------------------------------------------

_WMAGIC = b"CFMV"
_WVERSION = 2


def save_weights(path, net: VelocityNet) -> None:
    """Header (sizes, grid, embedding, rank, seed, config hash) then float32 LE arrays."""
    sizes = net.layer_sizes
    head = struct.pack("<4sHI", _WMAGIC, _WVERSION, len(sizes))
    head += struct.pack(f"<{len(sizes)}I", *sizes)
    head += struct.pack("<IIIIQQ", net.grid_shape[0], net.grid_shape[1], net.embed_dim, net.rank,
                        net.seed & (2 ** 64 - 1), net.config_hash & (2 ** 64 - 1))
    with open(path, "wb") as fh:
        fh.write(head)
        for _, arr in net.flat_arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path) -> VelocityNet:
    raw = Path(path).read_bytes()
    try:
        magic, version, n = struct.unpack_from("<4sHI", raw, 0)
        if magic != _WMAGIC or version != _WVERSION:
            raise CorruptFileError(f"{path}: not a velocity-net weights file")
        off = struct.calcsize("<4sHI")
        sizes = struct.unpack_from(f"<{n}I", raw, off)
        off += 4 * n
        ns, nt, emb, rank, seed, chash = struct.unpack_from("<IIIIQQ", raw, off)
        off += struct.calcsize("<IIIIQQ")
    except struct.error as exc:
        raise CorruptFileError(f"{path}: truncated header") from exc
    net = VelocityNet((ns, nt), hidden=sizes[1:-1], embed_dim=emb, rank=rank, seed=0)
    if net.layer_sizes != tuple(sizes):
        raise CorruptFileError(f"{path}: layer sizes {sizes} inconsistent with grid/embedding")
    net.seed, net.config_hash = seed, chash
    for name, arr in net.flat_arrays():
        nbytes = arr.size * 4
        if off + nbytes > len(raw):
            raise CorruptFileError(f"{path}: truncated weights")
        net.params[name] = np.frombuffer(raw, dtype="<f4", count=arr.size, offset=off).astype(float).reshape(arr.shape)
        off += nbytes
    if off != len(raw):
        raise CorruptFileError(f"{path}: {len(raw) - off} trailing bytes")
    return net
