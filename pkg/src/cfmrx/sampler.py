"""Predictor-corrector sampling of the joint channel/data posterior.

Each reverse step first moves ``(H, D)`` along the prior flows (Euler
predictor) and then takes ``K`` small likelihood-ascent steps on the
received grid (corrector). The likelihood scores below are the
observation-model gradients with ``H_0 ~ H_t`` / ``D_0 ~ D_t`` substituted,
written with numerator and denominator scaled by ``alpha_t^2`` so they stay
finite at ``t = 1``. With several layers the residual is shared:
``alpha_t Y_r - sum_l H_{r,l} * A_l``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from .errors import ConfigurationError, SamplerDivergedError
from .model import Constellation, PilotConfig, as_rng, complex_normal, nearest_index
from .prior import (constellation_posterior_moments, constellation_prior_velocity, denoise, denoiser_jvp,
                    posterior_variance)
from .schedule import OT, Schedule, TimeGrid

log = logging.getLogger(__name__)

DENOM_FLOOR = 1e-30


class SamplerInstabilityWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    """Hyper-parameters of one receiver run.

    ``weighting`` selects the corrector step: ``"kappa"`` scales ``c * eps`` by
    the score weight ``lambda_t sigma_t`` of the conditional velocity,
    ``"plain"`` uses bare ``c * eps``. ``sign=+1`` ascends the likelihood;
    ``sign=-1`` reproduces the minus sign of the printed update.

    ``coupling`` chooses what the channel and data scores see of the other
    block. ``"plugin"`` uses the current iterates ``H_t`` and ``D_t``
    directly. ``"denoised"`` substitutes prior posterior means for the other
    block: the channel score sees ``E[D_0|D_t]`` with the residual symbol
    variance added to its noise term, the data score sees ``E[H_0|H_t]``
    (see :func:`likelihood_score_D_denoised`).

    ``precondition`` applies to the denoised coupling only. ``"jacobian"``
    uses :func:`likelihood_score_H_propagated`, ``"none"`` the per-RE
    channel score; ``"auto"`` picks the Jacobian form when some REs carry no
    pilot (orthogonal pilots), since the per-RE score cannot move the
    channel there.
    """

    steps: int = 30
    corrector_steps: int = 5
    step_scale: float | None = None  # None -> 1/K
    noise_var: float = 0.1
    seed: int = 0
    weighting: Literal["kappa", "plain"] = "kappa"
    sign: int = 1
    coupling: Literal["denoised", "plugin"] = "denoised"
    precondition: Literal["auto", "none", "jacobian"] = "auto"
    schedule: Schedule = field(default=OT, repr=False)

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.corrector_steps < 0:
            raise ConfigurationError("corrector_steps must be >= 0")
        if self.step_scale is not None and self.step_scale <= 0:
            raise ConfigurationError("step_scale must be positive")
        if self.noise_var <= 0:
            raise ConfigurationError("noise_var must be positive")
        if self.weighting not in ("kappa", "plain"):
            raise ConfigurationError(f"unknown weighting {self.weighting!r}")
        if self.sign not in (1, -1):
            raise ConfigurationError("sign must be +1 or -1")
        if self.coupling not in ("denoised", "plugin"):
            raise ConfigurationError(f"unknown coupling {self.coupling!r}")
        if self.precondition not in ("auto", "none", "jacobian"):
            raise ConfigurationError(f"unknown precondition {self.precondition!r}")

    def resolve_precondition(self, pc: PilotConfig) -> str:
        if self.precondition != "auto":
            return self.precondition
        return "none" if bool(np.all(pc.pilot_re)) else "jacobian"

    @property
    def c(self) -> float:
        if self.step_scale is not None:
            return float(self.step_scale)
        return 1.0 / self.corrector_steps if self.corrector_steps else 1.0

    @property
    def eps(self) -> float:
        return 1.0 / self.steps


@dataclass
class SamplerState:
    H: np.ndarray  # (..., N_r, L, N_S, N_T)
    D: np.ndarray  # (..., L, N_S, N_T)
    t: float

    def copy(self) -> "SamplerState":
        return SamplerState(self.H.copy(), self.D.copy(), self.t)


def initial_state(channel_shape, data_shape, seed) -> SamplerState:
    """Standard circular Gaussian ``H_1`` and ``D_1``."""
    rng = as_rng(seed)
    return SamplerState(complex_normal(rng, channel_shape), complex_normal(rng, data_shape), 1.0)


# ---------------------------------------------------------------------------
# Likelihood scores
# ---------------------------------------------------------------------------


def _effective(D, P, pc: PilotConfig):
    return pc.effective_symbols(D, P)


def residual(H, D, Y, P, pc: PilotConfig, alpha: float) -> np.ndarray:
    """Data-consistency residual ``alpha Y_r - sum_l H_{r,l} * A_l``."""
    A = _effective(D, P, pc)
    return alpha * Y - np.sum(H * A[..., None, :, :, :], axis=-3)


def likelihood_score_H(H_t, D_t, Y, P, pc: PilotConfig, t: float, noise_var: float,
                       schedule: Schedule = OT, data_var=None) -> np.ndarray:
    """Channel score; ``data_var`` (per data RE) adds ``alpha^2 a_d^2 data_var`` to the denominator."""
    sv = schedule.at(t)
    A = _effective(D_t, P, pc)[..., None, :, :, :]
    res = residual(H_t, D_t, Y, P, pc, sv.alpha)[..., :, None, :, :]
    s2 = noise_var
    if data_var is not None:
        s2 = noise_var + pc.a_d ** 2 * pc.mask_d * np.asarray(data_var)[..., None, :, :, :]
    den = np.maximum(sv.alpha ** 2 * s2 + sv.sigma ** 2 * np.abs(A) ** 2, DENOM_FLOOR)
    return np.conj(A) * res / den


def likelihood_score_D(H_t, D_t, Y, P, pc: PilotConfig, t: float, noise_var: float,
                       schedule: Schedule = OT) -> np.ndarray:
    sv = schedule.at(t)
    res = residual(H_t, D_t, Y, P, pc, sv.alpha)[..., :, None, :, :]
    den = np.maximum(sv.alpha ** 2 * noise_var + pc.a_d ** 2 * sv.sigma ** 2 * np.abs(H_t) ** 2, DENOM_FLOOR)
    return pc.a_d * pc.mask_d * np.sum(np.conj(H_t) * res / den, axis=-4)


def likelihood_score_D_denoised(H0_hat, D_t, Y, P, pc: PilotConfig, t: float, noise_var: float,
                                schedule: Schedule = OT) -> np.ndarray:
    """Data score with the channel replaced by a clean estimate ``H0_hat``.

    The observation is scaled consistently with ``D_t ~ alpha_t D_0``:
    residual ``alpha_t Y_r - sum_l H0_hat * (a_d M_d D_t + alpha_t a_p M_p P)``
    over ``alpha_t^2 sigma^2 + a_d^2 sigma_t^2 |H0_hat|^2``.
    """
    sv = schedule.at(t)
    A = pc.a_d * pc.mask_d * D_t + sv.alpha * pc.a_p * pc.mask_p * P
    res = (sv.alpha * Y - np.sum(H0_hat * A[..., None, :, :, :], axis=-3))[..., :, None, :, :]
    den = np.maximum(sv.alpha ** 2 * noise_var + pc.a_d ** 2 * sv.sigma ** 2 * np.abs(H0_hat) ** 2, DENOM_FLOOR)
    return pc.a_d * pc.mask_d * np.sum(np.conj(H0_hat) * res / den, axis=-4)


def likelihood_score_H_propagated(H_t, D0_hat, D_var, Y, P, pc: PilotConfig, t: float, noise_var: float,
                                  vf: Callable, schedule: Schedule = OT) -> np.ndarray:
    """Channel score pulled back through the prior denoiser.

    With ``H0 = E[H_0|H_t]``, ``J = dH0/dH_t``, ``A`` built from ``D0_hat``
    and per-frame posterior channel variance ``v_H`` the score is
    ``J [conj(A)(Y - H0 A) / (s2 + a_d^2 D_var (|H0|^2 + v_H) + v_H |A|^2)]``.
    Replacing ``H0`` by ``H_t/alpha`` and ``v_H`` by ``(sigma/alpha)^2``
    recovers :func:`likelihood_score_H`. Unlike the per-RE form, ``J``
    spreads the information of observed pilots to REs that carry none.
    """
    H0 = denoise(H_t, t, vf, schedule)
    vH = posterior_variance(H_t, t, vf, schedule)[..., None, None, None, None]
    A = _effective(D0_hat, P, pc)[..., None, :, :, :]
    res = (Y - np.sum(H0 * A, axis=-3))[..., :, None, :, :]
    dv = pc.a_d ** 2 * pc.mask_d * np.asarray(D_var)[..., None, :, :, :]
    den = np.maximum(noise_var + dv * (np.abs(H0) ** 2 + vH) + vH * np.abs(A) ** 2, DENOM_FLOOR)
    return denoiser_jvp(H_t, t, vf, np.conj(A) * res / den, schedule)


def log_likelihood_H(H_t, D_t, Y, P, pc: PilotConfig, t: float, noise_var: float,
                     schedule: Schedule = OT) -> float:
    """Single-layer ``log p(Y | H_t, D_t)`` (up to a constant) with ``H_0 ~ H_t / alpha``.

    ``Y ~ CN(H_t A / alpha, s2 + (sigma/alpha)^2 |A|^2)`` per RE; the
    Wirtinger gradient ``d/d conj(H_t)`` is :func:`likelihood_score_H`.
    """
    sv = schedule.at(t)
    A = _effective(D_t, P, pc)[..., 0, :, :]
    Ha = H_t[..., 0, :, :]
    var = noise_var + (sv.sigma / sv.alpha) ** 2 * np.abs(A) ** 2
    return float(-np.sum(np.abs(Y - Ha * A / sv.alpha) ** 2 / var))


def log_likelihood_D(H_t, D_t, Y, P, pc: PilotConfig, t: float, noise_var: float,
                     schedule: Schedule = OT) -> float:
    """Single-layer ``log p(Y | H_t, D_t)`` (up to a constant) with ``D_0 ~ D_t / alpha``.

    The variance ``s2 + (a_d sigma / alpha)^2 |H_t|^2`` does not depend on
    ``D_t``; the gradient ``d/d conj(D_t)`` is :func:`likelihood_score_D`.
    """
    sv = schedule.at(t)
    A = _effective(D_t, P, pc)[..., 0, :, :]
    Ha = H_t[..., 0, :, :]
    var = noise_var + (pc.a_d * sv.sigma / sv.alpha) ** 2 * np.abs(Ha) ** 2
    return float(-np.sum(np.abs(Y - Ha * A / sv.alpha) ** 2 / var))


def likelihood_score_H_literal(H_t, D_t, Y, P, pc: PilotConfig, t: float, noise_var: float,
                               schedule: Schedule = OT) -> np.ndarray:
    """Single-layer score written with explicit ``1/alpha`` factors; singular at ``t = 1``."""
    sv = schedule.at(t)
    A = _effective(D_t, P, pc)[..., 0, :, :]
    Ha = H_t[..., 0, :, :]
    num = (np.conj(A) / sv.alpha) * (Y - Ha * A / sv.alpha)
    den = noise_var + (sv.sigma / sv.alpha) ** 2 * np.abs(A) ** 2
    return (num / den)[..., None, :, :]


def likelihood_score_D_literal(H_t, D_t, Y, P, pc: PilotConfig, t: float, noise_var: float,
                               schedule: Schedule = OT) -> np.ndarray:
    sv = schedule.at(t)
    A = _effective(D_t, P, pc)[..., 0, :, :]
    Ha = H_t[..., 0, :, :]
    num = pc.a_d * pc.mask_d * np.conj(Ha) / sv.alpha * (Y - Ha * A / sv.alpha)
    den = noise_var + (pc.a_d * sv.sigma / sv.alpha) ** 2 * np.abs(Ha) ** 2
    return np.sum(num / den, axis=-3)[..., None, :, :]


# ---------------------------------------------------------------------------
# Predictor / corrector
# ---------------------------------------------------------------------------


def predictor_step(state: SamplerState, vf: Callable, constellation: Constellation | Callable,
                   eps: float, schedule: Schedule = OT) -> SamplerState:
    """One explicit Euler step of the reverse prior flows, ``t -> t - eps``."""
    t = state.t
    if t < eps - 1e-12:
        raise ValueError(f"cannot step below zero from t={t} with eps={eps}")
    vH = vf(state.H, t)
    if isinstance(constellation, Constellation):
        vD = constellation_prior_velocity(state.D, t, constellation, schedule)
    else:
        vD = constellation(state.D, t)
    return SamplerState(state.H - eps * vH, state.D - eps * vD, max(t - eps, 0.0))


def residual_energy(state: SamplerState, Y, P, pc: PilotConfig, schedule: Schedule = OT) -> np.ndarray:
    """Per-frame ``||alpha_t Y - sum_l H * A_l||^2`` (summed over the last three axes)."""
    sv = schedule.at(state.t)
    r = residual(state.H, state.D, Y, P, pc, sv.alpha)
    return np.sum(np.abs(r) ** 2, axis=(-3, -2, -1))


def corrector_step(state: SamplerState, Y, P, pc: PilotConfig, noise_var: float, c: float, eps: float,
                   K: int, weighting: str = "kappa", sign: int = 1, schedule: Schedule = OT,
                   trace: list | None = None, coupling: str = "plugin", vf: Callable | None = None,
                   constellation: Constellation | None = None, precondition: str = "none") -> SamplerState:
    """``K`` likelihood-gradient refinements of ``(H, D)`` at the state's time.

    ``H`` is updated first and the data step sees the updated channel.
    ``coupling="denoised"`` needs the channel velocity ``vf`` and the
    ``constellation`` (see :class:`SamplerConfig`). ``trace`` (if given)
    receives the residual energy before the first and after every iteration.
    """
    if K <= 0:
        return state
    if coupling == "denoised" and (vf is None or constellation is None):
        raise ConfigurationError("denoised coupling needs the channel velocity and the constellation")
    sv = schedule.at(state.t)
    w = c * eps
    if weighting == "kappa":
        w *= sv.kappa
    if not np.isfinite(w):
        raise ValueError("corrector weight is not finite; the corrector never runs at t = 1")
    H, D = state.H, state.D
    if w == 0.0:
        return SamplerState(H, D, state.t)
    t = state.t
    r0 = residual_energy(SamplerState(H, D, t), Y, P, pc, schedule)
    if trace is not None:
        trace.append(r0)
    for _ in range(K):
        if coupling == "denoised":
            D_hat, D_var = constellation_posterior_moments(D, t, constellation, schedule)
            if precondition == "jacobian":
                sH = likelihood_score_H_propagated(H, D_hat, D_var, Y, P, pc, t, noise_var, vf, schedule)
            else:
                sH = likelihood_score_H(H, D_hat, Y, P, pc, t, noise_var, schedule, data_var=D_var)
            H = H + sign * w * sH
            H_hat = denoise(H, t, vf, schedule)
            D = D + sign * w * likelihood_score_D_denoised(H_hat, D, Y, P, pc, t, noise_var, schedule)
        else:
            H = H + sign * w * likelihood_score_H(H, D, Y, P, pc, t, noise_var, schedule)
            D = D + sign * w * likelihood_score_D(H, D, Y, P, pc, t, noise_var, schedule)
        if trace is not None:
            trace.append(residual_energy(SamplerState(H, D, t), Y, P, pc, schedule))
    r1 = residual_energy(SamplerState(H, D, t), Y, P, pc, schedule)
    if np.any(r1 > 10.0 * np.maximum(r0, 1e-300)) and np.any(r1 > 1e-12):
        warnings.warn(f"corrector residual grew more than 10x at t={t:.4f}", SamplerInstabilityWarning,
                      stacklevel=2)
    return SamplerState(H, D, t)


# ---------------------------------------------------------------------------
# Full receiver
# ---------------------------------------------------------------------------


@dataclass
class CfmResult:
    H: np.ndarray
    D: np.ndarray
    bits: np.ndarray  # (..., L, N_S, N_T, M)
    trajectory: list = field(default_factory=list)


def run_cfm_rx(Y, P, pc: PilotConfig, vf: Callable, constellation: Constellation, cfg: SamplerConfig,
               init: SamplerState | None = None, n_layers: int | None = None, record: bool = False) -> CfmResult:
    """Joint channel estimation and data detection from ``Y``.

    ``Y`` is ``(..., N_r, N_S, N_T)``; leading axes are independent frames.
    ``P`` is ``(L, N_S, N_T)`` (or broadcastable). ``init`` overrides the
    Gaussian initial draw from ``cfg.seed``.
    """
    Y = np.asarray(Y)
    P = np.asarray(P)
    if init is None:
        L = n_layers if n_layers is not None else P.shape[-3]
        lead = Y.shape[:-3]
        nr = Y.shape[-3]
        grid = Y.shape[-2:]
        init = initial_state(lead + (nr, L) + grid, lead + (L,) + grid, cfg.seed)
    state = init.copy()
    grid = TimeGrid(cfg.steps)
    eps = grid.eps
    traj = []
    for i in range(cfg.steps, 0, -1):
        state.t = i / cfg.steps
        state = predictor_step(state, vf, constellation, eps, cfg.schedule)
        state.t = (i - 1) / cfg.steps
        state = corrector_step(state, Y, P, pc, cfg.noise_var, cfg.c, eps, cfg.corrector_steps,
                               cfg.weighting, cfg.sign, cfg.schedule, coupling=cfg.coupling, vf=vf,
                               constellation=constellation, precondition=cfg.resolve_precondition(pc))
        if not (np.all(np.isfinite(state.H)) and np.all(np.isfinite(state.D))):
            raise SamplerDivergedError(f"non-finite sampler state at step i={i} (t={state.t:.4f})", step=i)
        if record:
            traj.append(state.copy())
    bits = constellation.labels[nearest_index(state.D, constellation)]
    return CfmResult(state.H, state.D, bits, traj)


def with_overrides(cfg: SamplerConfig, **kw) -> SamplerConfig:
    return replace(cfg, **kw)
