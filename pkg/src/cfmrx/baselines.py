"""Classical receivers: LS and LMMSE channel estimation, LMMSE equalisation.

Under SIP the LS estimate ``Y / (a_p P)`` carries the data as extra white
interference of power ``a_d^2 / a_p^2`` (uncorrelated with ``H`` because the
data have zero mean), so the LMMSE filter simply uses the inflated noise
level ``(a_d^2 + sigma^2) / a_p^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .channel import ChannelStats
from .errors import ConfigurationError
from .model import Constellation, PilotConfig, nearest_index
from .sampler import SamplerConfig, run_cfm_rx


def _single_layer(Y, P):
    if np.asarray(P).shape[-3] != 1:
        raise ConfigurationError("LS/LMMSE baselines support a single layer")


def ls_estimate(Y, P, pc: PilotConfig) -> np.ndarray:
    """Per-RE least squares on the pilot REs; zero elsewhere.

    Returns a channel tensor ``(..., N_r, 1, N_S, N_T)``.
    """
    Y = np.asarray(Y)
    P = np.asarray(P)
    _single_layer(Y, P)
    pil = pc.pilot_re
    ref = pc.a_p * P[..., 0, :, :]
    if np.any(np.abs(ref[..., pil]) == 0):
        raise ValueError("zero pilot amplitude on a pilot RE")
    safe = np.where(pil, ref, 1.0)
    h = np.where(pil, Y / safe, 0.0)
    return h[..., :, None, :, :]


def ls_error_variance(pc: PilotConfig, noise_var: float) -> float:
    """Per-RE error power of :func:`ls_estimate` on pilot REs."""
    if pc.scheme == "SIP":
        return (pc.a_d ** 2 + noise_var) / pc.a_p ** 2
    return noise_var / pc.a_p ** 2


@dataclass
class LmmseContext:
    """LMMSE interpolation filter ``R_hhp (R_hphp + s2 I)^{-1}`` for one pilot layout."""

    stats: ChannelStats
    noise_var: float
    pc: PilotConfig
    variant: Literal["oracle", "practical"] = "oracle"
    _W: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.noise_var <= 0:
            raise ConfigurationError("noise variance must be positive")
        if self.stats.shape != self.pc.mask_p.shape:
            raise ConfigurationError(f"covariance grid {self.stats.shape} does not match "
                                     f"pilot grid {self.pc.mask_p.shape}")

    @property
    def effective_noise(self) -> float:
        return ls_error_variance(self.pc, self.noise_var)

    @property
    def all_pilot(self) -> bool:
        return bool(np.all(self.pc.pilot_re))

    @property
    def filter(self) -> np.ndarray:
        """Dense filter mapping pilot-RE LS values to every RE (row-major)."""
        if self._W is None:
            C = self.stats.full()
            p = np.flatnonzero(self.pc.pilot_re.ravel())
            Rpp = C[np.ix_(p, p)] + self.effective_noise * np.eye(len(p))
            self._W = np.linalg.solve(Rpp.T, C[:, p].T).T
        return self._W

    def expected_nmse(self) -> float:
        """Closed-form normalised MSE ``tr(C - W R_hph^H) / tr(C)``."""
        if self.all_pilot:
            lam = self.stats.eigenvalues
            s2 = self.effective_noise
            return float(np.sum(lam * s2 / (lam + s2)) / np.sum(lam))
        C = self.stats.full()
        p = np.flatnonzero(self.pc.pilot_re.ravel())
        err = np.real(np.trace(C) - np.trace(self.filter @ C[p, :]))
        return float(err / np.real(np.trace(C)))


def lmmse_estimate(ls: np.ndarray, ctx: LmmseContext) -> np.ndarray:
    """Smooth LS estimates with the LMMSE filter, independently per (r, l)."""
    ls = np.asarray(ls)
    if ls.shape[-2:] != ctx.stats.shape:
        raise ConfigurationError(f"LS grid {ls.shape[-2:]} does not match covariance {ctx.stats.shape}")
    if ctx.all_pilot:
        s2 = ctx.effective_noise
        return ctx.stats.apply(ls, lambda lam: lam / (lam + s2))
    p = np.flatnonzero(ctx.pc.pilot_re.ravel())
    flat = ls.reshape(ls.shape[:-2] + (-1,))[..., p]
    return (flat @ ctx.filter.T).reshape(ls.shape)


def lmmse_equalize(Y, H_hat, noise_var: float) -> np.ndarray:
    """Per-RE MMSE combining ``(H^H H + s2 I)^{-1} H^H y`` over receive antennas.

    ``Y`` is ``(..., N_r, N_S, N_T)``, ``H_hat`` is ``(..., N_r, L, N_S, N_T)``;
    the result is ``(..., L, N_S, N_T)``.
    """
    Y = np.asarray(Y)
    H = np.asarray(H_hat)
    Hm = np.moveaxis(H, (-4, -3), (-2, -1))  # (..., S, T, N_r, L)
    y = np.moveaxis(Y, -3, -1)[..., None]  # (..., S, T, N_r, 1)
    Hh = np.conj(np.swapaxes(Hm, -1, -2))
    G = Hh @ Hm + noise_var * np.eye(Hm.shape[-1])
    x = np.linalg.solve(G, Hh @ y)[..., 0]  # (..., S, T, L)
    return np.moveaxis(x, -1, -3)


def equalize_data(Y, H_hat, P, pc: PilotConfig, noise_var: float) -> np.ndarray:
    """LMMSE data estimate after removing the known pilot contribution."""
    H_hat = np.asarray(H_hat)
    pilot_part = np.sum(H_hat * (pc.a_p * pc.mask_p * np.asarray(P))[..., None, :, :, :], axis=-3)
    return lmmse_equalize(np.asarray(Y) - pilot_part, pc.a_d * pc.mask_d * H_hat, noise_var)


def detect(D_hat, constellation: Constellation) -> np.ndarray:
    """Hard bits with a trailing bit axis."""
    return constellation.labels[nearest_index(D_hat, constellation)]


@dataclass
class TeqResult:
    H: np.ndarray
    D: np.ndarray
    bits: np.ndarray


def run_cfm_teq(Y, P, pc: PilotConfig, vf: Callable, constellation: Constellation, cfg: SamplerConfig,
                channel_estimate: np.ndarray | None = None, **kw) -> TeqResult:
    """Two-stage ablation: flow-based channel estimate, then LMMSE equalisation.

    Passing ``channel_estimate`` skips the first stage.
    """
    if channel_estimate is None:
        channel_estimate = run_cfm_rx(Y, P, pc, vf, constellation, cfg, **kw).H
    D_hat = equalize_data(Y, channel_estimate, P, pc, cfg.noise_var)
    return TeqResult(channel_estimate, D_hat, detect(D_hat, constellation))
