"""Interpolation schedules and the moment-matched ODE coefficients.

For ``x_t = alpha_t x_0 + sigma_t x_1`` the score ODE has drift
``a(t) = alpha'/alpha`` and diffusion ``g(t)^2 = 2 sigma (sigma' - a sigma)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

ALPHA_FLOOR = 1e-6


@dataclass(frozen=True)
class ScheduleValues:
    t: float
    alpha: float
    sigma: float
    dalpha: float
    dsigma: float
    singular: bool

    @property
    def drift(self) -> float:
        """``a(t) = alpha'/alpha``; inf where alpha vanishes."""
        return self.dalpha / self.alpha if not self.singular else -np.inf

    @property
    def lam(self) -> float:
        return self.dsigma - self.drift * self.sigma if not self.singular else np.inf

    @property
    def kappa(self) -> float:
        """Score weight ``lambda_t * sigma_t``."""
        return self.lam * self.sigma if not self.singular else np.inf

    @property
    def diffusion(self) -> float:
        return float(np.sqrt(2.0 * self.kappa)) if not self.singular else np.inf

    def floored_drift(self) -> float:
        """Drift with alpha floored at ``ALPHA_FLOOR``; for diagnostics only."""
        return self.dalpha / max(self.alpha, ALPHA_FLOOR)


@dataclass(frozen=True)
class Schedule:
    alpha: Callable[[float], float]
    sigma: Callable[[float], float]
    dalpha: Callable[[float], float]
    dsigma: Callable[[float], float]
    name: str = "custom"

    def at(self, t: float) -> ScheduleValues:
        t = float(t)
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        a = float(self.alpha(t))
        return ScheduleValues(t, a, float(self.sigma(t)), float(self.dalpha(t)), float(self.dsigma(t)),
                              singular=(a == 0.0))


OT = Schedule(alpha=lambda t: 1.0 - t, sigma=lambda t: t,
              dalpha=lambda t: -1.0, dsigma=lambda t: 1.0, name="ot")


def eval_ot(t: float) -> ScheduleValues:
    return OT.at(t)


@dataclass(frozen=True)
class TimeGrid:
    steps: int

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ValueError("the time grid needs at least one step")

    @property
    def eps(self) -> float:
        return 1.0 / self.steps

    @property
    def nodes(self) -> np.ndarray:
        """Descending nodes ``1, (T-1)/T, ..., 0``."""
        return np.arange(self.steps, -1, -1) / self.steps


def time_grid(steps: int) -> TimeGrid:
    return TimeGrid(int(steps))
