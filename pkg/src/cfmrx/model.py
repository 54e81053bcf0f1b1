"""Frame layout, constellations, pilots and the per-RE transmission model.

All grids are complex ``numpy`` arrays whose last two axes are
``(n_subcarriers, n_symbols)``. Stacked quantities follow one axis order
throughout the package:

* data / pilot / transmit grids: ``(..., L, N_S, N_T)``
* channel tensor: ``(..., N_r, L, N_S, N_T)``
* received tensor: ``(..., N_r, N_S, N_T)``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigurationError

SeedLike = "int | np.random.SeedSequence | np.random.Generator | None"


def as_rng(seed) -> np.random.Generator:
    """Return a Generator for an int, SeedSequence, Generator or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with ``E|x|^2 = var``."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class FrameConfig:
    n_subcarriers: int = 48
    n_symbols: int = 12
    n_rx: int = 4
    n_layers: int = 1

    def __post_init__(self):
        for name in ("n_subcarriers", "n_symbols", "n_rx", "n_layers"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.n_subcarriers, self.n_symbols)

    @property
    def n_re(self) -> int:
        return self.n_subcarriers * self.n_symbols

    @property
    def channel_shape(self) -> tuple[int, int, int, int]:
        return (self.n_rx, self.n_layers, self.n_subcarriers, self.n_symbols)

    @property
    def layer_shape(self) -> tuple[int, int, int]:
        return (self.n_layers, self.n_subcarriers, self.n_symbols)

    @property
    def rx_shape(self) -> tuple[int, int, int]:
        return (self.n_rx, self.n_subcarriers, self.n_symbols)


# ---------------------------------------------------------------------------
# Constellations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constellation:
    """Unit-energy point set with Gray labels.

    ``points[k]`` carries the label whose integer value (MSB first) is ``k``,
    so ``labels[k]`` is simply the binary expansion of ``k``.
    """

    order: int
    family: str
    points: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def labels(self) -> np.ndarray:
        k = np.arange(self.size)
        shifts = np.arange(self.order - 1, -1, -1)
        return ((k[:, None] >> shifts) & 1).astype(np.uint8)

    @property
    def name(self) -> str:
        if self.family == "PSK":
            return {1: "BPSK", 2: "QPSK"}.get(self.order, f"{2 ** self.order}-PSK")
        return "QPSK" if self.order == 2 else f"{2 ** self.order}-QAM"


def _gray(i: np.ndarray) -> np.ndarray:
    return i ^ (i >> 1)


def _pam_levels(m: int) -> np.ndarray:
    """Gray-labelled PAM amplitudes on one axis, indexed by label."""
    n = 2 ** m
    levels = np.arange(-(n - 1), n, 2, dtype=float)[::-1]  # position 0 is the largest amplitude
    out = np.empty(n)
    out[_gray(np.arange(n))] = levels
    return out


def build_constellation(order: int, family: Literal["QAM", "PSK"] = "QAM") -> Constellation:
    """Gray-labelled unit-energy constellation.

    Supported pairs are PSK with ``order`` in {1, 2, 3, 4} and square QAM
    with ``order`` in {2, 4, 6}. PSK rings are rotated by half a sector
    (``exp(j*pi*(2i+1)/2**order)``) except BPSK, which sits on {+1, -1}.
    """
    family = family.upper()
    if family == "PSK" and order in (1, 2, 3, 4):
        n = 2 ** order
        pos = np.arange(n)
        if order == 1:
            angles = np.pi * pos
        else:
            angles = np.pi * (2 * pos + 1) / n
        points = np.empty(n, dtype=complex)
        points[_gray(pos)] = np.exp(1j * angles)
        # exact +/-1 for BPSK instead of cos(pi) round-off
        points = np.round(points.real, 15) + 1j * np.round(points.imag, 15)
    elif family == "QAM" and order in (2, 4, 6):
        half = order // 2
        amp = _pam_levels(half)
        k = np.arange(2 ** order)
        i_lab = k >> half
        q_lab = k & (2 ** half - 1)
        points = amp[i_lab] + 1j * amp[q_lab]
        points = points / np.sqrt(np.mean(np.abs(points) ** 2))
    else:
        raise ConfigurationError(f"unsupported constellation: order={order}, family={family}")
    return Constellation(order=order, family=family, points=points.astype(complex))


def modulate_bits(bits, constellation: Constellation, shape) -> np.ndarray:
    """Map a flat bit sequence onto a grid of ``shape`` in row-major RE order."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    shape = tuple(shape)
    m = constellation.order
    n_re = int(np.prod(shape))
    if bits.size != m * n_re:
        raise ValueError(f"expected {m * n_re} bits for grid {shape}, got {bits.size}")
    weights = 1 << np.arange(m - 1, -1, -1)
    idx = bits.reshape(n_re, m) @ weights
    return constellation.points[idx].reshape(shape)


def nearest_index(d: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Index of the nearest point per entry; ties go to the lowest index."""
    d = np.asarray(d)
    dist = np.abs(d[..., None] - constellation.points) ** 2
    return np.argmin(dist, axis=-1)


def hard_demap(d, constellation: Constellation) -> np.ndarray:
    """Bits of the nearest constellation point per RE, flattened row-major."""
    idx = nearest_index(d, constellation)
    return constellation.labels[idx].reshape(-1)


def random_bits(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def generate_pilots(cfg: FrameConfig, seed) -> np.ndarray:
    """QPSK pilot grids of shape ``(L, N_S, N_T)`` with unit modulus."""
    rng = as_rng(seed)
    qpsk = build_constellation(2, "QAM")
    bits = random_bits(rng, 2 * cfg.n_layers * cfg.n_re)
    return modulate_bits(bits, qpsk, cfg.layer_shape)


# ---------------------------------------------------------------------------
# Pilot schemes and transmit composition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PilotConfig:
    """Pilot arrangement: amplitudes plus data/pilot RE masks.

    ``a_d`` and ``a_p`` are amplitudes (square roots of the power split).
    """

    scheme: Literal["SIP", "OP"]
    a_d: float
    a_p: float
    mask_d: np.ndarray = field(repr=False)
    mask_p: np.ndarray = field(repr=False)

    def __post_init__(self):
        md = np.asarray(self.mask_d, dtype=float)
        mp = np.asarray(self.mask_p, dtype=float)
        if md.shape != mp.shape or md.ndim != 2:
            raise ConfigurationError("mask_d and mask_p must be 2-D grids of equal shape")
        if self.a_d < 0 or self.a_p < 0:
            raise ConfigurationError("amplitudes must be non-negative")
        if self.scheme == "SIP":
            if not (np.all(md == 1) and np.all(mp == 1)):
                raise ConfigurationError("SIP requires all-ones masks")
            if abs(self.a_d ** 2 + self.a_p ** 2 - 1.0) > 1e-9:
                total = self.a_d ** 2 + self.a_p ** 2
                raise ConfigurationError(f"SIP power split must satisfy a_d^2 + a_p^2 = 1 (got {total})")
        elif self.scheme == "OP":
            if not (np.isin(md, (0, 1)).all() and np.isin(mp, (0, 1)).all()):
                raise ConfigurationError("OP masks must be binary")
            if np.any(md * mp != 0) or not np.all(md + mp == 1):
                raise ConfigurationError("OP masks must partition the RE grid")
            if self.a_d != 1.0 or self.a_p != 1.0:
                raise ConfigurationError("OP uses unit amplitudes")
        else:
            raise ConfigurationError(f"unknown pilot scheme {self.scheme!r}")
        object.__setattr__(self, "mask_d", md)
        object.__setattr__(self, "mask_p", mp)

    @classmethod
    def sip(cls, cfg: FrameConfig, data_power: float = 0.9) -> "PilotConfig":
        if not 0.0 <= data_power <= 1.0:
            raise ConfigurationError("data_power must lie in [0, 1]")
        ones = np.ones(cfg.grid_shape)
        return cls("SIP", float(np.sqrt(data_power)), float(np.sqrt(1.0 - data_power)), ones, ones.copy())

    @classmethod
    def op(cls, cfg: FrameConfig, pilot_symbols=(2,)) -> "PilotConfig":
        mp = np.zeros(cfg.grid_shape)
        mp[:, list(pilot_symbols)] = 1.0
        return cls("OP", 1.0, 1.0, 1.0 - mp, mp)

    @property
    def data_fraction(self) -> float:
        """Fraction of REs carrying data (the throughput factor Omega)."""
        return float(np.mean(self.mask_d))

    @property
    def data_re(self) -> np.ndarray:
        return self.mask_d > 0

    @property
    def pilot_re(self) -> np.ndarray:
        return self.mask_p > 0

    def effective_symbols(self, D: np.ndarray, P: np.ndarray) -> np.ndarray:
        """``a_d M_d * D + a_p M_p * P`` (the per-layer transmit grid)."""
        return self.a_d * self.mask_d * D + self.a_p * self.mask_p * P


def compose_transmit(D: np.ndarray, P: np.ndarray, pc: PilotConfig) -> np.ndarray:
    """Transmit grids ``X_l`` from data and pilot grids."""
    D = np.asarray(D)
    P = np.asarray(P)
    if D.shape[-2:] != pc.mask_d.shape or P.shape[-2:] != pc.mask_p.shape:
        raise ConfigurationError(f"grid shape {D.shape[-2:]} / {P.shape[-2:]} does not match masks {pc.mask_d.shape}")
    return pc.effective_symbols(D, P)


# ---------------------------------------------------------------------------
# Noise and channel application
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    snr_db: float

    @property
    def variance(self) -> float:
        return float(10.0 ** (-self.snr_db / 10.0))

    @classmethod
    def from_variance(cls, var: float) -> "NoiseModel":
        if var <= 0:
            raise ConfigurationError("noise variance must be positive")
        return cls(-10.0 * np.log10(var))


def apply_channel_and_noise(X: np.ndarray, H: np.ndarray, noise, seed=None) -> np.ndarray:
    """``Y_r = sum_l H_{r,l} * X_l + N_r``.

    ``noise`` is a NoiseModel or a plain variance; a variance of 0 gives the
    noiseless output.
    """
    var = noise.variance if isinstance(noise, NoiseModel) else float(noise)
    X = np.asarray(X)
    H = np.asarray(H)
    if H.shape[-3:] != X.shape[-3:]:
        raise ValueError(f"channel {H.shape} and transmit grids {X.shape} disagree")
    Y = np.sum(H * X[..., None, :, :, :], axis=-3)
    if var > 0:
        Y = Y + complex_normal(as_rng(seed), Y.shape, var)
    return Y
