"""Tapped-delay-line channel generator, its exact covariance, and dataset files.

Channels follow ``H_{r,l}[s, n] = sum_k g_k[n] exp(-j 2 pi s df tau_k)`` with
``g_k`` circular Gaussian of power ``p_k`` and AR(1) evolution across OFDM
symbols. The resulting RE covariance is separable, ``C = C_f kron C_t``,
which the rest of the package exploits for cheap spectral operations.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import j0

from .errors import CorruptFileError, HeaderMismatchError, NonPSDError
from .model import FrameConfig, as_rng, complex_normal

SPEED_OF_LIGHT = 299_792_458.0


def jakes_correlation(speed_kmh: float, carrier_hz: float, symbol_duration_s: float) -> float:
    """Lag-one time correlation ``J0(2 pi f_D T_sym)`` of a Jakes spectrum."""
    f_d = speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT
    return float(j0(2.0 * np.pi * f_d * symbol_duration_s))


@dataclass(frozen=True)
class ChannelProfile:
    delays: tuple[float, ...]
    powers: tuple[float, ...]
    subcarrier_spacing: float = 15e3
    rho: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        p = np.asarray(self.powers, dtype=float)
        if d.ndim != 1 or d.shape != p.shape or d.size == 0:
            raise ValueError("delays and powers must be equal-length 1-D sequences")
        if np.any(p <= 0):
            raise ValueError("tap powers must be positive")
        if np.any(d < 0) or np.any(np.diff(d) < 0):
            raise ValueError("tap delays must be non-negative and ascending")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        object.__setattr__(self, "delays", tuple(float(x) for x in d))
        object.__setattr__(self, "powers", tuple(float(x) for x in p / p.sum()))

    @classmethod
    def exponential(cls, n_taps: int = 8, tau_rms: float = 300e-9, tap_spacing: float = 100e-9,
                    subcarrier_spacing: float = 15e3, rho: float | None = None) -> "ChannelProfile":
        """Exponential power-delay profile ``p_k ~ exp(-tau_k / tau_rms)``.

        ``rho=None`` uses the Jakes correlation for 3 km/h at 3.5 GHz with
        14 symbols per 1 ms slot.
        """
        delays = tap_spacing * np.arange(n_taps)
        powers = np.exp(-delays / tau_rms)
        if rho is None:
            rho = jakes_correlation(3.0, 3.5e9, 1e-3 / 14)
        return cls(tuple(delays), tuple(powers), subcarrier_spacing, rho)

    def to_dict(self) -> dict:
        return {"delays": list(self.delays), "powers": list(self.powers),
                "subcarrier_spacing": self.subcarrier_spacing, "rho": self.rho}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelProfile":
        if "delays" not in d:
            return cls.exponential(**d)
        return cls(tuple(d["delays"]), tuple(d["powers"]), d.get("subcarrier_spacing", 15e3), d.get("rho", 1.0))

    @property
    def hash(self) -> int:
        blob = json.dumps({k: [repr(float(x)) for x in np.atleast_1d(v)] for k, v in self.to_dict().items()},
                          sort_keys=True).encode()
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def default_profile() -> ChannelProfile:
    return ChannelProfile.exponential()


def generate_channel(profile: ChannelProfile, cfg: FrameConfig, seed, n_samples: int | None = None) -> np.ndarray:
    """Draw channel tensors of shape ``(N_r, L, N_S, N_T)``, or with a leading sample axis."""
    rng = as_rng(seed)
    lead = () if n_samples is None else (int(n_samples),)
    n_taps = len(profile.delays)
    shape = lead + (cfg.n_rx, cfg.n_layers, n_taps)
    p = np.asarray(profile.powers)
    rho = profile.rho
    innov = np.sqrt(1.0 - rho ** 2)
    g = np.empty(shape + (cfg.n_symbols,), dtype=complex)
    g[..., 0] = complex_normal(rng, shape)
    for n in range(1, cfg.n_symbols):
        g[..., n] = rho * g[..., n - 1] + innov * complex_normal(rng, shape)
    g *= np.sqrt(p)[:, None]
    s = np.arange(cfg.n_subcarriers)
    steer = np.exp(-2j * np.pi * np.outer(s, profile.delays) * profile.subcarrier_spacing)
    return np.einsum("sk,...kn->...sn", steer, g)


# ---------------------------------------------------------------------------
# Second-order statistics
# ---------------------------------------------------------------------------


@dataclass
class ChannelStats:
    """Separable RE covariance ``C = cov_f kron cov_t`` with cached eigenbases.

    Row-major RE vectors are used throughout, so ``C @ vec(X)`` equals
    ``vec(cov_f @ X @ cov_t.T)``.
    """

    cov_f: np.ndarray
    cov_t: np.ndarray
    _eig: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.cov_f = np.asarray(self.cov_f, dtype=complex)
        self.cov_t = np.asarray(self.cov_t, dtype=complex)
        for name, m in (("cov_f", self.cov_f), ("cov_t", self.cov_t)):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be square")
            scale = max(1.0, float(np.max(np.abs(m))))
            if np.max(np.abs(m - m.conj().T)) > 1e-9 * scale:
                raise NonPSDError(f"{name} is not Hermitian")
            if np.linalg.eigvalsh(m).min() < -1e-9 * scale:
                raise NonPSDError(f"{name} has a negative eigenvalue")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.cov_f.shape[0], self.cov_t.shape[0])

    def full(self) -> np.ndarray:
        return np.kron(self.cov_f, self.cov_t)

    def eig(self):
        if self._eig is None:
            lf, uf = np.linalg.eigh(self.cov_f)
            lt, ut = np.linalg.eigh(self.cov_t)
            lam = np.clip(np.outer(np.clip(lf, 0, None), np.clip(lt, 0, None)), 0.0, None)
            self._eig = (lam, uf, ut)
        return self._eig

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the full covariance as an ``(N_S, N_T)`` grid."""
        return self.eig()[0]

    def to_eigen(self, x: np.ndarray) -> np.ndarray:
        _, uf, ut = self.eig()
        return uf.conj().T @ x @ ut.conj()

    def from_eigen(self, z: np.ndarray) -> np.ndarray:
        _, uf, ut = self.eig()
        return uf @ z @ ut.T

    def apply(self, x: np.ndarray, gain) -> np.ndarray:
        """Apply ``f(C)`` to every grid in ``x``; ``gain`` maps eigenvalues to multipliers."""
        return self.from_eigen(gain(self.eigenvalues) * self.to_eigen(x))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.cov_f @ x @ self.cov_t.T


def oracle_covariance(profile: ChannelProfile, cfg: FrameConfig) -> ChannelStats:
    """Exact frequency/time covariances of :func:`generate_channel`."""
    s = np.arange(cfg.n_subcarriers)
    ds = s[:, None] - s[None, :]
    tau = np.asarray(profile.delays)
    p = np.asarray(profile.powers)
    cov_f = np.einsum("k,ijk->ij", p, np.exp(-2j * np.pi * ds[..., None] * profile.subcarrier_spacing * tau))
    n = np.arange(cfg.n_symbols)
    cov_t = profile.rho ** np.abs(n[:, None] - n[None, :]).astype(float)
    return ChannelStats(cov_f, cov_t)


def _psd_project(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    r = (v * np.clip(w, 0.0, None)) @ v.conj().T
    return 0.5 * (r + r.conj().T)  # exactly Hermitian


def sample_covariance(dataset, count: int | None = None) -> ChannelStats:
    """Separable empirical covariance from the first ``count`` channel samples.

    ``dataset`` is a :class:`ChannelDataset` or an array ``(n, N_r, L, N_S, N_T)``.
    All receive antennas and layers of a sample are pooled. The time factor is
    normalised to unit mean diagonal so the overall power lives in ``cov_f``.
    """
    H = dataset.channels if isinstance(dataset, ChannelDataset) else np.asarray(dataset)
    if H.ndim == 4:
        H = H[None]
    n_avail = H.shape[0]
    if n_avail == 0:
        raise ValueError("cannot estimate a covariance from an empty dataset")
    count = n_avail if count is None else int(count)
    if not 1 <= count <= n_avail:
        raise ValueError(f"count must lie in [1, {n_avail}], got {count}")
    h = H[:count].reshape(-1, H.shape[-2], H.shape[-1]).astype(complex)
    k, ns, nt = h.shape
    cov_f = np.einsum("ksn,kun->su", h, h.conj()) / (k * nt)
    cov_t = np.einsum("ksn,ksm->nm", h, h.conj()) / (k * ns)
    cov_t = cov_t / np.mean(np.real(np.diag(cov_t)))
    return ChannelStats(_psd_project(cov_f), _psd_project(cov_t))


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

_MAGIC = b"CFMH"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIIIQQQ")


@dataclass
class ChannelDataset:
    cfg: FrameConfig
    channels: np.ndarray  # complex64, (n, N_r, L, N_S, N_T)
    profile_hash: int
    seed: int

    def __post_init__(self):
        self.channels = np.asarray(self.channels).astype(np.complex64, copy=False)
        if self.channels.ndim != 5 or self.channels.shape[1:] != self.cfg.channel_shape:
            raise HeaderMismatchError(f"channel array {self.channels.shape} does not match {self.cfg.channel_shape}")

    def __len__(self) -> int:
        return self.channels.shape[0]

    def split(self, ratios=(8, 1, 1)):
        """Contiguous train/validation/test index ranges in the given ratio."""
        r = np.asarray(ratios, dtype=float)
        edges = np.round(np.cumsum(r) / r.sum() * len(self)).astype(int)
        edges[-1] = len(self)
        starts = np.concatenate([[0], edges[:-1]])
        return [np.arange(a, b) for a, b in zip(starts, edges)]


def make_dataset(profile: ChannelProfile, cfg: FrameConfig, n_samples: int, seed: int) -> ChannelDataset:
    H = generate_channel(profile, cfg, seed, n_samples=n_samples)
    return ChannelDataset(cfg, H, profile.hash, int(seed))


def write_dataset(path, ds: ChannelDataset) -> None:
    cfg = ds.cfg
    header = _HEADER.pack(_MAGIC, _VERSION, cfg.n_subcarriers, cfg.n_symbols, cfg.n_rx, cfg.n_layers,
                          len(ds), ds.profile_hash & (2 ** 64 - 1), ds.seed & (2 ** 64 - 1))
    payload = np.ascontiguousarray(ds.channels, dtype="<c8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_dataset(path, cfg: FrameConfig | None = None, profile: ChannelProfile | None = None) -> ChannelDataset:
    """Load a dataset, refusing files whose header contradicts ``cfg`` / ``profile``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptFileError(f"{path}: file shorter than header")
    magic, version, ns, nt, nr, nl, count, phash, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise CorruptFileError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise CorruptFileError(f"{path}: unsupported version {version}")
    file_cfg = FrameConfig(ns, nt, nr, nl)
    if cfg is not None and cfg != file_cfg:
        raise HeaderMismatchError(f"{path}: dims {file_cfg} differ from expected {cfg}")
    if profile is not None and profile.hash != phash:
        raise HeaderMismatchError(f"{path}: profile hash {phash:#x} differs from expected {profile.hash:#x}")
    expected = count * nr * nl * ns * nt * 8
    body = len(raw) - _HEADER.size
    if body < expected:
        raise CorruptFileError(f"{path}: payload truncated ({body} of {expected} bytes)")
    if body > expected:
        raise CorruptFileError(f"{path}: payload holds {body - expected} bytes beyond the {count} declared samples")
    H = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size).reshape(count, nr, nl, ns, nt)
    return ChannelDataset(file_cfg, H.astype(np.complex64), phash, seed)
