"""Metrics, configuration and SNR sweeps.

A sweep runs every (scheme, receiver, SNR) node on the same frames. Frame
``j`` at SNR index ``i`` draws its channel, bits, noise and sampler start
from ``SeedSequence(master_seed, spawn_key=(i, j)).spawn(4)``, so any frame
can be regenerated on its own and the results do not depend on the batch
size. Metrics are pooled over frames and bracketed with percentile
bootstrap intervals over frames.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .baselines import LmmseContext, equalize_data, lmmse_estimate, ls_estimate
from .channel import (ChannelProfile, ChannelStats, generate_channel, oracle_covariance, read_dataset,
                      sample_covariance)
from .errors import ConfigurationError, MissingArtifactError
from .model import (Constellation, FrameConfig, PilotConfig, apply_channel_and_noise, build_constellation,
                    compose_transmit, generate_pilots, modulate_bits, nearest_index)
from .prior import GaussianPrior, TrainConfig, load_weights
from .sampler import SamplerConfig, SamplerState, initial_state, run_cfm_rx

log = logging.getLogger(__name__)

NMSE_FLOOR_DB = -100.0
SCHEMES = ("SIP", "OP")
RECEIVERS = ("CFM-Rx", "CFM-TEQ", "LS", "LMMSE-O", "LMMSE-P")
CSV_COLUMNS = ("scheme", "receiver", "snr_db", "nmse_db", "nmse_ci_lo", "nmse_ci_hi", "ber", "ber_ci_lo",
               "ber_ci_hi", "throughput_bps", "frames", "seed")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _to_db(ratio: float) -> float:
    if ratio <= 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * math.log10(ratio), NMSE_FLOOR_DB)


def nmse(H_hat, H) -> float:
    """Normalised squared error in dB, ``10 log10(||H_hat - H||^2 / ||H||^2)``.

    With a leading frame axis the squared norms are pooled over frames
    before the ratio and the log. Exact recovery is reported as -100 dB.
    """
    H_hat = np.asarray(H_hat)
    H = np.asarray(H)
    if H_hat.shape != H.shape:
        raise ValueError(f"shape mismatch: {H_hat.shape} vs {H.shape}")
    ref = float(np.sum(np.abs(H) ** 2))
    if ref == 0.0:
        raise ValueError("NMSE is undefined for an all-zero reference channel")
    return _to_db(float(np.sum(np.abs(H_hat - H) ** 2)) / ref)


def ber(bits_hat, bits) -> float:
    """Fraction of differing bits."""
    a = np.asarray(bits_hat).ravel()
    b = np.asarray(bits).ravel()
    if a.size != b.size:
        raise ValueError(f"bit streams differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty bit streams")
    return float(np.count_nonzero(a != b)) / a.size


def ser(symbols_hat, symbols) -> float:
    """Fraction of differing symbol indices."""
    return ber(symbols_hat, symbols)


@dataclass(frozen=True)
class ThroughputParams:
    n_slot: float = 1000.0  # slots per second (1 ms slots)
    n_re: int = 576  # REs per slot and layer
    omega: float = 1.0  # fraction of REs carrying data
    code_rate: float = 1.0
    bits_per_symbol: int = 2

    def __post_init__(self):
        if self.n_slot <= 0 or self.n_re <= 0 or self.bits_per_symbol <= 0:
            raise ConfigurationError("slot rate, RE count and bits per symbol must be positive")
        if not 0.0 < self.omega <= 1.0:
            raise ConfigurationError(f"data fraction must lie in (0, 1], got {self.omega}")
        if not 0.0 < self.code_rate <= 1.0:
            raise ConfigurationError(f"code rate must lie in (0, 1], got {self.code_rate}")


def throughput(tp: ThroughputParams, ber_value: float) -> float:
    """Average throughput ``N_slot N_RE omega gamma M (1 - BER)`` in bit/s."""
    if not 0.0 <= ber_value <= 1.0:
        raise ValueError(f"BER must lie in [0, 1], got {ber_value}")
    return tp.n_slot * tp.n_re * tp.omega * tp.code_rate * tp.bits_per_symbol * (1.0 - ber_value)


def _bootstrap_indices(n: int, n_resamples: int, seed) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, n, size=(n_resamples, n))


def _check_level(level: float):
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")


def confidence_interval(samples, level: float = 0.90, n_resamples: int = 1000, seed=0) -> tuple[float, float]:
    """Percentile bootstrap interval of the sample mean."""
    x = np.asarray(samples, dtype=float).ravel()
    _check_level(level)
    if x.size < 10:
        raise ValueError(f"need at least 10 samples for a bootstrap interval, got {x.size}")
    means = x[_bootstrap_indices(x.size, n_resamples, seed)].mean(axis=1)
    a = 0.5 * (1.0 - level)
    lo, hi = np.quantile(means, [a, 1.0 - a])
    return float(lo), float(hi)


def ratio_interval(num, den, level: float = 0.90, n_resamples: int = 1000, seed=0) -> tuple[float, float]:
    """Percentile bootstrap interval of ``sum(num) / sum(den)`` over paired samples."""
    num = np.asarray(num, dtype=float).ravel()
    den = np.asarray(den, dtype=float).ravel()
    _check_level(level)
    if num.size != den.size:
        raise ValueError("numerator and denominator samples must be paired")
    if num.size < 10:
        raise ValueError(f"need at least 10 samples for a bootstrap interval, got {num.size}")
    idx = _bootstrap_indices(num.size, n_resamples, seed)
    r = num[idx].sum(axis=1) / np.maximum(den[idx].sum(axis=1), 1e-300)
    a = 0.5 * (1.0 - level)
    lo, hi = np.quantile(r, [a, 1.0 - a])
    return float(lo), float(hi)


@dataclass(frozen=True)
class MetricRecord:
    scheme: str
    receiver: str
    snr_db: float
    nmse_db: float
    nmse_ci_lo: float
    nmse_ci_hi: float
    ber: float
    ber_ci_lo: float
    ber_ci_hi: float
    ser: float
    throughput_bps: float
    frames: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.ber <= 1.0:
            raise ValueError(f"BER must lie in [0, 1], got {self.ber}")
        pairs = ((self.nmse_ci_lo, self.nmse_db, self.nmse_ci_hi), (self.ber_ci_lo, self.ber, self.ber_ci_hi))
        for lo, pt, hi in pairs:
            if not lo <= pt <= hi:
                raise ValueError(f"interval [{lo}, {hi}] does not contain {pt}")

    def csv_row(self) -> list[str]:
        return [self.scheme, self.receiver, _fmt(self.snr_db), _fmt(self.nmse_db), _fmt(self.nmse_ci_lo),
                _fmt(self.nmse_ci_hi), _fmt(self.ber), _fmt(self.ber_ci_lo), _fmt(self.ber_ci_hi),
                _fmt(self.throughput_bps), str(self.frames), str(self.seed)]


def _fmt(x: float) -> str:
    """Locale-independent fixed formatting used for every CSV number."""
    return format(float(x), ".6e") if np.isfinite(x) else "nan"


@dataclass
class FrameMetrics:
    """Per-frame sufficient statistics of one receiver."""

    err_energy: np.ndarray
    ref_energy: np.ndarray
    bit_errors: np.ndarray
    n_bits: int
    sym_errors: np.ndarray
    n_syms: int

    @classmethod
    def empty(cls) -> "FrameMetrics":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64), 0, np.zeros(0, dtype=np.int64), 0)

    def extend(self, other: "FrameMetrics") -> "FrameMetrics":
        if self.n_bits and other.n_bits and (self.n_bits != other.n_bits or self.n_syms != other.n_syms):
            raise ValueError("frames with different bit counts cannot be pooled")
        return FrameMetrics(np.concatenate([self.err_energy, other.err_energy]),
                            np.concatenate([self.ref_energy, other.ref_energy]),
                            np.concatenate([self.bit_errors, other.bit_errors]), other.n_bits or self.n_bits,
                            np.concatenate([self.sym_errors, other.sym_errors]), other.n_syms or self.n_syms)

    @property
    def frames(self) -> int:
        return int(self.err_energy.size)

    def nmse_db(self) -> float:
        return _to_db(float(self.err_energy.sum()) / float(self.ref_energy.sum()))

    def ber(self) -> float:
        return float(self.bit_errors.sum()) / (self.n_bits * self.frames)

    def ser(self) -> float:
        return float(self.sym_errors.sum()) / (self.n_syms * self.frames)


def summarize(scheme: str, receiver: str, snr_db: float, fm: FrameMetrics, tp: ThroughputParams, seed: int,
              level: float = 0.95, n_resamples: int = 1000) -> MetricRecord:
    """Pool per-frame statistics into a :class:`MetricRecord`.

    Intervals are widened to contain the point estimate when the percentile
    interval of a skewed statistic misses it.
    """
    n = fm.frames
    nm = fm.nmse_db()
    b = fm.ber()
    if n >= 10:
        lo, hi = ratio_interval(fm.err_energy, fm.ref_energy, level, n_resamples, seed)
        n_lo, n_hi = _to_db(lo), _to_db(hi)
        b_lo, b_hi = ratio_interval(fm.bit_errors, np.full(n, fm.n_bits, dtype=float), level, n_resamples, seed)
    else:
        n_lo = n_hi = nm
        b_lo = b_hi = b
    return MetricRecord(scheme, receiver, float(snr_db), nm, min(n_lo, nm), max(n_hi, nm), b, min(b_lo, b),
                        max(b_hi, b), fm.ser(), throughput(tp, b), n, int(seed))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class PilotSettings:
    data_power: float = 0.9  # a_d^2 under SIP
    op_pilot_symbols: tuple[int, ...] = (2,)
    pilot_seed: int = 7


@dataclass
class ModulationSettings:
    order: int = 2
    family: str = "QAM"


@dataclass
class PriorSettings:
    backend: str = "net"  # "net" | "analytic"
    weights: str = "artifacts/prior.cfmv"


@dataclass
class DatasetSettings:
    path: str = "artifacts/channels.cfmh"
    n_samples: int = 2000
    seed: int = 1
    practical_snapshots: int = 100


@dataclass
class SamplerSettings:
    steps: int = 30
    corrector_steps: int = 5
    step_scale: float | None = None  # None -> 1/K
    step_scale_by_snr: dict = field(default_factory=dict)  # {"snr_db": c} overrides
    weighting: str = "kappa"
    sign: int = 1
    coupling: str = "denoised"
    precondition: str = "auto"

    def build(self, noise_var: float, snr_db: float | None = None, seed: int = 0) -> SamplerConfig:
        c = self.step_scale
        if snr_db is not None:
            for key, val in self.step_scale_by_snr.items():
                if math.isclose(float(key), float(snr_db)):
                    c = float(val)
        return SamplerConfig(steps=self.steps, corrector_steps=self.corrector_steps, step_scale=c,
                             noise_var=noise_var, seed=seed, weighting=self.weighting, sign=self.sign,
                             coupling=self.coupling, precondition=self.precondition)


@dataclass
class SweepSettings:
    snr_db: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    frames: int = 200
    batch: int = 50
    schemes: tuple[str, ...] = SCHEMES
    receivers: tuple[str, ...] = RECEIVERS
    master_seed: int = 0
    ci_level: float = 0.95
    n_resamples: int = 1000
    slots_per_second: float = 1000.0
    code_rate: float = 1.0
    output_dir: str = "results"


@dataclass
class ExperimentConfig:
    frame: FrameConfig = field(default_factory=FrameConfig)
    profile: ChannelProfile = field(default_factory=ChannelProfile.exponential)
    pilot: PilotSettings = field(default_factory=PilotSettings)
    modulation: ModulationSettings = field(default_factory=ModulationSettings)
    prior: PriorSettings = field(default_factory=PriorSettings)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    sampler: SamplerSettings = field(default_factory=SamplerSettings)
    training: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    base_dir: Path = field(default_factory=Path.cwd, repr=False, compare=False)

    def __post_init__(self):
        if self.prior.backend not in ("net", "analytic"):
            raise ConfigurationError(f"unknown prior backend {self.prior.backend!r}")
        for s in self.sweep.schemes:
            if s not in SCHEMES:
                raise ConfigurationError(f"unknown scheme {s!r}")
        for r in self.sweep.receivers:
            if r not in RECEIVERS:
                raise ConfigurationError(f"unknown receiver {r!r}")
        if self.sweep.frames < 1 or self.sweep.batch < 1:
            raise ConfigurationError("frames and batch must be positive")
        if not 0.0 < self.sweep.ci_level < 1.0:
            raise ConfigurationError("ci_level must lie in (0, 1)")
        build_constellation(self.modulation.order, self.modulation.family)
        self.sampler.build(0.1)  # validates the sampler settings

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            d[f.name] = v.to_dict() if isinstance(v, ChannelProfile) else asdict(v)
        return json.loads(json.dumps(d))

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls) if f.name != "base_dir"}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        section_types = {"frame": FrameConfig, "pilot": PilotSettings, "modulation": ModulationSettings,
                         "prior": PriorSettings, "dataset": DatasetSettings, "sampler": SamplerSettings,
                         "training": TrainConfig, "sweep": SweepSettings}
        for name, sub in d.items():
            if name == "profile":
                kw[name] = ChannelProfile.from_dict(sub)
                continue
            tp = section_types[name]
            names = {f.name for f in fields(tp)}
            bad = set(sub) - names
            if bad:
                raise ConfigurationError(f"unknown keys in [{name}]: {sorted(bad)}")
            vals = {k: (tuple(v) if isinstance(v, list) else v) for k, v in sub.items()}
            try:
                kw[name] = tp(**vals)
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"invalid [{name}] section: {e}") from e
        if base_dir is not None:
            kw["base_dir"] = Path(base_dir)
        return cls(**kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"config file {path} not found; write one with `cfmrx default-config > {path}`")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: not valid JSON ({e})") from e
    return ExperimentConfig.from_dict(d, base_dir=path.resolve().parent)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=False)


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _config_hint(cfg: ExperimentConfig) -> str:
    return "--config <your config>"


def load_channel_prior(cfg: ExperimentConfig):
    """The channel velocity field selected by ``cfg.prior.backend``."""
    if cfg.prior.backend == "analytic":
        return GaussianPrior(oracle_covariance(cfg.profile, cfg.frame))
    path = cfg.resolve(cfg.prior.weights)
    if not path.exists():
        raise MissingArtifactError(f"prior weights {path} not found; train them with "
                                   f"`cfmrx train-prior {_config_hint(cfg)}` (needs `cfmrx gen-channels` first) "
                                   f"or set prior.backend to \"analytic\"")
    net = load_weights(path)
    if net.grid_shape != cfg.frame.grid_shape:
        raise ConfigurationError(f"weights are for grid {net.grid_shape}, config uses {cfg.frame.grid_shape}")
    if net.config_hash != cfg.training.hash:
        log.warning("weights in %s were trained with a different training config", path)
    return net


def load_practical_stats(cfg: ExperimentConfig) -> ChannelStats:
    path = cfg.resolve(cfg.dataset.path)
    if not path.exists():
        raise MissingArtifactError(f"channel dataset {path} not found; generate it with "
                                   f"`cfmrx gen-channels {_config_hint(cfg)}`")
    ds = read_dataset(path, cfg.frame, cfg.profile)
    n = min(cfg.dataset.practical_snapshots, len(ds))
    return sample_covariance(ds, n)


def pilot_config(cfg: ExperimentConfig, scheme: str) -> PilotConfig:
    if scheme == "SIP":
        return PilotConfig.sip(cfg.frame, cfg.pilot.data_power)
    if scheme == "OP":
        return PilotConfig.op(cfg.frame, cfg.pilot.op_pilot_symbols)
    raise ConfigurationError(f"unknown scheme {scheme!r}")


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------


def frame_streams(master_seed: int, snr_index: int, frame_index: int) -> list[np.random.Generator]:
    """Channel, bit, noise and sampler generators of one frame."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(snr_index), int(frame_index)))
    return [np.random.default_rng(s) for s in ss.spawn(4)]


@dataclass
class FrameBatch:
    H: np.ndarray  # (B, N_r, L, S, T)
    bits: np.ndarray  # (B, L, S, T, M)
    D: np.ndarray  # (B, L, S, T)
    Y: np.ndarray  # (B, N_r, S, T)
    init: SamplerState
    noise_var: float


def make_frames(cfg: ExperimentConfig, pc: PilotConfig, P: np.ndarray, constellation: Constellation, snr_db: float,
                snr_index: int, frame_indices: Iterable[int], master_seed: int) -> FrameBatch:
    fc = cfg.frame
    noise_var = 10.0 ** (-snr_db / 10.0)
    m = constellation.order
    Hs, bits, Ds, Ys, H1, D1 = [], [], [], [], [], []
    for j in frame_indices:
        g_ch, g_bits, g_noise, g_samp = frame_streams(master_seed, snr_index, j)
        H = generate_channel(cfg.profile, fc, g_ch)
        b = g_bits.integers(0, 2, size=fc.layer_shape + (m,), dtype=np.uint8)
        D = modulate_bits(b.reshape(-1), constellation, fc.layer_shape)
        Y = apply_channel_and_noise(compose_transmit(D, P, pc), H, noise_var, g_noise)
        st = initial_state(fc.channel_shape, fc.layer_shape, g_samp)
        Hs.append(H)
        bits.append(b)
        Ds.append(D)
        Ys.append(Y)
        H1.append(st.H)
        D1.append(st.D)
    return FrameBatch(np.stack(Hs), np.stack(bits), np.stack(Ds), np.stack(Ys),
                      SamplerState(np.stack(H1), np.stack(D1), 1.0), noise_var)


def frame_metrics(H_hat, D_hat, batch: FrameBatch, pc: PilotConfig, constellation: Constellation) -> FrameMetrics:
    """Per-frame channel error energies and data errors on data-carrying REs."""
    axes = tuple(range(1, batch.H.ndim))
    err = np.sum(np.abs(H_hat - batch.H) ** 2, axis=axes)
    ref = np.sum(np.abs(batch.H) ** 2, axis=axes)
    idx_hat = nearest_index(D_hat, constellation)
    idx = nearest_index(batch.D, constellation)
    data = np.broadcast_to(pc.data_re, idx.shape)
    bits_hat = constellation.labels[idx_hat]
    bit_err = (bits_hat != batch.bits) & data[..., None]
    sym_err = (idx_hat != idx) & data
    n_data = int(np.count_nonzero(data[0]))
    return FrameMetrics(err, ref, bit_err.reshape(len(err), -1).sum(axis=1),
                        n_data * constellation.order, sym_err.reshape(len(err), -1).sum(axis=1), n_data)


# ---------------------------------------------------------------------------
# Receivers
# ---------------------------------------------------------------------------


@dataclass
class ReceiverContext:
    cfg: ExperimentConfig
    vf: Callable | None
    oracle: ChannelStats
    practical: ChannelStats | None
    constellation: Constellation
    P: np.ndarray


def run_receivers(ctx: ReceiverContext, pc: PilotConfig, batch: FrameBatch, receivers: Sequence[str],
                  snr_db: float) -> dict[str, FrameMetrics]:
    """Evaluate the requested receivers on one batch of frames."""
    out = {}
    c = ctx.constellation
    s2 = batch.noise_var
    if "CFM-Rx" in receivers or "CFM-TEQ" in receivers:
        scfg = ctx.cfg.sampler.build(s2, snr_db)
        res = run_cfm_rx(batch.Y, ctx.P, pc, ctx.vf, c, scfg, init=batch.init)
        if "CFM-Rx" in receivers:
            out["CFM-Rx"] = frame_metrics(res.H, res.D, batch, pc, c)
        if "CFM-TEQ" in receivers:
            D_teq = equalize_data(batch.Y, res.H, ctx.P, pc, s2)
            out["CFM-TEQ"] = frame_metrics(res.H, D_teq, batch, pc, c)
    ls = None
    if any(r in receivers for r in ("LS", "LMMSE-O", "LMMSE-P")):
        if ctx.cfg.frame.n_layers != 1:
            raise ConfigurationError("the LS/LMMSE baselines support a single layer")
        ls = ls_estimate(batch.Y, ctx.P, pc)
    for name in ("LS", "LMMSE-O", "LMMSE-P"):
        if name not in receivers:
            continue
        if name == "LS":
            H_hat = ls
        else:
            stats = ctx.oracle if name == "LMMSE-O" else ctx.practical
            if stats is None:
                raise ConfigurationError("LMMSE-P needs practical channel statistics")
            H_hat = lmmse_estimate(ls, LmmseContext(stats, s2, pc,
                                                    "oracle" if name == "LMMSE-O" else "practical"))
        out[name] = frame_metrics(H_hat, equalize_data(batch.Y, H_hat, ctx.P, pc, s2), batch, pc, c)
    return out


def build_context(cfg: ExperimentConfig, receivers: Sequence[str],
                  constellation: Constellation | None = None) -> ReceiverContext:
    needs_cfm = any(r in receivers for r in ("CFM-Rx", "CFM-TEQ"))
    vf = load_channel_prior(cfg) if needs_cfm else None
    practical = load_practical_stats(cfg) if "LMMSE-P" in receivers else None
    if constellation is None:
        constellation = build_constellation(cfg.modulation.order, cfg.modulation.family)
    return ReceiverContext(cfg, vf, oracle_covariance(cfg.profile, cfg.frame), practical, constellation,
                           generate_pilots(cfg.frame, cfg.pilot.pilot_seed))


def _throughput_params(cfg: ExperimentConfig, pc: PilotConfig, c: Constellation) -> ThroughputParams:
    return ThroughputParams(cfg.sweep.slots_per_second, cfg.frame.n_re, pc.data_fraction, cfg.sweep.code_rate,
                            c.order)


def run_node(ctx: ReceiverContext, scheme: str, snr_db: float, snr_index: int, receivers: Sequence[str],
             frames: int | None = None) -> dict[str, FrameMetrics]:
    """All frames of one (scheme, SNR) node, processed in batches."""
    cfg = ctx.cfg
    frames = cfg.sweep.frames if frames is None else int(frames)
    pc = pilot_config(cfg, scheme)
    acc = {r: FrameMetrics.empty() for r in receivers}
    for start in range(0, frames, cfg.sweep.batch):
        idx = range(start, min(frames, start + cfg.sweep.batch))
        batch = make_frames(cfg, pc, ctx.P, ctx.constellation, snr_db, snr_index, idx, cfg.sweep.master_seed)
        for r, fm in run_receivers(ctx, pc, batch, receivers, snr_db).items():
            acc[r] = acc[r].extend(fm)
    return acc


def run_sweep(cfg: ExperimentConfig, progress: Callable[[str], None] | None = None) -> list[MetricRecord]:
    """Every scheme x receiver x SNR node of ``cfg.sweep``."""
    sw = cfg.sweep
    ctx = build_context(cfg, sw.receivers)
    records = []
    for scheme in sw.schemes:
        pc = pilot_config(cfg, scheme)
        tp = _throughput_params(cfg, pc, ctx.constellation)
        for i, snr in enumerate(sw.snr_db):
            acc = run_node(ctx, scheme, snr, i, sw.receivers)
            for r in sw.receivers:
                rec = summarize(scheme, r, snr, acc[r], tp, sw.master_seed, sw.ci_level, sw.n_resamples)
                records.append(rec)
                if progress is not None:
                    progress(f"{scheme:>3} {r:<8} {snr:+6.1f} dB  NMSE {rec.nmse_db:8.2f} dB  BER {rec.ber:.3e}")
    return records


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def records_to_csv(records: Sequence[MetricRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def read_records_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if rows and tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected CSV header {tuple(rows[0].keys())}")
    return rows


def plot_data(records: Sequence[MetricRecord]) -> str:
    """Series of the NMSE, BER and ablation figures as ``figure,series,x,y,y_lo,y_hi`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("figure", "series", "x_snr_db", "y", "y_lo", "y_hi"))
    for r in records:
        w.writerow(("nmse", f"{r.receiver} ({r.scheme})", _fmt(r.snr_db), _fmt(r.nmse_db), _fmt(r.nmse_ci_lo),
                    _fmt(r.nmse_ci_hi)))
    for r in records:
        w.writerow(("ber", f"{r.receiver} ({r.scheme})", _fmt(r.snr_db), _fmt(r.ber), _fmt(r.ber_ci_lo),
                    _fmt(r.ber_ci_hi)))
    for r in records:
        if r.receiver in ("CFM-Rx", "CFM-TEQ"):
            w.writerow(("ablation", f"{r.receiver} ({r.scheme})", _fmt(r.snr_db), _fmt(r.ber), _fmt(r.ber_ci_lo),
                        _fmt(r.ber_ci_hi)))
    return buf.getvalue()


def summary_text(records: Sequence[MetricRecord]) -> str:
    lines = [f"{'scheme':<6} {'receiver':<8} {'SNR':>6} {'NMSE dB':>9} {'BER':>11} {'SER':>11} {'R bit/s':>12}"]
    for r in records:
        lines.append(f"{r.scheme:<6} {r.receiver:<8} {r.snr_db:6.1f} {r.nmse_db:9.2f} {r.ber:11.4e} "
                     f"{r.ser:11.4e} {r.throughput_bps:12.4e}")
    return "\n".join(lines) + "\n"


def write_results(records: Sequence[MetricRecord], out_dir, cfg: ExperimentConfig | None = None,
                  stem: str = "sweep") -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{stem}.csv", "plot": out / f"{stem}_plot_data.csv", "summary": out / f"{stem}_summary.txt"}
    paths["csv"].write_text(records_to_csv(records))
    paths["plot"].write_text(plot_data(records))
    paths["summary"].write_text(summary_text(records))
    if cfg is not None:
        paths["config"] = out / f"{stem}_config.json"
        paths["config"].write_text(dump_config(cfg) + "\n")
    return paths


# ---------------------------------------------------------------------------
# Ablations
# ---------------------------------------------------------------------------


def ablation_teq(cfg: ExperimentConfig, progress=None) -> list[MetricRecord]:
    """CFM-Rx against the two-stage CFM-TEQ on the SIP frames."""
    sub = replace(cfg, sweep=replace(cfg.sweep, schemes=("SIP",), receivers=("CFM-Rx", "CFM-TEQ")))
    return run_sweep(sub, progress)


def ablation_steps(cfg: ExperimentConfig, steps: Sequence[int] = (5, 10, 20, 30, 50, 100), snr_db: float = 5.0,
                   scheme: str = "SIP", progress=None) -> list[MetricRecord]:
    """CFM-Rx BER against the number of reverse steps at one SNR (same frames for every T).

    The ``snr_db`` column of the returned records holds the SNR and the
    ``receiver`` column encodes ``CFM-Rx T=<steps>``.
    """
    ctx = build_context(cfg, ("CFM-Rx",))
    pc = pilot_config(cfg, scheme)
    tp = _throughput_params(cfg, pc, ctx.constellation)
    snr_index = _snr_index(cfg, snr_db)
    recs = []
    for T in steps:
        c2 = replace(cfg, sampler=replace(cfg.sampler, steps=int(T)))
        ctx2 = replace(ctx, cfg=c2)
        acc = run_node(ctx2, scheme, snr_db, snr_index, ("CFM-Rx",))
        rec = summarize(scheme, f"CFM-Rx T={int(T)}", snr_db, acc["CFM-Rx"], tp, cfg.sweep.master_seed,
                        cfg.sweep.ci_level, cfg.sweep.n_resamples)
        recs.append(rec)
        if progress is not None:
            progress(f"T={T:4d}  BER {rec.ber:.3e}")
    return recs


def ablation_modulation(cfg: ExperimentConfig, orders: Sequence[int] = (1, 2, 3, 4), family: str = "PSK",
                        scheme: str = "SIP", progress=None) -> list[MetricRecord]:
    """CFM-Rx across PSK orders with one channel prior."""
    recs = []
    vf = load_channel_prior(cfg)
    for m in orders:
        c = build_constellation(int(m), family)
        c2 = replace(cfg, modulation=ModulationSettings(int(m), family))
        ctx = replace(build_context(c2, (), c), vf=vf)
        pc = pilot_config(c2, scheme)
        tp = _throughput_params(c2, pc, c)
        for i, snr in enumerate(c2.sweep.snr_db):
            acc = run_node(ctx, scheme, snr, i, ("CFM-Rx",))
            rec = summarize(scheme, f"CFM-Rx {c.name}", snr, acc["CFM-Rx"], tp, cfg.sweep.master_seed,
                            cfg.sweep.ci_level, cfg.sweep.n_resamples)
            recs.append(rec)
            if progress is not None:
                progress(f"{c.name:<6} {snr:+6.1f} dB  BER {rec.ber:.3e}")
    return recs


def _snr_index(cfg: ExperimentConfig, snr_db: float) -> int:
    for i, s in enumerate(cfg.sweep.snr_db):
        if math.isclose(float(s), float(snr_db)):
            return i
    return len(cfg.sweep.snr_db)
