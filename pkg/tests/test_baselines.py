import math

import numpy as np
import pytest

from cfmrx.baselines import (LmmseContext, equalize_data, lmmse_equalize, lmmse_estimate, ls_error_variance,
                             ls_estimate, run_cfm_teq)
from cfmrx.channel import ChannelStats, default_profile, generate_channel, oracle_covariance
from cfmrx.errors import ConfigurationError
from cfmrx.harness import nmse
from cfmrx.model import (FrameConfig, PilotConfig, apply_channel_and_noise, build_constellation, compose_transmit,
                         generate_pilots, hard_demap, modulate_bits, random_bits)
from cfmrx.prior import GaussianPrior
from cfmrx.sampler import SamplerConfig, initial_state, run_cfm_rx

CFG = FrameConfig(12, 12, 2, 1)


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def test_ls_op_flat_noiseless():
    pc = PilotConfig.op(CFG)
    P = generate_pilots(CFG, 0)
    D = _cn(np.random.default_rng(0), CFG.layer_shape)
    Y = apply_channel_and_noise(compose_transmit(D, P, pc), np.ones(CFG.channel_shape), 0.0)
    h = ls_estimate(Y, P, pc)
    np.testing.assert_allclose(h[..., 2], 1.0, atol=1e-12)
    np.testing.assert_array_equal(np.delete(h, 2, axis=-1), 0)


def test_ls_sip_interference_free():
    pc = PilotConfig.sip(CFG)
    P = generate_pilots(CFG, 1)
    H = generate_channel(default_profile(), CFG, 1)
    Y = apply_channel_and_noise(compose_transmit(np.zeros(CFG.layer_shape), P, pc), H, 0.0)
    np.testing.assert_allclose(ls_estimate(Y, P, pc), H, atol=1e-12)


def test_ls_sip_error_power():
    pc = PilotConfig.sip(CFG)
    s2 = 0.3
    rng = np.random.default_rng(2)
    c = build_constellation(2)
    n = 400
    P = generate_pilots(CFG, 102)
    D = modulate_bits(random_bits(rng, 2 * n * CFG.n_re), c, (n,) + CFG.layer_shape)
    H = generate_channel(default_profile(), CFG, rng, n_samples=n)
    Y = apply_channel_and_noise(compose_transmit(D, P, pc), H, s2, rng)
    err = np.mean(np.abs(ls_estimate(Y, P, pc) - H) ** 2)
    expected = (pc.a_d ** 2 + s2) / pc.a_p ** 2
    assert ls_error_variance(pc, s2) == pytest.approx(expected)
    assert err == pytest.approx(expected, rel=0.05)


def test_ls_rejects_zero_pilot():
    pc = PilotConfig.sip(CFG)
    P = generate_pilots(CFG, 0)
    P[0, 0, 0] = 0
    with pytest.raises(ValueError):
        ls_estimate(np.ones(CFG.rx_shape), P, pc)


def test_scalar_lmmse_halves():
    ones = np.ones((1, 1))
    pc = PilotConfig("SIP", 0.0, 1.0, ones, ones)
    ctx = LmmseContext(ChannelStats(ones, ones), 1.0, pc)
    np.testing.assert_allclose(lmmse_estimate(np.full((1, 1, 1, 1), 4.0 + 2j), ctx), 2.0 + 1j)
    assert ctx.expected_nmse() == pytest.approx(0.5)


def test_lmmse_low_noise_returns_ls():
    rng = np.random.default_rng(3)
    cfg = FrameConfig(6, 4, 1, 1)
    a = _cn(rng, (6, 6))
    b = _cn(rng, (4, 4))
    stats = ChannelStats(a @ a.conj().T + np.eye(6), b @ b.conj().T + np.eye(4))
    ls = _cn(rng, cfg.channel_shape)
    pc = PilotConfig.sip(cfg, 0.0)
    np.testing.assert_allclose(lmmse_estimate(ls, LmmseContext(stats, 1e-12, pc)), ls, atol=1e-8)


def test_lmmse_dimension_mismatch():
    stats = oracle_covariance(default_profile(), CFG)
    with pytest.raises(ConfigurationError):
        LmmseContext(stats, 0.1, PilotConfig.sip(FrameConfig(6, 4, 1, 1)))
    ctx = LmmseContext(stats, 0.1, PilotConfig.sip(CFG))
    with pytest.raises(ConfigurationError):
        lmmse_estimate(np.zeros((1, 1, 6, 4)), ctx)


@pytest.mark.parametrize("scheme", ["SIP", "OP"])
def test_oracle_lmmse_matches_closed_form(scheme):
    prof = default_profile()
    cfg = FrameConfig()
    pc = PilotConfig.sip(cfg) if scheme == "SIP" else PilotConfig.op(cfg)
    stats = oracle_covariance(prof, cfg)
    s2 = 0.1
    rng = np.random.default_rng(4)
    n = 200
    P = generate_pilots(cfg, 104)
    D = modulate_bits(random_bits(rng, 2 * n * cfg.n_re), build_constellation(2), (n,) + cfg.layer_shape)
    H = generate_channel(prof, cfg, rng, n_samples=n)
    Y = apply_channel_and_noise(compose_transmit(D, P, pc), H, s2, rng)
    ctx = LmmseContext(stats, s2, pc)
    got = nmse(lmmse_estimate(ls_estimate(Y, P, pc), ctx), H)
    assert abs(got - 10 * math.log10(ctx.expected_nmse())) <= 0.5


def test_op_closed_form_equals_dense_formula():
    cfg = FrameConfig(8, 6, 1, 1)
    stats = oracle_covariance(default_profile(), cfg)
    pc = PilotConfig.op(cfg)
    C = stats.full()
    p = np.flatnonzero(pc.pilot_re.ravel())
    s2 = 0.2
    W = C[:, p] @ np.linalg.inv(C[np.ix_(p, p)] + s2 * np.eye(len(p)))
    expected = np.real(np.trace(C - W @ C[p, :])) / np.real(np.trace(C))
    assert LmmseContext(stats, s2, pc).expected_nmse() == pytest.approx(expected, rel=1e-10)


def test_equalizer_examples():
    Y = np.full((1, 1, 1), 3.0 + 1j)
    H = np.full((1, 1, 1, 1), 2.0 + 0j)
    np.testing.assert_allclose(lmmse_equalize(Y, H, 1e-12), (3.0 + 1j) / 2)
    np.testing.assert_array_equal(lmmse_equalize(Y, np.zeros_like(H), 0.1), 0)


def test_equalizer_multi_antenna_formula():
    rng = np.random.default_rng(5)
    H = _cn(rng, (3, 2, 2, 2))
    Y = _cn(rng, (3, 2, 2))
    x = lmmse_equalize(Y, H, 0.3)
    h = H[:, :, 1, 0]
    expected = np.linalg.solve(h.conj().T @ h + 0.3 * np.eye(2), h.conj().T @ Y[:, 1, 0])
    np.testing.assert_allclose(x[:, 1, 0], expected)


def test_oracle_channel_qpsk_at_20db():
    prof = default_profile()
    cfg = FrameConfig()
    pc = PilotConfig.sip(cfg)
    c = build_constellation(2)
    s2 = 0.01
    rng = np.random.default_rng(6)
    n = 20
    bits = random_bits(rng, 2 * n * cfg.n_re)
    D = modulate_bits(bits, c, (n,) + cfg.layer_shape)
    P = generate_pilots(cfg, 106)
    H = generate_channel(prof, cfg, rng, n_samples=n)
    Y = apply_channel_and_noise(compose_transmit(D, P, pc), H, s2, rng)
    H_hat = lmmse_estimate(ls_estimate(Y, P, pc), LmmseContext(oracle_covariance(prof, cfg), s2, pc))
    ber = np.mean(hard_demap(equalize_data(Y, H_hat, P, pc, s2), c) != bits)
    assert ber < 1e-2


def test_teq_stage_isolation():
    cfg = FrameConfig(8, 4, 2, 1)
    pc = PilotConfig.sip(cfg)
    c = build_constellation(2)
    rng = np.random.default_rng(7)
    P = generate_pilots(cfg, 7)
    H = generate_channel(default_profile(), cfg, rng)
    Y = apply_channel_and_noise(compose_transmit(_cn(rng, cfg.layer_shape), P, pc), H, 0.05, rng)
    scfg = SamplerConfig(5, 2, noise_var=0.05)
    gp = GaussianPrior(oracle_covariance(default_profile(), cfg))
    res = run_cfm_teq(Y, P, pc, gp, c, scfg, channel_estimate=H)
    np.testing.assert_array_equal(res.D, equalize_data(Y, H, P, pc, 0.05))
    np.testing.assert_array_equal(res.H, H)


def test_teq_matches_cfm_channel_stage_for_pilot_only_frame():
    cfg = FrameConfig(8, 4, 2, 1)
    pc = PilotConfig.sip(cfg, 0.0)
    c = build_constellation(2)
    rng = np.random.default_rng(8)
    P = generate_pilots(cfg, 8)
    H = generate_channel(default_profile(), cfg, rng)
    Y = apply_channel_and_noise(P, H, 0.05, rng)
    gp = GaussianPrior(oracle_covariance(default_profile(), cfg))
    scfg = SamplerConfig(10, 0, noise_var=0.05, seed=3)
    init = initial_state(cfg.channel_shape, cfg.layer_shape, 3)
    a = run_cfm_rx(Y, P, pc, gp, c, scfg, init=init)
    b = run_cfm_teq(Y, P, pc, gp, c, scfg, init=init)
    np.testing.assert_array_equal(a.H, b.H)
