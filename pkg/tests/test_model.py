import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfmrx.errors import ConfigurationError
from cfmrx.model import (FrameConfig, NoiseModel, PilotConfig, apply_channel_and_noise, build_constellation,
                         compose_transmit, generate_pilots, hard_demap, modulate_bits, nearest_index, random_bits)

SUPPORTED = [(1, "PSK"), (2, "PSK"), (3, "PSK"), (4, "PSK"), (2, "QAM"), (4, "QAM"), (6, "QAM")]


def test_frame_config_defaults_and_validation():
    cfg = FrameConfig()
    assert (cfg.n_subcarriers, cfg.n_symbols, cfg.n_rx, cfg.n_layers) == (48, 12, 4, 1)
    assert cfg.channel_shape == (4, 1, 48, 12)
    with pytest.raises(ConfigurationError):
        FrameConfig(n_rx=0)


def test_qpsk_points_are_gray_labelled():
    c = build_constellation(2, "QAM")
    s = 1 / np.sqrt(2)
    assert set(np.round(c.points, 12)) == set(np.round(s * np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]), 12))
    # neighbours differ in exactly one bit
    for i in range(4):
        for j in range(4):
            if np.isclose(abs(c.points[i] - c.points[j]), np.sqrt(2)):
                assert np.sum(c.labels[i] != c.labels[j]) == 1


def test_bpsk_is_plus_minus_one():
    c = build_constellation(1, "PSK")
    assert sorted(c.points.real) == [-1.0, 1.0]
    assert np.all(c.points.imag == 0)


def test_8psk_ring_unit_energy():
    c = build_constellation(3, "PSK")
    assert c.size == 8
    np.testing.assert_allclose(np.abs(c.points), 1.0, atol=1e-12)
    assert abs(np.sum(np.abs(c.points) ** 2) / 8 - 1) < 1e-12
    angles = np.sort(np.mod(np.angle(c.points), 2 * np.pi))
    np.testing.assert_allclose(angles, np.pi * (2 * np.arange(8) + 1) / 8, atol=1e-12)


@pytest.mark.parametrize("order,family", SUPPORTED)
def test_constellations_unit_energy_and_bijective_labels(order, family):
    c = build_constellation(order, family)
    assert abs(np.mean(np.abs(c.points) ** 2) - 1) < 1e-12
    labels = {tuple(row) for row in c.labels}
    assert len(labels) == 2 ** order
    if order > 1:  # Gray: nearest neighbour differs in one bit
        d = np.abs(c.points[:, None] - c.points[None, :])
        np.fill_diagonal(d, np.inf)
        for i in range(c.size):
            j = int(np.argmin(d[i]))
            assert np.sum(c.labels[i] != c.labels[j]) == 1


@pytest.mark.parametrize("order,family", [(5, "PSK"), (3, "QAM"), (2, "FSK"), (0, "PSK")])
def test_unsupported_constellation(order, family):
    with pytest.raises(ConfigurationError):
        build_constellation(order, family)


def test_modulate_all_zero_bits():
    c = build_constellation(2, "QAM")
    X = modulate_bits(np.zeros(2 * 12), c, (4, 3))
    assert np.all(X == c.points[0])


def test_modulate_single_re_label():
    c = build_constellation(3, "PSK")
    bits = np.zeros(3 * 4, dtype=np.uint8)
    bits[3:6] = c.labels[3]
    X = modulate_bits(bits, c, (2, 2))
    assert X[0, 1] == c.points[3]


def test_modulate_length_mismatch():
    with pytest.raises(ValueError):
        modulate_bits(np.zeros(5), build_constellation(2), (2, 2))


@pytest.mark.parametrize("order,family", SUPPORTED)
def test_round_trip_exhaustive(order, family):
    c = build_constellation(order, family)
    bits = c.labels.reshape(-1)
    X = modulate_bits(bits, c, (c.size, 1))
    np.testing.assert_array_equal(hard_demap(X, c), bits)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(SUPPORTED), st.integers(0, 2 ** 32 - 1))
def test_round_trip_random_bits(pair, seed):
    c = build_constellation(*pair)
    bits = random_bits(np.random.default_rng(seed), c.order * 20)
    np.testing.assert_array_equal(hard_demap(modulate_bits(bits, c, (4, 5)), c), bits)


def test_demap_nearest_neighbour_and_tie_break():
    c = build_constellation(2, "QAM")
    rng = np.random.default_rng(0)
    for k in range(4):
        d = 0.9 * c.points[k] + 1e-3 * (rng.standard_normal() + 1j * rng.standard_normal())
        np.testing.assert_array_equal(hard_demap(np.array([d]), c), c.labels[k])
    bpsk = build_constellation(1, "PSK")
    assert nearest_index(np.array([0.0 + 0j]), bpsk)[0] == 0
    np.testing.assert_array_equal(hard_demap(np.array([0.0 + 0j]), bpsk), bpsk.labels[0])


def test_pilots_deterministic_unit_modulus():
    cfg = FrameConfig()
    a, b = generate_pilots(cfg, 3), generate_pilots(cfg, 3)
    np.testing.assert_array_equal(a, b)
    assert a.shape == cfg.layer_shape
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    assert np.any(generate_pilots(cfg, 4) != a)


def test_sip_compose_arithmetic():
    cfg = FrameConfig(4, 3, 1, 1)
    pc = PilotConfig.sip(cfg, 0.9)
    X = compose_transmit(np.ones(cfg.layer_shape), np.ones(cfg.layer_shape), pc)
    np.testing.assert_allclose(X, np.sqrt(0.9) + np.sqrt(0.1))
    assert abs(X[0, 0, 0] - 1.2649) < 1e-4


def test_op_pilot_column():
    cfg = FrameConfig(4, 12, 1, 1)
    pc = PilotConfig.op(cfg)
    D = np.full(cfg.layer_shape, 2.0 + 0j)
    P = np.full(cfg.layer_shape, -1.0 + 0j)
    X = compose_transmit(D, P, pc)
    np.testing.assert_array_equal(X[..., 2], P[..., 2])
    np.testing.assert_array_equal(np.delete(X, 2, axis=-1), np.delete(D, 2, axis=-1))
    assert pc.data_fraction == pytest.approx(11 / 12)
    np.testing.assert_array_equal(pc.mask_d + pc.mask_p, 1.0)
    np.testing.assert_array_equal(pc.mask_d * pc.mask_p, 0.0)


def test_pilot_only_sip():
    cfg = FrameConfig(4, 3, 1, 1)
    pc = PilotConfig.sip(cfg, 0.0)
    rng = np.random.default_rng(1)
    D = rng.standard_normal(cfg.layer_shape) + 0j
    P = generate_pilots(cfg, 1)
    np.testing.assert_array_equal(compose_transmit(D, P, pc), P)


def test_pilot_config_rejects_inconsistent_masks():
    ones = np.ones((2, 2))
    with pytest.raises(ConfigurationError):
        PilotConfig("SIP", 0.5, 0.5, ones, ones)
    with pytest.raises(ConfigurationError):
        PilotConfig("OP", 1.0, 1.0, ones, ones)
    with pytest.raises(ConfigurationError):
        PilotConfig("XP", 1.0, 0.0, ones, ones)
    pc = PilotConfig.sip(FrameConfig(2, 2, 1, 1))
    with pytest.raises(ConfigurationError):
        compose_transmit(np.ones((1, 3, 3)), np.ones((1, 3, 3)), pc)


def test_noiseless_identity_channel():
    cfg = FrameConfig(4, 3, 2, 1)
    X = generate_pilots(cfg, 0)
    Y = apply_channel_and_noise(X, np.ones(cfg.channel_shape), 0.0)
    np.testing.assert_array_equal(Y, np.broadcast_to(X, cfg.rx_shape))


def test_noise_variance_from_snr():
    assert NoiseModel(0.0).variance == 1.0
    assert NoiseModel(10.0).variance == pytest.approx(0.1)
    assert NoiseModel.from_variance(0.01).snr_db == pytest.approx(20.0)
    Y = apply_channel_and_noise(np.zeros((1, 100, 100)), np.zeros((1, 1, 100, 100)), NoiseModel(0.0), 0)
    assert np.mean(np.abs(Y) ** 2) == pytest.approx(1.0, rel=0.03)


def test_zero_second_layer_matches_single_layer():
    rng = np.random.default_rng(2)
    c1 = FrameConfig(4, 3, 2, 1)
    X1 = generate_pilots(c1, 0)
    H1 = rng.standard_normal(c1.channel_shape) + 1j * rng.standard_normal(c1.channel_shape)
    X2 = np.concatenate([X1, generate_pilots(c1, 9)], axis=0)
    H2 = np.concatenate([H1, np.zeros_like(H1)], axis=1)
    np.testing.assert_allclose(apply_channel_and_noise(X2, H2, 0.0), apply_channel_and_noise(X1, H1, 0.0))


@pytest.mark.parametrize("scheme", ["SIP", "OP"])
def test_transmit_energy_is_unit(scheme):
    cfg = FrameConfig(100, 12, 1, 1)
    pc = PilotConfig.sip(cfg) if scheme == "SIP" else PilotConfig.op(cfg)
    c = build_constellation(2)
    rng = np.random.default_rng(5)
    D = modulate_bits(random_bits(rng, 2 * cfg.n_re), c, cfg.layer_shape)
    X = compose_transmit(D, generate_pilots(cfg, 6), pc)
    assert np.mean(np.abs(X) ** 2) == pytest.approx(1.0, abs=0.02)
