import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfmrx.errors import ConfigurationError, MissingArtifactError
from cfmrx.harness import (CSV_COLUMNS, ExperimentConfig, FrameMetrics, MetricRecord, ThroughputParams, ber,
                           build_context, confidence_interval, dump_config, frame_streams, load_channel_prior,
                           load_config, make_frames, nmse, pilot_config, ratio_interval, read_records_csv,
                           records_to_csv, run_node, run_sweep, summarize, throughput, write_results)
from cfmrx.model import FrameConfig, build_constellation


def _small_cfg(tmp_path, **sweep):
    sw = dict(snr_db=(0.0, 10.0), frames=4, batch=3, receivers=("CFM-Rx", "CFM-TEQ", "LS", "LMMSE-O"),
              n_resamples=200)
    sw.update(sweep)
    cfg = ExperimentConfig(frame=FrameConfig(8, 4, 2, 1), base_dir=tmp_path)
    return replace(cfg, prior=replace(cfg.prior, backend="analytic"),
                   sampler=replace(cfg.sampler, steps=6, corrector_steps=2),
                   sweep=replace(cfg.sweep, **sw))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def test_nmse_examples():
    rng = np.random.default_rng(0)
    H = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    assert nmse(H, H) == -100.0
    assert nmse(np.zeros_like(H), H) == pytest.approx(0.0)
    e = rng.standard_normal(H.shape)
    e *= math.sqrt(0.1 * np.sum(np.abs(H) ** 2) / np.sum(e ** 2))
    assert nmse(H + e, H) == pytest.approx(-10.0)
    with pytest.raises(ValueError):
        nmse(H, np.zeros_like(H))
    with pytest.raises(ValueError):
        nmse(H[:2], H)


def test_nmse_pools_frames_before_log():
    H = np.stack([np.ones(4), 10 * np.ones(4)])
    H_hat = H + np.stack([np.ones(4), np.zeros(4)])
    assert nmse(H_hat, H) == pytest.approx(10 * math.log10(4 / 404))


def test_ber_examples():
    b = np.random.default_rng(1).integers(0, 2, 1000)
    assert ber(b, b) == 0.0
    assert ber(1 - b, b) == 1.0
    flip = b.copy()
    flip[17] ^= 1
    assert ber(flip, b) == pytest.approx(0.001)
    with pytest.raises(ValueError):
        ber(b[:-1], b)


def test_throughput_examples():
    tp = ThroughputParams(1000, 576, 1.0, 1.0, 2)
    assert throughput(tp, 0.0) == pytest.approx(1.152e6)
    assert throughput(tp, 1.0) == 0.0
    op = replace(tp, omega=11 / 12)
    assert throughput(tp, 0.0) / throughput(op, 0.0) == pytest.approx(12 / 11)
    for bad in (dict(omega=0.0), dict(omega=1.5), dict(code_rate=0.0), dict(n_slot=0)):
        with pytest.raises(ConfigurationError):
            replace(tp, **bad)


def test_confidence_interval_examples():
    lo, hi = confidence_interval(np.full(50, 3.0))
    assert lo == hi == 3.0
    x = np.random.default_rng(2).standard_normal(2000)
    lo, hi = confidence_interval(x, 0.9)
    m = x.mean()
    assert lo < m < hi
    assert (m - lo) == pytest.approx(hi - m, rel=0.2)
    assert (hi - lo) == pytest.approx(2 * 1.645 / math.sqrt(2000), rel=0.15)
    assert confidence_interval(x, seed=5) == confidence_interval(x, seed=5)
    with pytest.raises(ValueError):
        confidence_interval(x, 1.0)
    with pytest.raises(ValueError):
        confidence_interval(np.ones(9))


def test_ratio_interval_contains_ratio():
    rng = np.random.default_rng(3)
    den = rng.uniform(1, 2, 100)
    num = 0.5 * den * rng.uniform(0.8, 1.2, 100)
    lo, hi = ratio_interval(num, den, 0.95)
    assert lo < num.sum() / den.sum() < hi
    with pytest.raises(ValueError):
        ratio_interval(num, den[:-1])


def test_metric_record_invariants():
    args = dict(scheme="SIP", receiver="LS", snr_db=0.0, nmse_db=-3.0, nmse_ci_lo=-4.0, nmse_ci_hi=-2.0, ber=0.1,
                ber_ci_lo=0.05, ber_ci_hi=0.2, ser=0.2, throughput_bps=1.0, frames=10, seed=0)
    MetricRecord(**args)
    with pytest.raises(ValueError):
        MetricRecord(**{**args, "ber": 1.5, "ber_ci_hi": 2.0})
    with pytest.raises(ValueError):
        MetricRecord(**{**args, "nmse_ci_lo": -2.5, "nmse_ci_hi": -3.5})


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=30), st.integers(0, 10))
def test_summarize_interval_brackets_point(errors, seed):
    n = len(errors)
    fm = FrameMetrics(np.linspace(0.1, 1, n), np.ones(n), np.array(errors), 100, np.array(errors), 50)
    rec = summarize("SIP", "LS", 5.0, fm, ThroughputParams(), seed)
    assert rec.nmse_ci_lo <= rec.nmse_db <= rec.nmse_ci_hi
    assert rec.ber_ci_lo <= rec.ber <= rec.ber_ci_hi
    assert rec.ber == pytest.approx(sum(errors) / (100 * n))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def test_default_config_settings():
    cfg = ExperimentConfig()
    assert cfg.sweep.snr_db == (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    assert cfg.sweep.frames == 200
    assert cfg.pilot.data_power == 0.9
    assert (cfg.frame.n_subcarriers, cfg.frame.n_symbols) == (48, 12)


def test_config_round_trip(tmp_path):
    cfg = _small_cfg(tmp_path)
    path = tmp_path / "cfg.json"
    path.write_text(dump_config(cfg))
    back = load_config(path)
    assert back == cfg
    assert back.base_dir == tmp_path.resolve()


def test_config_rejects_unknown_keys(tmp_path):
    d = ExperimentConfig().to_dict()
    d["sweep"]["frams"] = 3
    with pytest.raises(ConfigurationError, match="frams"):
        ExperimentConfig.from_dict(d)
    d = ExperimentConfig().to_dict()
    d["extra"] = {}
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(d)
    d = ExperimentConfig().to_dict()
    d["sweep"]["receivers"] = ["LS", "ML"]
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(d)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(bad)
    with pytest.raises(MissingArtifactError):
        load_config(tmp_path / "absent.json")


def test_missing_artifacts_name_the_command(tmp_path):
    cfg = ExperimentConfig(base_dir=tmp_path)
    with pytest.raises(MissingArtifactError, match="train-prior"):
        load_channel_prior(cfg)
    with pytest.raises(MissingArtifactError, match="gen-channels"):
        build_context(cfg, ("LMMSE-P",))


# ---------------------------------------------------------------------------
# Frames and sweeps
# ---------------------------------------------------------------------------


def test_frame_streams_independent_of_batch(tmp_path):
    cfg = _small_cfg(tmp_path)
    pc = pilot_config(cfg, "SIP")
    ctx = build_context(cfg, ("LS",))
    c = build_constellation(2)
    whole = make_frames(cfg, pc, ctx.P, c, 5.0, 1, range(4), 9)
    one = make_frames(cfg, pc, ctx.P, c, 5.0, 1, [2], 9)
    np.testing.assert_array_equal(whole.Y[2], one.Y[0])
    np.testing.assert_array_equal(whole.init.H[2], one.init.H[0])
    a = [g.random() for g in frame_streams(0, 0, 0)]
    assert len(set(a)) == 4


def test_node_metrics_independent_of_batch_size(tmp_path):
    cfg = _small_cfg(tmp_path)
    ctx = build_context(cfg, cfg.sweep.receivers)
    a = run_node(ctx, "SIP", 5.0, 0, cfg.sweep.receivers)
    ctx1 = replace(ctx, cfg=replace(cfg, sweep=replace(cfg.sweep, batch=1)))
    b = run_node(ctx1, "SIP", 5.0, 0, cfg.sweep.receivers)
    for r in cfg.sweep.receivers:
        np.testing.assert_allclose(a[r].err_energy, b[r].err_energy, rtol=1e-10)
        np.testing.assert_array_equal(a[r].bit_errors, b[r].bit_errors)


def test_op_metrics_count_data_res_only(tmp_path):
    cfg = _small_cfg(tmp_path, receivers=("LS",))
    ctx = build_context(cfg, ("LS",))
    fm = run_node(ctx, "OP", 10.0, 0, ("LS",), frames=2)["LS"]
    assert fm.n_bits == 8 * 3 * 2
    assert fm.n_syms == 8 * 3


def test_sweep_csv_schema_and_determinism(tmp_path):
    cfg = _small_cfg(tmp_path)
    recs = run_sweep(cfg)
    assert len(recs) == 2 * 2 * 4
    text = records_to_csv(recs)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert records_to_csv(run_sweep(cfg)) == text
    paths = write_results(recs, tmp_path / "out", cfg)
    rows = read_records_csv(paths["csv"])
    assert len(rows) == len(recs)
    assert {r["scheme"] for r in rows} == {"SIP", "OP"}
    assert json.loads(paths["config"].read_text())["sweep"]["frames"] == 4
    assert paths["plot"].read_text().startswith("figure,series")
    for r in recs:
        assert r.frames == 4 and 0.0 <= r.ber <= 1.0
    sip = {r.receiver: r for r in recs if r.scheme == "SIP" and r.snr_db == 10.0}
    op = {r.receiver: r for r in recs if r.scheme == "OP" and r.snr_db == 10.0}
    assert sip["LS"].nmse_db > sip["LMMSE-O"].nmse_db
    assert op["LS"].throughput_bps == pytest.approx(1000 * 32 * 0.75 * 2 * (1 - op["LS"].ber))
