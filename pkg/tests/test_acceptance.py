"""Acceptance suite at full sample sizes.

Every test prints one ``[PASS]`` or ``[FAIL]`` line with the measured value
and the tolerance; run with ``pytest tests/test_acceptance.py -s`` to see
them. The whole module takes roughly 12 minutes on one core.
"""

import time

import pytest

from cfmrx import validation as v

pytestmark = pytest.mark.slow

S = v.FULL


def _report(fn, *args, budget=None, elapsed=None):
    """Run a check, print its line and fail on a miss or an exceeded runtime budget (seconds).

    ``elapsed`` replaces the measured wall time when the expensive part ran in a fixture.
    """
    t0 = time.perf_counter()
    chk = fn(*args)
    if elapsed is None:
        elapsed = time.perf_counter() - t0
    line = chk.line()
    if budget is not None:
        within = elapsed <= budget
        line += f"; wall time {elapsed:.1f} s (budget {budget:g} s{'' if within else ', EXCEEDED'})"
        if not within:
            line = line.replace("[PASS]", "[FAIL]", 1)
        chk.passed = chk.passed and within
    print("\n" + line, flush=True)
    assert chk.passed, line


@pytest.fixture(scope="module")
def analytic_run():
    return v.run_sip_sweep(S.sweep_frames)


@pytest.fixture(scope="module")
def trained_net():
    return v.train_desk_prior(S.train_epochs)


def test_01_score_correctness():
    _report(v.check_scores, S.score_probes, budget=10)


def test_02_gaussian_posterior_oracle():
    _report(v.check_gaussian_posterior, S.posterior_seeds, S.posterior_frames, S.posterior_snr_db, budget=300)


def test_03_unconditional_flow_fidelity():
    _report(v.check_flow_covariance, S.flow_samples, S.flow_steps, budget=300)


def test_04_tweedie_denoiser():
    _report(v.check_tweedie)


def test_05_end_to_end_operating_point(analytic_run):
    _report(v.check_end_to_end, analytic_run, budget=1800, elapsed=analytic_run.seconds)


def test_06_ablation_ordering(analytic_run):
    _report(v.check_ablation, analytic_run)


def test_07_convergence_plateau():
    _report(v.check_convergence, S.convergence_frames)


def test_08_baseline_sanity():
    _report(v.check_baselines, S.baseline_frames)


def test_09_throughput_arithmetic():
    _report(v.check_throughput)


def test_10_trained_prior_parity(analytic_run, trained_net):
    net, seconds = trained_net
    # the training budget is enforced inside the check
    _report(v.check_net_parity, net, seconds, analytic_run, v.run_sip_sweep(S.sweep_frames, vf=net))


def test_11_determinism():
    _report(v.check_determinism, S.determinism_frames)
