import json
import math

import numpy as np
import pytest

from srgm.model import link_probabilities
from srgm.rng import make_rng
from srgm.simulation import (
    DEFAULT_S0,
    SimStudyConfig,
    aggregate,
    default_s0,
    run_replication,
    run_study,
    sample_covariates,
    true_theta,
)


def test_s0_schedule():
    assert [DEFAULT_S0[n] for n in (150, 300, 800)] == [6, 8, 14]
    assert sorted(DEFAULT_S0) == list(range(150, 801, 50))
    assert default_s0(150) == 6
    assert default_s0(1000) % 2 == 0 and default_s0(1000) >= 6
    assert SimStudyConfig(s0={300: 10}).s0_for(300) == 10


@pytest.mark.parametrize("s0", [6, 8, 10, 14])
def test_template_sparsity_and_overlap(s0):
    n = 150
    th = true_theta(n, s0)
    a_on = set(np.flatnonzero(th.alpha).tolist())
    b_on = set(np.flatnonzero(th.beta).tolist())
    assert len(a_on) == len(b_on) == s0 // 2
    assert len(a_on & b_on) == 2
    assert th.alpha[:3].tolist() == [2.0, 1.5, 1.0]
    assert np.all(th.alpha[3 : s0 // 2] == 0.8)
    assert sorted(th.beta[th.beta > 0].tolist(), reverse=True) == sorted(th.alpha[th.alpha > 0].tolist(), reverse=True)
    assert th.mu == pytest.approx(-1.2 * math.log(math.log(n)))
    assert th.gamma.tolist() == [1.0, 0.8]


def test_template_rejects_odd_or_small():
    with pytest.raises(ValueError):
        true_theta(150, 7)
    with pytest.raises(ValueError):
        true_theta(150, 4)
    with pytest.raises(ValueError):
        true_theta(6, 14)


def test_covariates_centred_beta():
    Z = sample_covariates(200, 2, make_rng(0))
    assert Z.c_bound <= 0.5
    assert np.all(np.abs(Z.means) < 0.01)
    # Beta(2, 2) has variance 1/20
    assert np.allclose(Z.values.var(axis=0), 0.05, atol=0.003)


def test_probability_range_at_150():
    n = 150
    p = link_probabilities(true_theta(n, 6), sample_covariates(n, 2, make_rng(0)))
    assert 0.04 < p.min() < 0.08
    assert 0.85 < p.max() < 0.93


def test_config_text_and_overrides():
    text = """
[study]
n_grid = 150, 300
M = 20
seed = 7
tuning = heuristic
s0 = 150:6, 300:8
gamma = 1.0, 0.8
strict_factor_8 = yes
mu = default
"""
    cfg = SimStudyConfig.from_text(text, M=5)
    assert cfg.n_grid == [150, 300] and cfg.M == 5 and cfg.seed == 7
    assert cfg.tuning == ["heuristic"] and cfg.s0 == {150: 6, 300: 8}
    assert cfg.strict_factor_8 is True and cfg.mu is None
    with pytest.raises(ValueError):
        SimStudyConfig.from_text("[study]\nbogus = 1\n")
    with pytest.raises(ValueError):
        SimStudyConfig(tuning=["cv"])


def test_digest_ignores_threads_only():
    a = SimStudyConfig()
    assert a.digest() == SimStudyConfig(threads=4).digest()
    assert a.digest() != SimStudyConfig(seed=1).digest()
    full = SimStudyConfig.full()
    assert full.n_grid[0] == 150 and full.n_grid[-1] == 800 and full.M == 500


def test_replication_records():
    cfg = SimStudyConfig(n_grid=[60], M=1, tuning=["bic", "heuristic"], s0={60: 6})
    recs = run_replication(0, 60, cfg)
    assert [r["tuning"] for r in recs] == ["bic", "heuristic"]
    for r in recs:
        assert r["status"] == "ok"
        assert len(r["covered"]) == 3 and len(r["ci_length"]) == 3
        assert r["fit"]["schema"] == "srgm-fit/1"
        assert set(r["fit"]["inference"]) >= {"level", "se", "ci", "sigma_xi", "theta_xi"}
        assert r["excess_risk"] >= -1e-15
        json.dumps(r)
    assert recs[0]["density"] == recs[1]["density"]


def test_replication_failure_is_recorded():
    cfg = SimStudyConfig(n_grid=[60], M=1, tuning=["bic"], s0={60: 6}, tol_kkt=1e-300)
    recs = run_replication(0, 60, cfg)
    assert recs[0]["status"] == "failed" and "reason" in recs[0]
    report = aggregate(recs, cfg)
    assert report.metrics[0]["excluded"] == 1 and report.metrics[0]["reps"] == 0


def test_study_deterministic_and_thread_independent():
    cfg = SimStudyConfig(n_grid=[50], M=3, tuning=["heuristic"], s0={50: 6})
    a = run_study(cfg)
    b = run_study(SimStudyConfig(n_grid=[50], M=3, tuning=["heuristic"], s0={50: 6}, threads=2))
    strip = lambda recs: json.dumps(recs, sort_keys=True)
    assert strip(a) == strip(b)
    assert [r["rep"] for r in a] == [0, 1, 2]


def test_aggregate_fields_are_probabilities():
    cfg = SimStudyConfig(n_grid=[50], M=4, tuning=["bic", "heuristic"], s0={50: 6})
    report = aggregate(run_study(cfg), cfg)
    for row in report.coverage:
        assert 0.0 <= row["coverage"] <= 1.0
    for row in report.selection:
        assert 0.0 <= row["p_exact"] <= 1.0 and 0.0 <= row["p_no_false_pos"] <= 1.0
        assert row["reps"] + row["excluded"] == 4
    assert report.density[0]["reps"] == 4
    assert {r["coef"] for r in report.coverage} == {"mu", "gamma1", "gamma2"}


@pytest.mark.slow
def test_excess_risk_decreases_with_n(studies):
    means = {}
    for n in (150, 300):
        ok = [r for r in studies.records(n, "bic", 100) if r["status"] == "ok"]
        means[n] = float(np.mean([r["excess_risk"] for r in ok]))
    print(f"mean excess risk under BIC: n=150 {means[150]:.3e}, n=300 {means[300]:.3e}")
    assert means[300] < means[150]


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason=(
    "the heuristic penalty exceeds lambda_max at n <= 300, so heuristic fits have an "
    "empty support and never recover the true one (see README, known deviations)"))
def test_heuristic_recovers_support_at_least_as_often_as_bic(studies):
    rates = {}
    for rule in ("bic", "heuristic"):
        ok = [r for r in studies.records(300, rule, 100) if r["status"] == "ok"]
        rates[rule] = float(np.mean([r["exact_support"] for r in ok]))
    sd = math.sqrt(max(rates["bic"] * (1 - rates["bic"]), 1e-12) / 100)
    print(f"exact recovery at n=300: BIC {rates['bic']:.2f}, heuristic {rates['heuristic']:.2f}")
    assert rates["heuristic"] >= rates["bic"] - 2 * sd
