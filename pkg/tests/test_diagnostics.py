import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from instances import random_case
from oracles import dense_design
from srgm.diagnostics import (
    ConditionReport,
    check_all,
    check_compatibility,
    check_dependency,
    check_incoherence,
    excess_risk,
    q_full,
    q_matrix,
    tight_instance,
    weight_floor,
)
from srgm.errors import SingularMatrixError
from srgm.model import EdgeCovariates, Theta, linear_predictor
from srgm.rng import make_rng
from srgm.simulation import sample_covariates


# ------------------------------------------------------------ Q


@pytest.mark.parametrize("seed", range(6))
def test_q_matches_dense_oracle(seed):
    theta, Z, support = random_case(seed, max_n=6)
    n = theta.n
    D = dense_design(n, Z.values)
    prob = 1 / (1 + np.exp(-(D @ theta.to_vector())))
    X = D[:, : 2 * n]
    ref = X.T @ (X * (prob * (1 - prob))[:, None]) / (n - 1)
    assert np.max(np.abs(q_full(theta, Z) - ref)) < 1e-12
    q_ss, q_cs = q_matrix(theta, Z, support)
    rest = np.setdiff1d(np.arange(2 * n), support)
    assert np.max(np.abs(q_ss - ref[np.ix_(support, support)])) < 1e-12
    assert np.max(np.abs(q_cs - ref[np.ix_(rest, support)])) < 1e-12


def test_q_block_structure():
    theta, Z, _ = random_case(3)
    n = theta.n
    Q = q_full(theta, Z)
    assert np.array_equal(Q, Q.T)
    off = Q[:n, :n] - np.diag(np.diag(Q[:n, :n]))
    assert np.all(off == 0.0)
    assert np.all(Q[n:, n:] - np.diag(np.diag(Q[n:, n:])) == 0.0)
    assert np.all(np.diag(Q[:n, n:]) == 0.0)


def test_q_tight_value_and_empty_support():
    theta, Z, support = tight_instance(5)
    q_ss, q_cs = q_matrix(theta, Z, support)
    assert q_ss.shape == (1, 1) and q_ss[0, 0] == pytest.approx(0.25, abs=1e-15)
    assert q_cs.shape == (9, 1)
    q_ss, q_cs = q_matrix(theta, Z, [])
    assert q_ss.shape == (0, 0) and q_cs.shape == (10, 0)


def test_support_validation():
    theta, Z, _ = tight_instance(5)
    with pytest.raises(ValueError):
        q_matrix(theta, Z, [10])


# ------------------------------------------------------------ lemma checks


def test_tight_instance_values():
    theta, Z, support = tight_instance(5)
    assert weight_floor(theta, Z) == 0.5
    dep = check_dependency(theta, Z, support)
    assert dep.lhs == pytest.approx(0.25, abs=1e-15)
    # the stated bound is (rho / 2)(1 - max(s_a, s_b) / (n - 1)) = 0.25 * 3/4
    assert dep.bound == pytest.approx(0.1875, abs=1e-15)
    assert dep.satisfied
    inc = check_incoherence(theta, Z, support)
    assert inc.lhs == pytest.approx(0.25, abs=1e-12)
    assert inc.bound == pytest.approx(0.25, abs=1e-15)
    assert abs(inc.lhs - inc.bound) <= 1e-10
    assert inc.satisfied


def test_empty_support_is_vacuous():
    theta, Z, _ = random_case(1)
    assert check_dependency(theta, Z, []).satisfied
    rep = check_incoherence(theta, Z, [])
    assert rep.satisfied and rep.context["vacuous"]


def test_full_support_incoherence_trivial():
    n = 4
    theta = Theta(np.ones(n), np.ones(n), -1.0)
    rep = check_incoherence(theta, EdgeCovariates.empty(n), np.arange(2 * n))
    assert rep.lhs == 0.0 and rep.satisfied


def test_incoherence_singular_block_raises():
    # weights underflow to exactly zero, so Q vanishes
    n = 4
    theta = Theta(np.zeros(n), np.zeros(n), -800.0)
    with pytest.raises(SingularMatrixError):
        check_incoherence(theta, EdgeCovariates.empty(n), [0, n])


@given(st.integers(0, 10**6))
def test_lemmas_hold_on_random_instances(seed):
    theta, Z, support = random_case(seed)
    dep = check_dependency(theta, Z, support)
    inc = check_incoherence(theta, Z, support)
    assert dep.satisfied, dep
    assert inc.satisfied, inc


def test_satisfied_follows_inequality_direction():
    theta, Z, support = random_case(11)
    dep = check_dependency(theta, Z, support)
    assert dep.satisfied == (dep.lhs >= dep.bound - 1e-10)
    loose = check_dependency(theta, Z, support, rho_n=1e6)
    assert not loose.satisfied
    inc = check_incoherence(theta, Z, support, rho_n=1e6)
    assert inc.satisfied == (inc.lhs <= inc.bound + 1e-10)


def test_report_json():
    theta, Z, support = tight_instance(5)
    doc = json.loads(check_dependency(theta, Z, support).to_json())
    assert doc["name"] == "dependency"
    assert set(doc["context"]) >= {"n", "s_alpha", "s_beta", "rho_n"}
    assert ConditionReport("x", 1.0, 2.0, True).gap == 1.0


# ------------------------------------------------------------ compatibility


def test_compatibility_probe_sweep():
    n = 50
    rng = make_rng(0)
    Z = sample_covariates(n, 1, rng)
    s_plus = np.array([0, n, 2 * n, 2 * n + 1])
    rep = check_compatibility(Z, n, s_plus, probes=10_000, seed=1)
    print(f"compatibility n=50: {rep.context['violations']} violations, worst ratio {rep.lhs:.3f}")
    assert rep.context["probes"] > 0
    assert rep.satisfied == (rep.context["violations"] == 0)


def test_compatibility_on_support_only_directions():
    n = 20
    Z = sample_covariates(n, 1, make_rng(2))
    s_plus = np.arange(2 * n + 2)  # no off-support coordinates
    rep = check_compatibility(Z, n, s_plus, probes=500, seed=0)
    assert rep.satisfied


def test_compatibility_empty_support():
    n = 10
    rep = check_compatibility(EdgeCovariates.empty(n), n, [], probes=10)
    assert rep.lhs == 0.0 and rep.satisfied


# ------------------------------------------------------------ excess risk


def test_excess_risk_zero_at_truth():
    theta, Z, _ = random_case(5)
    assert excess_risk(theta, theta, Z) == 0.0


@given(st.integers(0, 10**6))
def test_excess_risk_nonnegative(seed):
    theta0, Z, _ = random_case(seed)
    other, _, _ = random_case(seed + 1)
    rng = np.random.default_rng(seed)
    vec = theta0.to_vector() + rng.normal(0, 0.5, theta0.dim)
    vec[: 2 * theta0.n] = np.abs(vec[: 2 * theta0.n])
    theta = Theta.from_vector(vec, theta0.n)
    assert excess_risk(theta, theta0, Z) >= -1e-15


def test_excess_risk_zero_implies_same_predictor():
    n = 8
    Z = sample_covariates(n, 1, make_rng(3))
    theta0 = Theta(np.full(n, 1.0), np.full(n, 1.0), -2.0, [0.5])
    # shifting all alpha up and all beta down leaves every predictor unchanged
    shifted = Theta(np.full(n, 1.3), np.full(n, 0.7), -2.0, [0.5])
    nudged = Theta(np.full(n, 1.0), np.full(n, 1.0), -1.9, [0.5])
    for theta in (shifted, nudged):
        risk = excess_risk(theta, theta0, Z)
        if risk <= 1e-12:
            assert np.max(np.abs(linear_predictor(theta, Z) - linear_predictor(theta0, Z))) < 1e-6
    assert excess_risk(shifted, theta0, Z) <= 1e-12
    assert excess_risk(nudged, theta0, Z) > 1e-6


def test_check_all_default_support():
    theta, Z, support = random_case(2)
    reps = check_all(theta, Z, probes=50)
    assert [r.name for r in reps] == ["dependency", "incoherence", "compatibility"]
    assert reps[0].context["s_alpha"] + reps[0].context["s_beta"] == len(support)
