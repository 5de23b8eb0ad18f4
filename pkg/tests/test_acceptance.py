"""The nine acceptance criteria, one test each.

Every test prints a single ``criterion k: PASS|FAIL`` line (also collected
into the terminal summary) before asserting, so a run shows the verdict of
each criterion with the measured numbers next to it. The simulation-backed
criteria share the session-wide ``studies`` cache with the slow module tests.
"""
import math

import numpy as np
import pytest

from instances import SEPARABLE_SEEDS, planted_instance, random_case, random_instance, tiny_instance
from oracles import adjacency_vector, dense_design, penalized_oracle
from srgm.bias import bias_curve, er_bias_experiment, eta_lambda, sbm_bias_experiment
from srgm.diagnostics import check_dependency, check_incoherence, tight_instance
from srgm.model import Theta, nll, nll_grad
from srgm.simulation import aggregate
from srgm.solver import FitConfig, fit, fit_rescaled

pytestmark = pytest.mark.acceptance


def verdict(request, k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    request.node.user_properties.append(("criterion", line))
    assert ok, line


def ok_records(studies, n, rule, M=100):
    # the n=150 BIC run is shared with the 200-replication coverage test;
    # replications are seeded by index, so its first M are an M-rep study
    fetch = 200 if (n, rule) == (150, "bic") else M
    return [r for r in studies.records(n, rule, fetch) if r["rep"] < M]


def test_criterion_1_fixed_point_and_bias_curve(request):
    lams = [1.3, 1.5, 2, 3, 4, 6, 7]
    resid = max(abs(math.exp(lam * (eta_lambda(lam) - 1.0)) - eta_lambda(lam)) for lam in lams)
    curve = np.array([row[2] for row in bias_curve(np.linspace(1.05, 10.0, 400))])
    decreasing = bool(np.all(np.diff(curve) < 0))
    eta2 = eta_lambda(2.0)
    b2 = (1 + eta2) / (1 - eta2)
    ok = resid < 1e-10 and decreasing and abs(b2 - 1.5100) <= 1e-3 and abs(b2 - 1.5102) <= 5e-3
    verdict(request, 1, ok, f"max residual {resid:.1e}, strictly decreasing {decreasing}, bias(2) {b2:.5f}")


def test_criterion_2_er_monte_carlo_bias(request):
    res = er_bias_experiment(10_000, 2.0, reps=200, seed=0)
    ok = abs(res.empirical_ratio_mean - 1.5100) <= 0.02
    verdict(request, 2, ok, f"mean ratio {res.empirical_ratio_mean:.4f} over {res.reps - res.skipped} reps")


def test_criterion_3_sbm_table(request):
    targets = {2.0: (0.7968, 1.5102), 3.0: (0.9405, 1.1265)}
    ok = True
    parts = []
    for a, (giant, rho) in targets.items():
        res = sbm_bias_experiment(10_000, a, a, reps=200, seed=0)
        ok &= abs(res.giant_frac_mean - giant) <= 0.005 and abs(res.rho_mean - rho) <= 0.01
        parts.append(f"a=b={a:g}: giant {res.giant_frac_mean:.4f}, rho {res.rho_mean:.4f}")
    verdict(request, 3, ok, "; ".join(parts))


def test_criterion_4_generator_fidelity(request, studies):
    recs = ok_records(studies, 150, "bic")
    reps = sorted({r["rep"] for r in recs})
    dens = np.median([r["density"] for r in recs])
    pmin = np.median([r["min_p"] for r in recs])
    pmax = np.median([r["max_p"] for r in recs])
    ok = len(reps) == 100 and abs(dens - 0.140) <= 0.01 and abs(pmin - 0.059) <= 0.01 and abs(pmax - 0.888) <= 0.02
    verdict(request, 4, ok, f"median density {dens:.4f}, min p {pmin:.4f}, max p {pmax:.4f}")


def test_criterion_5_coverage(request, studies):
    recs = ok_records(studies, 150, "bic")
    report = aggregate(recs, studies.config([150], "bic", 100))
    rows = {r["coef"]: r for r in report.coverage}
    cov = [rows[name]["coverage"] for name in ("gamma1", "gamma2")]
    length = rows["gamma1"]["median_ci_length"]
    ok = all(0.90 <= c <= 0.99 for c in cov) and abs(length / 0.342 - 1.0) <= 0.15
    verdict(request, 5, ok, f"coverage gamma1 {cov[0]:.2f}, gamma2 {cov[1]:.2f} over "
            f"{rows['gamma1']['reps']} reps, median CI length gamma1 {length:.4f}")


def central_difference(f, x, h=1e-5):
    out = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def test_criterion_6_solver_correctness(request):
    # oracle equivalence; draws without a minimizer are redrawn
    worst_obj, worst_kkt = 0.0, 0.0
    for seed in range(50):
        g, Z, adj, lam = tiny_instance(seed, require_minimizer=True)
        res = fit(g, Z, FitConfig(lam=lam))
        _, ref = penalized_oracle(dense_design(g.n, Z.values), adjacency_vector(adj), lam, g.n)
        worst_obj = max(worst_obj, abs(res.objective - ref))
        if res.converged:
            worst_kkt = max(worst_kkt, res.kkt_residual)
    worst_grad = 0.0
    for seed in range(20):
        theta, g, Z, _ = random_instance(seed)
        x0 = theta.to_vector()
        x0[: 2 * theta.n] += 0.1
        num = central_difference(lambda x: nll(Theta.from_vector(x, theta.n), g, Z), x0)
        ana = nll_grad(Theta.from_vector(x0, theta.n), g, Z)
        worst_grad = max(worst_grad, float(np.max(np.abs(num - ana) / np.maximum(1.0, np.abs(ana)))))
    worst_route, same_support = 0.0, True
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        g, Z, _ = planted_instance(seed, n=int(rng.integers(6, 16)), p=int(rng.integers(0, 3)))
        lam = float(rng.uniform(0.005, 0.05))
        r1 = fit(g, Z, FitConfig(lam=lam))
        r2 = fit_rescaled(g, Z, math.sqrt(g.n) * lam, FitConfig())
        worst_route = max(worst_route, abs(r1.objective - r2.objective))
        same_support &= bool(np.array_equal(r1.support, r2.support))
    ok = worst_obj < 1e-4 and worst_kkt <= 1e-6 and worst_grad < 1e-6 and worst_route < 1e-8 and same_support
    verdict(request, 6, ok, f"oracle gap {worst_obj:.1e}, kkt {worst_kkt:.1e}, grad rel err {worst_grad:.1e}, "
            f"route gap {worst_route:.1e}, supports identical {same_support}; "
            f"separable seeds {SEPARABLE_SEEDS} redrawn")


def test_criterion_7_lemma_suite(request):
    violations = 0
    for seed in range(1000):
        theta, Z, support = random_case(seed)
        violations += not check_dependency(theta, Z, support).satisfied
        violations += not check_incoherence(theta, Z, support).satisfied
    theta, Z, support = tight_instance()
    dep = check_dependency(theta, Z, support)
    inc = check_incoherence(theta, Z, support)
    dep_eq = abs(dep.lhs - dep.bound) <= 1e-10
    inc_eq = abs(inc.lhs - inc.bound) <= 1e-10
    ok = violations == 0 and dep_eq and inc_eq
    verdict(request, 7, ok, f"{violations} violations in 1000 instances; tight instance dependency "
            f"{dep.lhs:.4f} vs {dep.bound:.4f}, incoherence {inc.lhs:.4f} vs {inc.bound:.4f}")


def test_criterion_8_selection_trend(request, studies):
    rate, no_fp = {}, {}
    for n in (150, 300):
        recs = [r for r in ok_records(studies, n, "heuristic") if r["status"] == "ok"]
        rate[n] = float(np.mean([r["exact_support"] for r in recs]))
        no_fp[n] = float(np.mean([r["false_pos"] == 0 for r in recs]))
    sd = math.sqrt(rate[150] * (1 - rate[150]) / 100)
    ok = rate[300] >= rate[150] - 2 * sd and no_fp[300] >= 0.90
    verdict(request, 8, ok, f"heuristic exact recovery n=150 {rate[150]:.2f}, n=300 {rate[300]:.2f}; "
            f"no false positives at n=300 in {no_fp[300]:.2f} of reps")


def test_criterion_9_consistency_trend(request, studies):
    ok = True
    parts = []
    for rule in ("bic", "heuristic"):
        err = {}
        for n in (150, 300):
            recs = [r for r in ok_records(studies, n, rule) if r["status"] == "ok"]
            err[n] = (np.mean([r["gamma_l1_err"] for r in recs]), np.mean([r["mae_vartheta"] for r in recs]))
        ok &= err[300][0] < err[150][0] and err[300][1] < err[150][1]
        parts.append(f"{rule}: gamma l1 {err[150][0]:.4f} -> {err[300][0]:.4f}, "
                     f"MAE {err[150][1]:.4f} -> {err[300][1]:.4f}")
    verdict(request, 9, ok, "; ".join(parts))
