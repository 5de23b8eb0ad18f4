"""Numeric checks of the matrix conditions behind the support-recovery theory.

``Q = (1/(n-1)) X^T W0^2 X`` is the heterogeneity block of the rescaled
Hessian at the true parameter, with X = [X_out | X_in] and
W0^2 = diag(p_ij (1 - p_ij)). Its structure is simple: the alpha-alpha and
beta-beta blocks are diagonal (row and column sums of the weights), and the
alpha_i / beta_j entry is the single weight w_ij.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .model import EdgeCovariates, Theta, gram_adjusted, link_probabilities, softplus, linear_predictor
from .rng import make_rng
from .errors import SingularMatrixError

__all__ = [
    "ConditionReport",
    "weight_floor",
    "q_matrix",
    "check_dependency",
    "check_incoherence",
    "check_compatibility",
    "excess_risk",
    "tight_instance",
    "check_all",
]

EQ_SLACK = 1e-10


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass
class ConditionReport:
    name: str
    lhs: float
    bound: float
    satisfied: bool
    context: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_plain)

    @property
    def gap(self) -> float:
        return self.bound - self.lhs


def weight_floor(theta0: Theta, Z: EdgeCovariates) -> float:
    """rho_n = 2 min p_ij (1 - p_ij) over the instance."""
    p = link_probabilities(theta0, Z)
    return float(2.0 * np.min(p * (1.0 - p)))


def _support(support, n):
    s = np.unique(np.asarray(support, dtype=np.int64).ravel())
    if s.size and (s[0] < 0 or s[-1] >= 2 * n):
        raise ValueError("support indices must lie in [0, 2n)")
    return s


def _sizes(s, n):
    s_alpha = int(np.count_nonzero(s < n))
    return s_alpha, int(s.size - s_alpha)


def q_full(theta0: Theta, Z: EdgeCovariates) -> np.ndarray:
    """The full 2n x 2n matrix Q."""
    n = theta0.n
    _, wmat = kernels.weighted_cross(theta0.alpha, theta0.beta, theta0.mu, Z.dot(theta0.gamma))
    Q = np.zeros((2 * n, 2 * n))
    Q[:n, :n] = np.diag(wmat.sum(axis=1))
    Q[n:, n:] = np.diag(wmat.sum(axis=0))
    Q[:n, n:] = wmat
    Q[n:, :n] = wmat.T
    return Q / (n - 1)


def q_matrix(theta0: Theta, Z: EdgeCovariates, true_support):
    """Blocks (Q_SS, Q_ScS) of Q for the given support over [2n]."""
    n = theta0.n
    s = _support(true_support, n)
    Q = q_full(theta0, Z)
    rest = np.setdiff1d(np.arange(2 * n), s)
    return Q[np.ix_(s, s)], Q[np.ix_(rest, s)]


def check_dependency(theta0: Theta, Z: EdgeCovariates, support, rho_n=None) -> ConditionReport:
    """Smallest eigenvalue of Q_SS against (rho_n / 2)(1 - max(s_a, s_b) / (n - 1))."""
    n = theta0.n
    s = _support(support, n)
    rho = weight_floor(theta0, Z) if rho_n is None else float(rho_n)
    s_a, s_b = _sizes(s, n)
    ctx = {"n": n, "s_alpha": s_a, "s_beta": s_b, "rho_n": rho}
    bound = 0.5 * rho * (1.0 - max(s_a, s_b) / (n - 1))
    if s.size == 0:
        return ConditionReport("dependency", math.inf, bound, True, {**ctx, "vacuous": True})
    q_ss, _ = q_matrix(theta0, Z, s)
    lhs = float(np.linalg.eigvalsh(q_ss)[0])
    return ConditionReport("dependency", lhs, bound, lhs >= bound - EQ_SLACK, ctx)


def check_incoherence(theta0: Theta, Z: EdgeCovariates, support, rho_n=None) -> ConditionReport:
    """||Q_ScS Q_SS^{-1}||_inf against max(s_a, s_b) / (2 rho_n (n - max(s_a, s_b)))."""
    n = theta0.n
    s = _support(support, n)
    rho = weight_floor(theta0, Z) if rho_n is None else float(rho_n)
    s_a, s_b = _sizes(s, n)
    smax = max(s_a, s_b)
    ctx = {"n": n, "s_alpha": s_a, "s_beta": s_b, "rho_n": rho}
    # a zero weight floor makes the bound vacuous
    bound = 0.5 / rho * smax / (n - smax) if smax < n and rho > 0 else math.inf
    if s.size == 0:
        return ConditionReport("incoherence", 0.0, bound, True, {**ctx, "vacuous": True})
    q_ss, q_cs = q_matrix(theta0, Z, s)
    if q_cs.shape[0] == 0:
        return ConditionReport("incoherence", 0.0, bound, True, ctx)
    try:
        chol = np.linalg.cholesky(q_ss)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("Q_SS is singular; rho_n does not bound this instance") from None
    # M = Q_ScS Q_SS^{-1}, solved through the Cholesky factor
    m = np.linalg.solve(chol.T, np.linalg.solve(chol, q_cs.T)).T
    lhs = float(np.abs(m).sum(axis=1).max())
    return ConditionReport("incoherence", lhs, bound, lhs <= bound + EQ_SLACK, ctx)


def _cone_probe(rng, s_plus, rest, dim):
    theta = np.zeros(dim)
    theta[s_plus] = rng.standard_normal(s_plus.size)
    if rest.size:
        # sparse and dense off-support parts; worst cases tend to be sparse
        k = rest.size if rng.random() < 0.5 else int(rng.integers(1, min(rest.size, 4) + 1))
        idx = rng.choice(rest, size=k, replace=False)
        vals = rng.standard_normal(k)
        scale = rng.uniform(0.0, 3.5) * np.abs(theta[s_plus]).sum() / max(np.abs(vals).sum(), 1e-300)
        theta[idx] = vals * scale
    return theta


def check_compatibility(Z: EdgeCovariates, n: int, support_plus, probes: int = 1000, seed=0,
                        *, second_moment=None, c_min=None) -> ConditionReport:
    """Probe ||theta_S||_1^2 <= (2 s / c_min) theta^T Sigma theta on the l1 cone.

    ``support_plus`` indexes the full parameter vector and normally holds the
    active heterogeneity coordinates plus mu and gamma (indices >= 2n).
    Sigma is the population Gram matrix with zero covariate means. Random
    directions failing the cone condition ``||theta_Sc||_1 <= 3 ||theta_S||_1``
    are rejected. The report carries the largest ratio lhs / rhs seen;
    anything above 1 is a violation.
    """
    sigma = gram_adjusted(Z, n, "population-zero-mean", second_moment)
    dim = sigma.shape[0]
    s_plus = np.unique(np.asarray(support_plus, dtype=np.int64))
    if s_plus.size and (s_plus[0] < 0 or s_plus[-1] >= dim):
        raise ValueError("support_plus out of range")
    if c_min is None:
        if Z.p:
            mom2 = Z.second_moment() if second_moment is None else np.asarray(second_moment, float)
            c_min = float(np.linalg.eigvalsh(mom2)[0])
        else:
            c_min = 1.0
    rest = np.setdiff1d(np.arange(dim), s_plus)
    const = 2.0 * s_plus.size / c_min if c_min > 0 else math.inf
    rng = make_rng(seed)
    worst = 0.0
    violations = 0
    accepted = 0
    if s_plus.size:
        for _ in range(int(probes)):
            theta = _cone_probe(rng, s_plus, rest, dim)
            l1_s = np.abs(theta[s_plus]).sum()
            if np.abs(theta[rest]).sum() > 3.0 * l1_s:
                continue
            accepted += 1
            lhs = l1_s**2
            rhs = const * float(theta @ sigma @ theta)
            ratio = lhs / rhs if rhs > 0 else (math.inf if lhs > 0 else 0.0)
            worst = max(worst, ratio)
            violations += int(ratio > 1.0 + EQ_SLACK)
    ctx = {"n": n, "s_plus": int(s_plus.size), "c_min": c_min, "probes": accepted,
           "violations": violations}
    return ConditionReport("compatibility", worst, 1.0, violations == 0, ctx)


def excess_risk(theta: Theta, theta0: Theta, Z: EdgeCovariates) -> float:
    """(1/N) sum [softplus(eta) - p0 eta] at theta minus the same at theta0."""
    eta = linear_predictor(theta, Z)
    eta0 = linear_predictor(theta0, Z)
    p0 = 1.0 / (1.0 + np.exp(-eta0))
    risk = softplus(eta) - p0 * eta
    risk0 = softplus(eta0) - p0 * eta0
    return float(np.mean(risk - risk0))


def tight_instance(n: int = 5):
    """Uniform p = 1/2 instance with a single active sender effect."""
    return Theta.zeros(n), EdgeCovariates.empty(n), np.array([0])


def check_all(theta0: Theta, Z: EdgeCovariates, support=None, *, probes: int = 1000,
              seed=0) -> list[ConditionReport]:
    """Dependency, incoherence and compatibility checks on one instance.

    ``support`` defaults to the nonzero heterogeneity coordinates of theta0.
    """
    n = theta0.n
    if support is None:
        support = np.flatnonzero(theta0.vartheta > 0)
    s = _support(support, n)
    s_plus = np.concatenate([s, np.arange(2 * n, 2 * n + 1 + Z.p)])
    return [
        check_dependency(theta0, Z, s),
        check_incoherence(theta0, Z, s),
        check_compatibility(Z, n, s_plus, probes, seed),
    ]
