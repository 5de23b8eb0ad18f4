"""Wald intervals for the global parameters xi = (mu, gamma).

The intervals are centred at the penalized estimate itself; no debiasing step
is applied. With weights w_ij = p_ij (1 - p_ij) at the fit,

    Sigma_xi = (1/N) D_xi^T W^2 D_xi,     D_xi = [1 | Z],
    Theta_xi = Sigma_xi^{-1},
    se_k     = sqrt(Theta_xi[k, k] / N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy.linalg import lapack

from .errors import NotConvergedError, SingularMatrixError
from .graph import DirectedGraph
from .model import EdgeCovariates, Theta, link_probabilities
from .solver import FitConfig, FitResult, fit as _fit

__all__ = [
    "InferenceReport",
    "sigma_xi",
    "invert_sigma_xi",
    "wald_ci",
    "critical_value",
    "MAX_CONDITION",
]

MAX_CONDITION = 1e12


@dataclass
class InferenceReport:
    """Standard errors and intervals; index 0 is mu, 1..p are gamma."""

    estimate: np.ndarray
    sigma_xi_hat: np.ndarray
    theta_xi_hat: np.ndarray
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    level: float
    refit: bool = False

    @property
    def ci_length(self) -> np.ndarray:
        return self.ci_upper - self.ci_lower

    def covers(self, xi0) -> np.ndarray:
        xi0 = np.asarray(xi0, dtype=float)
        return (self.ci_lower <= xi0) & (xi0 <= self.ci_upper)

    def inverse_residual(self) -> float:
        k = self.sigma_xi_hat.shape[0]
        return float(np.abs(self.sigma_xi_hat @ self.theta_xi_hat - np.eye(k)).max())

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "se": self.se.tolist(),
            "ci": np.column_stack([self.ci_lower, self.ci_upper]).tolist(),
            "sigma_xi": self.sigma_xi_hat.tolist(),
            "theta_xi": self.theta_xi_hat.tolist(),
            "refit": self.refit,
        }


def critical_value(level: float) -> float:
    """Two-sided standard normal quantile z_{(1+level)/2}."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    return NormalDist().inv_cdf((1.0 + level) / 2.0)


def _sigma_from_theta(theta: Theta, Z: EdgeCovariates) -> np.ndarray:
    prob = link_probabilities(theta, Z)
    w = prob * (1.0 - prob)
    N = w.shape[0]
    k = Z.p + 1
    out = np.empty((k, k))
    out[0, 0] = w.sum() / N
    if Z.p:
        wz = Z.values.T @ w / N
        out[0, 1:] = out[1:, 0] = wz
        block = (Z.values.T * w) @ Z.values / N
        out[1:, 1:] = 0.5 * (block + block.T)  # exact symmetry
    return out


def sigma_xi(fit: FitResult, g: DirectedGraph, Z: EdgeCovariates) -> np.ndarray:
    """Weighted Gram matrix of the global block at the fitted parameters."""
    if g.n != Z.n:
        raise ValueError("graph and covariates disagree on n")
    return _sigma_from_theta(fit.theta_hat, Z)


def invert_sigma_xi(sigma) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky.

    Raises
    ------
    SingularMatrixError
        When a Cholesky pivot is not positive or the condition number is
        above ``MAX_CONDITION``. The ``pivot`` attribute gives the offending
        index (0 is mu).
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape[0] != sigma.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(sigma, sigma.T, rtol=1e-12, atol=1e-14):
        raise ValueError("matrix must be symmetric")
    chol, info = lapack.dpotrf(sigma, lower=1, clean=1)
    if info > 0:
        raise SingularMatrixError(
            f"non-positive pivot at index {info - 1}: covariates degenerate or graph empty/full",
            pivot=info - 1,
        )
    if info < 0:
        raise ValueError(f"invalid argument {-info} to the Cholesky routine")
    cond = np.linalg.cond(sigma)
    if not cond <= MAX_CONDITION:
        # the pivot that lost the most relative mass marks the near-dependent column
        rel = np.diag(chol) ** 2 / np.diag(sigma)
        pivot = int(np.argmin(rel))
        raise SingularMatrixError(
            f"condition number {cond:.3g} exceeds {MAX_CONDITION:g} (pivot {pivot})",
            pivot=pivot,
        )
    inv, info = lapack.dpotri(chol, lower=1)
    if info != 0:
        raise SingularMatrixError("inversion failed", pivot=max(info - 1, 0))
    inv = np.tril(inv) + np.tril(inv, -1).T
    return inv


def _refit_on_support(fit: FitResult, g: DirectedGraph, Z: EdgeCovariates,
                      cfg: FitConfig) -> FitResult:
    mask = np.zeros(2 * g.n, dtype=bool)
    mask[fit.support] = True
    return _fit(g, Z, cfg.with_lambda(0.0), warm=fit, free_vartheta=mask)


def wald_ci(fit: FitResult, g: DirectedGraph, Z: EdgeCovariates, level: float = 0.95, *,
            refit: bool = False, cfg: FitConfig | None = None,
            allow_unconverged: bool = False) -> InferenceReport:
    """Wald intervals ``xi_hat +- z se`` for (mu, gamma).

    Parameters
    ----------
    refit : bool
        Experimental. Evaluate the weights at an unpenalized refit on the
        selected support instead of at the penalized fit. The intervals stay
        centred at the penalized estimate.
    """
    z = critical_value(level)
    if not fit.converged and not allow_unconverged:
        raise NotConvergedError("inference needs a converged fit")
    at = _refit_on_support(fit, g, Z, cfg or FitConfig()) if refit else fit
    sig = sigma_xi(at, g, Z)
    inv = invert_sigma_xi(sig)
    N = g.n * (g.n - 1)
    se = np.sqrt(np.diag(inv) / N)
    est = fit.theta_hat.xi.copy()
    return InferenceReport(
        estimate=est,
        sigma_xi_hat=sig,
        theta_xi_hat=inv,
        se=se,
        ci_lower=est - z * se,
        ci_upper=est + z * se,
        level=float(level),
        refit=bool(refit),
    )
