"""Bias of estimating edge probabilities from the giant component only.

For an Erdos-Renyi graph with p = lambda / n and lambda > 1, the maximum
likelihood estimate of p computed on the giant component alone overshoots by
the factor (1 + eta) / (1 - eta) asymptotically, where eta is the root in
(0, 1) of eta = exp(lambda (eta - 1)). The two-block SBM experiment measures
the same effect on (a, b) with known block labels.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .errors import NoSolutionError
from .graph import components, sample_er, sample_sbm2
from .parallel import map_reps
from .rng import make_rng

__all__ = [
    "ErBiasResult",
    "SbmBiasResult",
    "eta_lambda",
    "asymptotic_bias",
    "giant_edge_probability",
    "er_bias_experiment",
    "sbm_bias_experiment",
    "sbm_giant_estimates",
    "bias_curve",
    "BIAS_CSV_COLUMNS",
]

BIAS_CSV_COLUMNS = ("n", "lambda_or_a", "b", "reps", "stat", "mean", "sd")


def eta_lambda(lam: float, tol: float = 1e-12, *, damping: float = 0.5,
               max_iter: int = 100_000) -> float:
    """Root eta < 1 of ``eta = exp(lam * (eta - 1))``.

    Damped fixed-point iteration from 0.5; if it stalls or the residual is
    not below 1e-10, bisection on [0, 1 - 1e-9] takes over.

    Raises
    ------
    NoSolutionError
        If ``lam <= 1``; the root below one exists only for ``lam > 1``.
    """
    lam = float(lam)
    if not lam > 1.0:
        raise NoSolutionError(f"no root below one for lambda = {lam} (need lambda > 1)")
    eta = 0.5
    for _ in range(max_iter):
        nxt = (1.0 - damping) * eta + damping * math.exp(lam * (eta - 1.0))
        if abs(nxt - eta) < tol:
            eta = nxt
            break
        eta = nxt
    if not (0.0 <= eta < 1.0) or abs(math.exp(lam * (eta - 1.0)) - eta) >= 1e-10:
        eta = bisect(lambda x: math.exp(lam * (x - 1.0)) - x, 0.0, 1.0 - 1e-9, xtol=tol)
    return eta


def asymptotic_bias(lam: float) -> float:
    eta = eta_lambda(lam)
    return (1.0 + eta) / (1.0 - eta)


def _summary(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return float(values.mean()), sd


# ---------------------------------------------------------------- ER


def giant_edge_probability(g) -> float:
    """|E(C)| / C(|C|, 2) on the giant component C; NaN if |C| < 2."""
    comp = components(g)
    size = comp.giant_size
    if size < 2:
        return float("nan")
    u = np.asarray(g.u)
    m = int(np.count_nonzero(comp.labels[u] == comp.giant_id))
    return m / (size * (size - 1) / 2.0)


@dataclass
class ErBiasResult:
    n: int
    lam: float
    eta: float
    asymptotic_bias: float
    empirical_ratio_mean: float
    empirical_ratio_sd: float
    reps: int
    skipped: int = 0
    giant_frac_mean: float = float("nan")
    ratios: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def rows(self) -> list[dict]:
        base = {"n": self.n, "lambda_or_a": self.lam, "b": "", "reps": self.reps}
        return [
            {**base, "stat": "ratio", "mean": self.empirical_ratio_mean, "sd": self.empirical_ratio_sd},
            {**base, "stat": "giant_frac", "mean": self.giant_frac_mean, "sd": ""},
            {**base, "stat": "asymptotic_bias", "mean": self.asymptotic_bias, "sd": 0.0},
            {**base, "stat": "skipped", "mean": self.skipped, "sd": ""},
        ]


def _er_rep(rep, n, lam, seed):
    g = sample_er(n, lam, make_rng(seed, rep))
    comp = components(g)
    size = comp.giant_size
    if size < 2:
        return float("nan"), size / n
    m = int(np.count_nonzero(comp.labels[np.asarray(g.u)] == comp.giant_id))
    p_hat = m / (size * (size - 1) / 2.0)
    return p_hat / (lam / n), size / n


def er_bias_experiment(n: int, lam: float, reps: int, seed=0, threads: int = 1) -> ErBiasResult:
    """Monte-Carlo mean of p_hat_max / p over ``reps`` Erdos-Renyi draws."""
    eta = eta_lambda(lam)
    if n < 1000:
        warnings.warn(f"n = {n} is small; the giant component may not exist", stacklevel=2)
    out = map_reps(_er_rep, reps, threads, n=n, lam=lam, seed=seed)
    ratios = np.array([r for r, _ in out])
    fracs = np.array([f for _, f in out])
    keep = np.isfinite(ratios)
    mean, sd = _summary(ratios[keep])
    return ErBiasResult(
        n=n,
        lam=float(lam),
        eta=eta,
        asymptotic_bias=(1.0 + eta) / (1.0 - eta),
        empirical_ratio_mean=mean,
        empirical_ratio_sd=sd,
        reps=int(reps),
        skipped=int((~keep).sum()),
        giant_frac_mean=float(fracs.mean()) if fracs.size else float("nan"),
        ratios=ratios,
    )


# ---------------------------------------------------------------- SBM


@dataclass
class SbmBiasResult:
    n: int
    a: float
    b: float
    giant_frac_mean: float
    giant_frac_sd: float
    rho_mean: float
    rho_sd: float
    a_hat_mean: float
    b_hat_mean: float
    reps: int
    degenerate: int = 0
    giant_only: bool = True

    def rows(self) -> list[dict]:
        base = {"n": self.n, "lambda_or_a": self.a, "b": self.b, "reps": self.reps}
        return [
            {**base, "stat": "giant_frac", "mean": self.giant_frac_mean, "sd": self.giant_frac_sd},
            {**base, "stat": "rho", "mean": self.rho_mean, "sd": self.rho_sd},
            {**base, "stat": "a_hat", "mean": self.a_hat_mean, "sd": ""},
            {**base, "stat": "b_hat", "mean": self.b_hat_mean, "sd": ""},
            {**base, "stat": "degenerate", "mean": self.degenerate, "sd": ""},
        ]


def sbm_giant_estimates(g, membership, *, giant_only: bool = True):
    """Block-rate estimates (a_hat, b_hat, giant fraction) with known labels.

    Only edges inside the giant-induced subgraph are used when
    ``giant_only``; otherwise the whole graph. ``a_hat`` or ``b_hat`` is NaN
    when its pair class is empty.
    """
    n = g.n
    membership = np.asarray(membership)
    u, v = np.asarray(g.u), np.asarray(g.v)
    comp = components(g)
    if giant_only:
        inside = comp.labels == comp.giant_id
        keep = inside[u]  # an edge with one end in the giant has both ends there
    else:
        inside = np.ones(n, dtype=bool)
        keep = np.ones(u.shape[0], dtype=bool)
    same = membership[u[keep]] == membership[v[keep]]
    within_edges = int(same.sum())
    between_edges = int((~same).sum())
    k1 = int(np.count_nonzero(membership[inside] == 1))
    k0 = int(inside.sum()) - k1
    within_pairs = k0 * (k0 - 1) // 2 + k1 * (k1 - 1) // 2
    between_pairs = k0 * k1
    a_hat = n * within_edges / within_pairs if within_pairs else float("nan")
    b_hat = n * between_edges / between_pairs if between_pairs else float("nan")
    return a_hat, b_hat, comp.giant_size / n


def _sbm_rep(rep, n, a, b, seed, giant_only):
    g, membership = sample_sbm2(n, a, b, make_rng(seed, rep))
    return sbm_giant_estimates(g, membership, giant_only=giant_only)


def sbm_bias_experiment(n: int, a: float, b: float, reps: int, seed=0, threads: int = 1,
                        *, giant_only: bool = True) -> SbmBiasResult:
    """Giant-only estimates of (a, b) and the spectral ratio (a_hat + b_hat) / (a + b)."""
    out = np.array(map_reps(_sbm_rep, reps, threads, n=n, a=a, b=b, seed=seed,
                            giant_only=giant_only), dtype=float).reshape(-1, 3)
    a_hat, b_hat, frac = out[:, 0], out[:, 1], out[:, 2]
    ok = np.isfinite(a_hat) & np.isfinite(b_hat)
    if a + b > 0:
        rho = (a_hat[ok] + b_hat[ok]) / (a + b)
    else:
        rho = np.zeros(0)
        ok[:] = False
    rho_mean, rho_sd = _summary(rho)
    frac_mean, frac_sd = _summary(frac)
    return SbmBiasResult(
        n=n,
        a=float(a),
        b=float(b),
        giant_frac_mean=frac_mean,
        giant_frac_sd=frac_sd,
        rho_mean=rho_mean,
        rho_sd=rho_sd,
        a_hat_mean=float(a_hat[ok].mean()) if ok.any() else float("nan"),
        b_hat_mean=float(b_hat[ok].mean()) if ok.any() else float("nan"),
        reps=int(reps),
        degenerate=int((~ok).sum()),
        giant_only=giant_only,
    )


# ---------------------------------------------------------------- curve


def bias_curve(lambdas) -> list[tuple[float, float, float]]:
    """Rows ``(lambda, eta_lambda, (1 + eta) / (1 - eta))`` over a grid."""
    lambdas = [float(x) for x in lambdas]
    bad = [x for x in lambdas if not x > 1.0]
    if bad:
        raise NoSolutionError(f"bias curve needs lambda > 1, got {bad[0]}")
    rows = []
    for lam in lambdas:
        eta = eta_lambda(lam)
        rows.append((lam, eta, (1.0 + eta) / (1.0 - eta)))
    return rows
