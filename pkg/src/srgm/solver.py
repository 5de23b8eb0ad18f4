"""Penalized likelihood fits: accelerated proximal gradient, paths, KKT checks.

The objective is

    F(theta) = L(theta) / N + lambda * (||alpha||_1 + ||beta||_1)

over alpha, beta >= 0. On a nonnegative coordinate the l1 term is linear, so
its proximal map is a shifted projection ``max(0, x - step * (g + lambda))``.

Both routes below run the same iteration. ``fit`` works in the original
coordinates with the diagonal metric (n for vartheta, 1 for xi); ``fit_rescaled``
works on theta_bar = (vartheta / sqrt(n), mu, gamma) with the identity metric.
The metric makes every coordinate see curvature of the same order, which is
what the sqrt(n) blow-up of the indicator columns is for.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import DimensionMismatchError, NumericalFailureError
from .graph import DirectedGraph
from .model import EdgeCovariates, Theta

__all__ = [
    "FitConfig",
    "FitResult",
    "PathResult",
    "fit",
    "fit_rescaled",
    "fit_null",
    "lambda_max",
    "lambda_grid",
    "path",
    "kkt_check",
    "kkt_residual",
    "penalized_objective",
    "FIT_SCHEMA",
]

FIT_SCHEMA = "srgm-fit/1"


@dataclass(frozen=True)
class FitConfig:
    lam: float = 0.0
    max_iters: int = 50_000
    tol_obj: float = 1e-10
    tol_kkt: float = 1e-6
    active_eps: float = 1e-8
    accel: bool = True
    init_step: float = 1.0
    backtrack: float = 0.5
    kkt_every: int = 10
    max_step: float = 64.0
    step_growth: float = 1.1
    stall_iters: int = 50

    def __post_init__(self):
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ValueError("lambda must be finite and nonnegative")
        if self.tol_obj <= 0 or self.tol_kkt <= 0 or self.active_eps <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")

    def with_lambda(self, lam: float) -> "FitConfig":
        return replace(self, lam=float(lam))


@dataclass
class FitResult:
    theta_hat: Theta
    lam: float
    support: np.ndarray
    objective: float
    nll: float
    kkt_residual: float
    iters: int
    converged: bool
    trace: list = field(default_factory=list, repr=False)

    @property
    def s_hat(self) -> int:
        return int(self.support.shape[0])

    @property
    def lambda_bar(self) -> float:
        return math.sqrt(self.theta_hat.n) * self.lam

    def to_dict(self) -> dict:
        th = self.theta_hat
        return {
            "schema": FIT_SCHEMA,
            "n": th.n,
            "p": th.p,
            "lambda": self.lam,
            "alpha": th.alpha.tolist(),
            "beta": th.beta.tolist(),
            "mu": th.mu,
            "gamma": th.gamma.tolist(),
            "support": [int(i) for i in self.support],
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "iters": self.iters,
            "converged": bool(self.converged),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc: dict) -> "FitResult":
        theta = Theta(doc["alpha"], doc["beta"], doc["mu"], doc["gamma"])
        return cls(
            theta_hat=theta,
            lam=float(doc["lambda"]),
            support=np.asarray(doc["support"], dtype=np.int64),
            objective=float(doc["objective"]),
            nll=float("nan"),
            kkt_residual=float(doc["kkt_residual"]),
            iters=int(doc["iters"]),
            converged=bool(doc["converged"]),
        )


@dataclass
class PathResult:
    lambdas: np.ndarray
    fits: list

    def __len__(self):
        return len(self.fits)


class _Problem:
    """Smooth part f = L/N with cached pair indicator and covariates."""

    def __init__(self, g: DirectedGraph, Z: EdgeCovariates):
        if g.n != Z.n:
            raise DimensionMismatchError(f"graph has n={g.n}, covariates n={Z.n}")
        self.n = g.n
        self.p = Z.p
        self.N = g.n_pairs
        self.a = np.ascontiguousarray(g.pair_indicator())
        self.Z = Z.values
        self.dim = 2 * self.n + 1 + self.p

    def _zg(self, x):
        if self.p == 0:
            return np.zeros(self.N)
        return self.Z @ x[2 * self.n + 1 :]

    def value(self, x) -> float:
        n = self.n
        return kernels.loss_value(x[:n], x[n : 2 * n], x[2 * n], self._zg(x), self.a) / self.N

    def value_grad(self, x):
        n = self.n
        loss, g_a, g_b, g_mu, resid = kernels.loss_and_grad(
            x[:n], x[n : 2 * n], x[2 * n], self._zg(x), self.a
        )
        grad = np.empty(self.dim)
        grad[:n] = g_a
        grad[n : 2 * n] = g_b
        grad[2 * n] = g_mu
        if self.p:
            grad[2 * n + 1 :] = self.Z.T @ resid
        return loss / self.N, grad / self.N


def kkt_residual(grad, vartheta, lam: float, active_eps: float, free_vartheta=None) -> float:
    """KKT violation given the scaled gradient (1/N) dL at a point.

    Active coordinates need grad + lambda = 0; inactive ones on the boundary
    of R_+ need grad + lambda >= 0; unpenalized coordinates need grad = 0.
    """
    two_n = vartheta.shape[0]
    g_v = grad[:two_n]
    res = np.abs(grad[two_n:]).max() if grad.shape[0] > two_n else 0.0
    active = vartheta > active_eps
    if free_vartheta is not None:
        active &= free_vartheta
        inactive = ~active & free_vartheta
    else:
        inactive = ~active
    if np.any(active):
        res = max(res, float(np.abs(g_v[active] + lam).max()))
    if np.any(inactive):
        res = max(res, float(np.maximum(0.0, -g_v[inactive] - lam).max()))
    return float(res)


def _fista(fg, fval, x0, pen, nonneg, metric, cfg: FitConfig, kkt_fn):
    """Accelerated proximal gradient with backtracking and restart.

    Accepted iterates have non-increasing objective: a momentum step that
    would increase it is discarded and replaced by a plain proximal step.
    """
    x = x0.copy()
    x[nonneg] = np.maximum(x[nonneg], 0.0)
    inv_metric = np.zeros_like(metric)
    inv_metric[metric > 0] = 1.0 / metric[metric > 0]
    step = cfg.init_step
    fx, gx = fg(x)
    Fx = fx + float(pen @ x)
    if not math.isfinite(Fx):
        raise NumericalFailureError("objective is not finite at the starting point")
    y, fy, gy = x, fx, gx
    t = 1.0
    trace = [Fx]
    kkt = kkt_fn(x, gx)
    if kkt <= cfg.tol_kkt:
        return x, Fx, kkt, 0, True, trace
    it = 0
    small_changes = 0
    while it < cfg.max_iters:
        it += 1
        while True:
            v = y - step * metric * (gy + pen)
            v[nonneg] = np.maximum(v[nonneg], 0.0)
            d = v - y
            fv = fval(v)
            if not math.isfinite(fv):
                step *= cfg.backtrack
                if step < 1e-20:
                    raise NumericalFailureError("step size underflow: objective not finite")
                continue
            if fv <= fy + float(gy @ d) + float(d @ (d * inv_metric)) / (2.0 * step) + 1e-15 * abs(fy):
                break
            step *= cfg.backtrack
            if step < 1e-20:
                raise NumericalFailureError("backtracking failed to find a decrease")
        Fv = fv + float(pen @ v)
        if Fv > Fx and y is not x:
            # momentum overshoot: restart from x with a plain step
            t = 1.0
            if gx is None:
                fx, gx = fg(x)
            y, fy, gy = x, fx, gx
            it -= 1
            continue
        if Fv > Fx + 1e-12 * max(1.0, abs(Fx)):
            raise NumericalFailureError("objective increased on a plain proximal step")
        rel = abs(Fx - Fv) / max(1.0, abs(Fx))
        x_prev = x
        x, Fx = v, Fv
        trace.append(Fx)
        if cfg.accel:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            mom = (t - 1.0) / t_next
            t = t_next
        else:
            mom = 0.0
        need_grad_x = (it % cfg.kkt_every == 0) or rel <= cfg.tol_obj or mom == 0.0
        if need_grad_x:
            fx, gx = fg(x)
            kkt = kkt_fn(x, gx)
            if kkt <= cfg.tol_kkt:
                return x, Fx, kkt, it, True, trace
        else:
            fx, gx = fv, None
        small_changes = small_changes + 1 if rel <= cfg.tol_obj else 0
        if small_changes >= cfg.stall_iters:
            # objective has stopped moving; report whatever KKT level was reached
            if gx is None:
                fx, gx = fg(x)
            kkt = kkt_fn(x, gx)
            return x, Fx, kkt, it, kkt <= cfg.tol_kkt, trace
        if mom > 0.0:
            y = x + mom * (x - x_prev)
            y[nonneg] = np.maximum(y[nonneg], 0.0)
            fy, gy = fg(y)
        else:
            if gx is None:
                fx, gx = fg(x)
            y, fy, gy = x, fx, gx
        # let the step grow again after backtracking
        step = min(cfg.max_step, step * cfg.step_growth)
    if gx is None:
        fx, gx = fg(x)
    kkt = kkt_fn(x, gx)
    return x, Fx, kkt, it, kkt <= cfg.tol_kkt, trace


def _result(prob: _Problem, x, lam, cfg, kkt, iters, converged, trace):
    n = prob.n
    x = x.copy()
    x[: 2 * n] = np.maximum(x[: 2 * n], 0.0)
    theta = Theta.from_vector(x, n)
    loss = prob.value(x) * prob.N
    support = np.flatnonzero(x[: 2 * n] > cfg.active_eps)
    return FitResult(
        theta_hat=theta,
        lam=float(lam),
        support=support,
        objective=loss / prob.N + lam * float(x[: 2 * n].sum()),
        nll=loss,
        kkt_residual=float(kkt),
        iters=int(iters),
        converged=bool(converged),
        trace=trace,
    )


def _start(prob: _Problem, warm):
    if warm is None:
        x0 = np.zeros(prob.dim)
        # intercept-only start: mu = logit(density)
        dens = min(max(prob.a.mean(), 1e-12), 1 - 1e-12)
        x0[2 * prob.n] = math.log(dens / (1.0 - dens))
        return x0
    if isinstance(warm, FitResult):
        warm = warm.theta_hat
    if warm.n != prob.n or warm.p != prob.p:
        raise DimensionMismatchError("warm start has the wrong dimensions")
    return warm.to_vector()


def fit(g: DirectedGraph, Z: EdgeCovariates, cfg: FitConfig, warm=None, *, lam=None,
        free_vartheta=None) -> FitResult:
    """Minimize L/N + lambda * ||vartheta||_1 over alpha, beta >= 0.

    ``free_vartheta`` (boolean mask over the 2n heterogeneity coordinates)
    pins the masked-out coordinates at zero.
    """
    if lam is not None:
        cfg = cfg.with_lambda(lam)
    prob = _Problem(g, Z)
    n = prob.n
    x0 = _start(prob, warm)
    nonneg = np.zeros(prob.dim, dtype=bool)
    nonneg[: 2 * n] = True
    pen = np.zeros(prob.dim)
    pen[: 2 * n] = cfg.lam
    metric = np.ones(prob.dim)
    metric[: 2 * n] = float(n)
    if free_vartheta is not None:
        free_vartheta = np.asarray(free_vartheta, dtype=bool)
        # pinned coordinates get a zero metric and never move
        metric[: 2 * n][~free_vartheta] = 0.0
        x0[: 2 * n][~free_vartheta] = 0.0

    def kkt_fn(x, grad):
        return kkt_residual(grad, x[: 2 * n], cfg.lam, cfg.active_eps, free_vartheta)

    x, _, kkt, iters, conv, trace = _fista(
        prob.value_grad, prob.value, x0, pen, nonneg, metric, cfg, kkt_fn
    )
    return _result(prob, x, cfg.lam, cfg, kkt, iters, conv, trace)


def fit_rescaled(g: DirectedGraph, Z: EdgeCovariates, lambda_bar: float, cfg: FitConfig,
                 warm=None) -> FitResult:
    """Solve the rescaled problem in theta_bar and map back (vartheta = sqrt(n) vartheta_bar).

    The returned result carries the original-scale penalty lambda_bar / sqrt(n).
    """
    prob = _Problem(g, Z)
    n = prob.n
    root = math.sqrt(n)
    up = np.ones(prob.dim)
    up[: 2 * n] = root
    lam = lambda_bar / root
    cfg = cfg.with_lambda(lam)
    xbar0 = _start(prob, warm) / up
    nonneg = np.zeros(prob.dim, dtype=bool)
    nonneg[: 2 * n] = True
    pen = np.zeros(prob.dim)
    pen[: 2 * n] = lambda_bar
    metric = np.ones(prob.dim)

    def fg(xbar):
        f, grad = prob.value_grad(xbar * up)
        return f, grad * up

    def fval(xbar):
        return prob.value(xbar * up)

    def kkt_fn(xbar, grad_bar):
        return kkt_residual(grad_bar / up, (xbar * up)[: 2 * n], lam, cfg.active_eps)

    xbar, _, kkt, iters, conv, trace = _fista(fg, fval, xbar0, pen, nonneg, metric, cfg, kkt_fn)
    return _result(prob, xbar * up, lam, cfg, kkt, iters, conv, trace)


def fit_null(g: DirectedGraph, Z: EdgeCovariates, cfg: FitConfig | None = None) -> FitResult:
    """Fit with all heterogeneity parameters pinned at zero (mu, gamma only)."""
    cfg = cfg or FitConfig()
    return fit(g, Z, cfg.with_lambda(0.0), free_vartheta=np.zeros(2 * g.n, dtype=bool))


def lambda_max(g: DirectedGraph, Z: EdgeCovariates, cfg: FitConfig | None = None):
    """Smallest lambda at which alpha = beta = 0 is optimal, and the null fit.

    Zero is optimal for a nonnegative coordinate iff (1/N) dL/dtheta_i + lambda >= 0
    at the null fit, so lambda_max = max_i max(0, -(1/N) dL/dtheta_i).
    """
    cfg = cfg or FitConfig()
    null = fit_null(g, Z, cfg)
    prob = _Problem(g, Z)
    _, grad = prob.value_grad(null.theta_hat.to_vector())
    lmax = float(max(0.0, (-grad[: 2 * g.n]).max()))
    null.lam = lmax
    null.objective = null.nll / prob.N
    null.kkt_residual = kkt_residual(grad, null.theta_hat.vartheta, lmax, cfg.active_eps)
    return lmax, null


def lambda_grid(lmax: float, num: int = 50, ratio: float = 200.0) -> np.ndarray:
    """``num`` log-spaced points from lmax down to lmax / ratio."""
    return np.geomspace(lmax, lmax / ratio, num)


def path(g: DirectedGraph, Z: EdgeCovariates, lambdas, cfg: FitConfig | None = None,
         warm=None) -> PathResult:
    """Warm-started fits along a strictly decreasing grid."""
    cfg = cfg or FitConfig()
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValueError("lambda grid must be a non-empty vector")
    if np.any(lambdas < 0) or np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambda grid must be strictly decreasing and nonnegative")
    fits = []
    for k, lam in enumerate(lambdas):
        try:
            res = fit(g, Z, cfg.with_lambda(lam), warm=warm)
        except NumericalFailureError as exc:
            raise NumericalFailureError(f"path point {k} (lambda={lam:g}): {exc}") from exc
        fits.append(res)
        warm = res
    return PathResult(lambdas=lambdas, fits=fits)


def penalized_objective(theta: Theta, g: DirectedGraph, Z: EdgeCovariates, lam: float) -> float:
    prob = _Problem(g, Z)
    x = theta.to_vector()
    return prob.value(x) + lam * float(x[: 2 * g.n].sum())


def kkt_check(res: FitResult, g: DirectedGraph, Z: EdgeCovariates, active_eps: float = 1e-8) -> float:
    """Recompute the KKT residual of a fit from scratch."""
    prob = _Problem(g, Z)
    _, grad = prob.value_grad(res.theta_hat.to_vector())
    return kkt_residual(grad, res.theta_hat.vartheta, res.lam, active_eps)
