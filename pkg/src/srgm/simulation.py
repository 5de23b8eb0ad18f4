"""Monte-Carlo study: sample, tune, fit, infer and score, per replication.

Each replication draws covariates and a graph from the configured design,
selects the penalty by every requested rule, computes Wald intervals for
(mu, gamma) and records error and selection metrics. Replication ``r`` at
size ``n`` uses the generator keyed by ``(seed, r, n)``.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import SRGMError
from .graph import sample_srgm
from .inference import wald_ci
from .model import EdgeCovariates, Theta, link_probabilities
from .parallel import map_reps
from .rng import make_rng
from .solver import FitConfig, fit, lambda_grid, lambda_max, path
from .tuning import HeuristicInputs, heuristic_lambda, select_bic
from .diagnostics import excess_risk

__all__ = [
    "SimStudyConfig",
    "SimStudyReport",
    "DEFAULT_S0",
    "true_theta",
    "sample_covariates",
    "run_replication",
    "run_study",
    "aggregate",
]

# sparsity per n on the 150..800 grid, step 50
DEFAULT_S0 = dict(zip(range(150, 801, 50), [6, 6, 6, 8, 8, 10, 10, 10, 10, 12, 12, 12, 12, 14]))

TUNINGS = ("bic", "heuristic")


def default_s0(n: int) -> int:
    """Sparsity for ``n``; off-grid sizes get the even number nearest sqrt(n) / 2, at least 6."""
    if n in DEFAULT_S0:
        return DEFAULT_S0[n]
    return max(6, 2 * round(math.sqrt(n) / 4))


def true_theta(n: int, s0: int, gamma=(1.0, 0.8), mu: float | None = None) -> Theta:
    """Heterogeneous template with s_alpha = s_beta = s0 / 2 and two overlap nodes.

    alpha = (2, 1.5, 1, 0.8, ..., 0.8, 0, ...) and beta is the same head
    shifted right by s0 / 2 - 2 places, so nodes s0/2 - 2 and s0/2 - 1 carry
    both effects.
    """
    if s0 % 2 or s0 < 6:
        raise ValueError("s0 must be even and at least 6")
    half = s0 // 2
    if half + half - 2 > n:
        raise ValueError("template does not fit in n nodes")
    head = np.array([2.0, 1.5, 1.0] + [0.8] * (half - 3))
    alpha = np.zeros(n)
    alpha[:half] = head
    beta = np.zeros(n)
    shift = half - 2
    beta[shift : shift + half] = head
    if mu is None:
        mu = -1.2 * math.log(math.log(n))
    return Theta(alpha, beta, mu, np.asarray(gamma, dtype=float))


def sample_covariates(n: int, p: int, rng) -> EdgeCovariates:
    """Z_ij,k drawn from Beta(2, 2) - 1/2."""
    return EdgeCovariates(n, rng.beta(2.0, 2.0, size=(n * (n - 1), p)) - 0.5, warn=False)


@dataclass
class SimStudyConfig:
    """Design of the study.

    ``s0`` maps n to the sparsity level; sizes not listed fall back to
    :func:`default_s0`. ``mu`` of None means -1.2 log(log n).
    """

    n_grid: list = field(default_factory=lambda: [150, 300])
    s0: dict = field(default_factory=dict)
    gamma: list = field(default_factory=lambda: [1.0, 0.8])
    mu: float | None = None
    covariate_law: str = "centred-beta(2,2)"
    M: int = 100
    seed: int = 0
    tuning: list = field(default_factory=lambda: ["bic", "heuristic"])
    t: float = 3.0
    strict_factor_8: bool = False
    level: float = 0.95
    grid_size: int = 50
    grid_ratio: float = 200.0
    refit_weights: bool = False
    tol_kkt: float = 1e-6
    threads: int = 1

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        self.s0 = {int(k): int(v) for k, v in dict(self.s0).items()}
        self.gamma = [float(x) for x in self.gamma]
        self.tuning = [str(t) for t in self.tuning]
        bad = [t for t in self.tuning if t not in TUNINGS]
        if bad:
            raise ValueError(f"unknown tuning rule {bad[0]!r}")
        if self.covariate_law != "centred-beta(2,2)":
            raise ValueError(f"unsupported covariate law {self.covariate_law!r}")
        if self.M < 1 or not self.n_grid:
            raise ValueError("need M >= 1 and a non-empty n grid")

    def s0_for(self, n: int) -> int:
        return self.s0.get(n, default_s0(n))

    @classmethod
    def full(cls, **kw) -> "SimStudyConfig":
        """Reference-scale design: n = 150..800, M = 500."""
        kw.setdefault("n_grid", list(range(150, 801, 50)))
        kw.setdefault("M", 500)
        return cls(**kw)

    def digest(self) -> str:
        doc = {k: v for k, v in asdict(self).items() if k != "threads"}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:12]

    # -- text config ---------------------------------------------------
    @classmethod
    def from_text(cls, text: str, **overrides) -> "SimStudyConfig":
        """Parse the ``[study]`` section of a key = value config.

        Lists are comma separated; ``s0`` takes ``n:s`` items, e.g.
        ``s0 = 150:6, 300:8``.
        """
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keys are case sensitive (M)
        parser.read_string(text)
        sec = parser["study"] if parser.has_section("study") else {}
        kw = {}
        names = {f.name for f in fields(cls)}
        for key, raw in dict(sec).items():
            if key not in names:
                raise ValueError(f"unknown config key {key!r}")
            kw[key] = _parse_value(key, raw)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


def _parse_value(key, raw):
    raw = raw.strip()
    if key in ("n_grid",):
        return [int(x) for x in raw.split(",") if x.strip()]
    if key == "gamma":
        return [float(x) for x in raw.split(",") if x.strip()]
    if key == "tuning":
        return [x.strip() for x in raw.split(",") if x.strip()]
    if key == "s0":
        out = {}
        for item in raw.split(","):
            if item.strip():
                n, s = item.split(":")
                out[int(n)] = int(s)
        return out
    if key in ("M", "seed", "grid_size", "threads"):
        return int(raw)
    if key in ("strict_factor_8", "refit_weights"):
        return raw.lower() in ("1", "true", "yes", "on")
    if key == "mu":
        return None if raw.lower() in ("", "default", "none") else float(raw)
    if key == "covariate_law":
        return raw
    return float(raw)


# ---------------------------------------------------------------- replication


def _score(res, theta0: Theta, Z, g, cfg: SimStudyConfig, fcfg: FitConfig) -> dict:
    th = res.theta_hat
    n = theta0.n
    true_s = set(np.flatnonzero(theta0.vartheta > 0).tolist())
    est_s = set(res.support.tolist())
    rec = {
        "lambda": res.lam,
        "s_hat": res.s_hat,
        "converged": bool(res.converged),
        "iters": res.iters,
        "kkt_residual": res.kkt_residual,
        "mae_vartheta": float(np.mean(np.abs(th.vartheta - theta0.vartheta))),
        "mu_abs_err": abs(th.mu - theta0.mu),
        "gamma_l1_err": float(np.abs(th.gamma - theta0.gamma).sum()),
        "exact_support": est_s == true_s,
        "false_pos": len(est_s - true_s),
        "false_neg": len(true_s - est_s),
        "excess_risk": excess_risk(th, theta0, Z),
    }
    inf = wald_ci(res, g, Z, cfg.level, refit=cfg.refit_weights, cfg=fcfg)
    xi0 = theta0.xi
    rec["se"] = inf.se.tolist()
    rec["ci_length"] = inf.ci_length.tolist()
    rec["covered"] = [bool(c) for c in inf.covers(xi0)]
    return rec, inf


def run_replication(rep: int, n: int, cfg: SimStudyConfig) -> list[dict]:
    """Records for one replication, one per tuning rule.

    Failures (non-convergence, singular information matrix, numerical
    trouble) become records with ``status = "failed"`` and a reason.
    """
    rng = make_rng(cfg.seed, rep, n)
    theta0 = true_theta(n, cfg.s0_for(n), cfg.gamma, cfg.mu)
    Z = sample_covariates(n, len(cfg.gamma), rng)
    g = sample_srgm(theta0, Z, rng)
    probs = link_probabilities(theta0, Z)
    base = {
        "rep": rep,
        "n": n,
        "density": g.density(),
        "min_p": float(probs.min()),
        "max_p": float(probs.max()),
    }
    fcfg = FitConfig(tol_kkt=cfg.tol_kkt)
    out = []
    for rule in cfg.tuning:
        rec = {**base, "tuning": rule}
        try:
            if rule == "heuristic":
                h = HeuristicInputs(n=n, p=Z.p, c=Z.c_bound if Z.p else 1.0, t=cfg.t)
                lam = heuristic_lambda(h, strict_factor_8=cfg.strict_factor_8)[2]
                res = fit(g, Z, fcfg.with_lambda(lam))
            else:
                lmax, null = lambda_max(g, Z, fcfg)
                grid = lambda_grid(lmax, cfg.grid_size, cfg.grid_ratio)
                pr = path(g, Z, grid, fcfg, warm=null)
                _, res = select_bic(pr, n * (n - 1))
            if not res.converged:
                raise SRGMError(f"fit did not converge (kkt={res.kkt_residual:.3g})")
            scores, inf = _score(res, theta0, Z, g, cfg, fcfg)
            rec.update(status="ok", **scores)
            rec["fit"] = {**res.to_dict(), "inference": inf.to_dict()}
        except SRGMError as exc:
            rec.update(status="failed", reason=f"{type(exc).__name__}: {exc}")
        out.append(rec)
    return out


def _rep_entry(rep, n, cfg):
    return run_replication(rep, n, cfg)


def run_study(cfg: SimStudyConfig, progress=None) -> list[dict]:
    """All replication records, sorted by (n, rep, tuning order)."""
    records = []
    for n in cfg.n_grid:
        chunks = map_reps(_rep_entry, cfg.M, cfg.threads, n=n, cfg=cfg)
        for recs in chunks:
            records.extend(recs)
        if progress is not None:
            progress(n)
    return records


# ---------------------------------------------------------------- aggregation


@dataclass
class SimStudyReport:
    """Aggregated rows; each list holds dicts ready for CSV output."""

    metrics: list
    coverage: list
    selection: list
    density: list


def _mean_sd(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1)) if x.size > 1 else 0.0


def _median(x):
    x = np.asarray(x, dtype=float)
    return float(np.median(x)) if x.size else float("nan")


def aggregate(records: list[dict], cfg: SimStudyConfig) -> SimStudyReport:
    metrics, coverage, selection, density = [], [], [], []
    p = len(cfg.gamma)
    names = ["mu"] + [f"gamma{k + 1}" for k in range(p)]
    for n in cfg.n_grid:
        at_n = [r for r in records if r["n"] == n]
        reps = sorted({r["rep"] for r in at_n})
        first = [next(r for r in at_n if r["rep"] == k) for k in reps]
        density.append({
            "n": n,
            "reps": len(first),
            "median_density": _median([r["density"] for r in first]),
            "median_min_p": _median([r["min_p"] for r in first]),
            "median_max_p": _median([r["max_p"] for r in first]),
        })
        for rule in cfg.tuning:
            rows = [r for r in at_n if r["tuning"] == rule]
            ok = [r for r in rows if r["status"] == "ok"]
            excluded = len(rows) - len(ok)
            row = {"n": n, "tuning": rule, "reps": len(ok), "excluded": excluded}
            for key in ("mae_vartheta", "mu_abs_err", "gamma_l1_err", "excess_risk", "s_hat"):
                m, s = _mean_sd([r[key] for r in ok])
                row[f"{key}_mean"] = m
                row[f"{key}_sd"] = s
            metrics.append(row)
            for k, name in enumerate(names):
                cov = [r["covered"][k] for r in ok]
                coverage.append({
                    "n": n,
                    "tuning": rule,
                    "coef": name,
                    "reps": len(ok),
                    "coverage": float(np.mean(cov)) if cov else float("nan"),
                    "median_ci_length": _median([r["ci_length"][k] for r in ok]),
                })
            exact = [r["exact_support"] for r in ok]
            selection.append({
                "n": n,
                "tuning": rule,
                "reps": len(ok),
                "excluded": excluded,
                "p_exact": float(np.mean(exact)) if exact else float("nan"),
                "p_no_false_pos": float(np.mean([r["false_pos"] == 0 for r in ok])) if ok else float("nan"),
                "median_false_pos": _median([r["false_pos"] for r in ok]),
                "median_false_neg": _median([r["false_neg"] for r in ok]),
                "median_lambda": _median([r["lambda"] for r in ok]),
            })
    return SimStudyReport(metrics, coverage, selection, density)
