"""Command-line front end.

Verbs: fit, simulate, bias, check, sample. Exit codes: 0 ok, 2 a fit did not
converge (results are still written), 64 usage error, 65 malformed input
file, 70 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bias import (BIAS_CSV_COLUMNS, bias_curve, er_bias_experiment, sbm_bias_experiment)
from .diagnostics import (check_all, check_compatibility, check_dependency, check_incoherence,
                          tight_instance)
from .errors import (DataFormatError, NoSolutionError, NotConvergedError, NumericalFailureError,
                     SingularMatrixError, InvalidProbabilityError, DimensionMismatchError)
from .graph import read_edge_list, sample_srgm, write_edge_list
from .inference import wald_ci
from .model import EdgeCovariates, SparsityProfile, Theta, read_covariates, write_covariates
from .rng import make_rng
from .simulation import SimStudyConfig, aggregate, run_study, sample_covariates, true_theta
from .solver import FitConfig, PathResult, fit, lambda_grid, lambda_max, path
from .tuning import HeuristicInputs, bic, choose_c_bound, heuristic_lambda, select_bic

log = logging.getLogger("srgm")

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NUMERIC = 70


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- output helpers


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:12]


def _provenance(config_hash: str, seed) -> str:
    return f"# srgm {__version__} config={config_hash} seed={seed}"


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path: Path, rows: list[dict], columns, config_hash: str, seed) -> None:
    """CSV with a provenance comment line, then the header, then the rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_provenance(config_hash, seed) + "\n")
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in columns})


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _theta_doc(theta: Theta) -> dict:
    return {"alpha": theta.alpha.tolist(), "beta": theta.beta.tolist(), "mu": theta.mu,
            "gamma": theta.gamma.tolist()}


def _read_theta(path) -> Theta:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return Theta(doc["alpha"], doc["beta"], doc["mu"], doc.get("gamma", []))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: not a parameter document ({exc})") from None


# ---------------------------------------------------------------- fit


def cmd_fit(args) -> int:
    if args.lam is not None and args.tune_given:
        raise UsageError("--lambda and --tune are mutually exclusive")
    g = read_edge_list(args.edges)
    Z = read_covariates(args.covariates) if args.covariates else EdgeCovariates.empty(g.n)
    if Z.n != g.n:
        raise DimensionMismatchError(f"edge list has n={g.n}, covariates have n={Z.n}")
    cfg = FitConfig(tol_kkt=args.tol_kkt, max_iters=args.max_iters)
    N = g.n * (g.n - 1)
    tuning = {"rule": "fixed" if args.lam is not None else args.tune}
    if args.lam is not None:
        res = fit(g, Z, cfg.with_lambda(args.lam))
    elif args.tune == "heuristic":
        c = choose_c_bound(Z)
        a_n, lam0, lam = heuristic_lambda(HeuristicInputs(g.n, Z.p, c, args.t),
                                          strict_factor_8=args.strict_factor_8)
        tuning.update(t=args.t, c=c, a_n=a_n, lambda_0=lam0, strict_factor_8=args.strict_factor_8)
        res = fit(g, Z, cfg.with_lambda(lam))
    else:
        lmax, null = lambda_max(g, Z, cfg)
        pr = path(g, Z, lambda_grid(lmax), cfg, warm=null)
        unconv = [k for k, f in enumerate(pr.fits) if not f.converged]
        if unconv:
            tuning["unconverged_path_points"] = unconv
        good = [k for k, f in enumerate(pr.fits) if f.converged]
        if good:
            sub = PathResult(pr.lambdas[good], [pr.fits[k] for k in good])
            _, res = select_bic(sub, N)
            tuning["bic"] = bic(res, N)
        else:
            res = pr.fits[-1]
        tuning["lambda_max"] = lmax
    doc = res.to_dict()
    doc["tuning"] = tuning
    doc["diagnostics"] = {
        "uncentered_covariates": Z.uncentered,
        "covariate_means": Z.means.tolist(),
        "implied_rho_n": SparsityProfile.implied(res.theta_hat, Z).rho_n,
    }
    code = EXIT_OK
    try:
        inf = wald_ci(res, g, Z, args.level, refit=args.refit_weights, cfg=cfg,
                      allow_unconverged=True)
        doc["inference"] = inf.to_dict()
    except SingularMatrixError as exc:
        doc["inference"] = None
        doc["inference_error"] = str(exc)
        code = EXIT_NUMERIC
    out = _out_dir(args)
    (out / "fit.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    if not res.converged or "unconverged_path_points" in tuning:
        log.warning("fit did not converge (kkt residual %.3g)", res.kkt_residual)
        return EXIT_NOT_CONVERGED
    return code


# ---------------------------------------------------------------- simulate

METRIC_COLUMNS = ["n", "tuning", "reps", "excluded"] + [
    f"{k}_{s}" for k in ("mae_vartheta", "mu_abs_err", "gamma_l1_err", "excess_risk", "s_hat")
    for s in ("mean", "sd")
]
COVERAGE_COLUMNS = ["n", "tuning", "coef", "reps", "coverage", "median_ci_length"]
SELECTION_COLUMNS = ["n", "tuning", "reps", "excluded", "p_exact", "p_no_false_pos",
                     "median_false_pos", "median_false_neg", "median_lambda"]
DENSITY_COLUMNS = ["n", "reps", "median_density", "median_min_p", "median_max_p"]


def _study_config(args) -> SimStudyConfig:
    over = {
        "n_grid": args.n_grid,
        "M": args.M,
        "seed": args.seed,
        "tuning": args.tune.split(",") if args.tune else None,
        "t": args.t,
        "strict_factor_8": True if args.strict_factor_8 else None,
        "threads": args.threads,
        "level": args.level,
    }
    text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
    over = {k: v for k, v in over.items() if v is not None}
    if args.full:
        ref = SimStudyConfig.full()
        over.setdefault("n_grid", ref.n_grid)
        over.setdefault("M", ref.M)
    try:
        return SimStudyConfig.from_text(text, **over)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args) -> int:
    cfg = _study_config(args)
    out = _out_dir(args)
    digest = cfg.digest()
    log.info("simulating n=%s M=%d tuning=%s", cfg.n_grid, cfg.M, cfg.tuning)
    records = run_study(cfg, progress=lambda n: log.info("finished n=%d", n))
    report = aggregate(records, cfg)
    with open(out / "fits.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    write_csv(out / "metrics.csv", report.metrics, METRIC_COLUMNS, digest, cfg.seed)
    write_csv(out / "coverage.csv", report.coverage, COVERAGE_COLUMNS, digest, cfg.seed)
    write_csv(out / "selection.csv", report.selection, SELECTION_COLUMNS, digest, cfg.seed)
    write_csv(out / "density.csv", report.density, DENSITY_COLUMNS, digest, cfg.seed)
    failed = sum(r["status"] != "ok" for r in records)
    log.info("excluded replications: %d of %d", failed, len(records))
    print(f"excluded {failed} of {len(records)} replication fits", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- bias


def _bias_rows(args) -> tuple[list[dict], dict]:
    mode = args.mode
    if (mode is None) == (args.figure is None):
        raise UsageError("give exactly one of a bias mode (er, sbm, curve) or --figure")
    used = {k for k in ("lam", "a", "b", "lmin", "lmax") if getattr(args, k) is not None}
    allowed = {
        "er": {"lam"},
        "sbm": {"a", "b"},
        "curve": {"lmin", "lmax"},
        "er-bias": {"lmin", "lmax"},
        "sbm-grid": {"lmax"},
    }[mode or args.figure]
    if used - allowed:
        raise UsageError(f"flag(s) {sorted(used - allowed)} do not apply to {mode or args.figure}")
    n = args.n if args.n is not None else (2000 if args.figure and not args.full else 10000)
    reps = args.reps if args.reps is not None else (1000 if args.full else 200)
    rows = []
    params = {"mode": mode, "figure": args.figure, "n": n, "reps": reps, "points": args.points}
    if mode == "er":
        lam = 2.0 if args.lam is None else args.lam
        params["lambda"] = lam
        rows = er_bias_experiment(n, lam, reps, args.seed, args.threads).rows()
    elif mode == "sbm":
        a = 2.0 if args.a is None else args.a
        b = a if args.b is None else args.b
        params.update(a=a, b=b)
        if n % 2:
            raise UsageError("SBM needs an even n")
        rows = sbm_bias_experiment(n, a, b, reps, args.seed, args.threads).rows()
    elif mode == "curve" or args.figure == "er-bias":
        lmin = 1.3 if args.lmin is None else args.lmin
        lmax = 7.0 if args.lmax is None else args.lmax
        if not 1.0 < lmin < lmax:
            raise UsageError("need 1 < --lmin < --lmax")
        grid = np.linspace(lmin, lmax, args.points)
        params.update(lmin=lmin, lmax=lmax)
        for lam, eta, bias in bias_curve(grid):
            rows.append({"n": "", "lambda_or_a": lam, "b": "", "reps": 0, "stat": "eta",
                         "mean": eta, "sd": 0.0})
            rows.append({"n": "", "lambda_or_a": lam, "b": "", "reps": 0, "stat": "asymptotic_bias",
                         "mean": bias, "sd": 0.0})
            if args.figure == "er-bias":
                res = er_bias_experiment(n, float(lam), reps, args.seed, args.threads)
                rows.extend(r for r in res.rows() if r["stat"] in ("ratio", "giant_frac"))
    else:  # sbm-grid
        top = 12.0 if args.lmax is None else args.lmax
        vals = np.linspace(0.0, top, args.points)
        params["max_rate"] = top
        if n % 2:
            raise UsageError("SBM needs an even n")
        for a in vals:
            for b in vals:
                if a + b < 2.5:
                    continue
                res = sbm_bias_experiment(n, float(a), float(b), reps, args.seed, args.threads)
                rows.extend(r for r in res.rows() if r["stat"] in ("giant_frac", "rho", "degenerate"))
    return rows, params


def cmd_bias(args) -> int:
    rows, params = _bias_rows(args)
    out = _out_dir(args)
    write_csv(out / "bias.csv", rows, BIAS_CSV_COLUMNS, _digest(params), args.seed)
    return EXIT_OK


# ---------------------------------------------------------------- check


def _check_instance(args):
    if args.theta:
        theta = _read_theta(args.theta)
        if args.covariates:
            Z = read_covariates(args.covariates, warn=False)
        else:
            Z = EdgeCovariates.empty(theta.n)
        return [(theta, Z, None)]
    if args.instance == "tight":
        theta, Z, s = tight_instance(args.n or 5)
        return [(theta, Z, s)]
    if args.instance == "design":
        n = args.n or 150
        rng = make_rng(args.seed)
        theta = true_theta(n, SimStudyConfig().s0_for(n))
        return [(theta, sample_covariates(n, theta.p, rng), None)]
    # random sweep: n <= 30, |S| <= 6
    rng = make_rng(args.seed)
    out = []
    for _ in range(args.reps if args.reps is not None else 1000):
        n = int(rng.integers(3, 31))
        p = int(rng.integers(0, 3))
        k = min(int(rng.integers(1, 7)), 2 * n)
        s = np.sort(rng.choice(2 * n, size=k, replace=False))
        vt = np.zeros(2 * n)
        vt[s] = rng.uniform(0.1, 3.0, size=k)
        theta = Theta(vt[:n], vt[n:], rng.uniform(-4.0, 1.0), rng.normal(size=p))
        Z = EdgeCovariates(n, rng.uniform(-0.5, 0.5, size=(n * (n - 1), p)), warn=False)
        out.append((theta, Z, s))
    return out


def cmd_check(args) -> int:
    if args.theta and args.instance:
        raise UsageError("--theta and --instance are mutually exclusive")
    if args.covariates and not args.theta:
        raise UsageError("--covariates needs --theta")
    if not args.theta and not args.instance:
        args.instance = "tight"
    out = _out_dir(args)
    violations = 0
    with open(out / "conditions.jsonl", "w", encoding="utf-8") as fh:
        for theta, Z, s in _check_instance(args):
            if s is None:
                s = np.flatnonzero(theta.vartheta > 0)
            if args.check == "all":
                reports = check_all(theta, Z, s, probes=args.probes, seed=args.seed)
            elif args.check == "dependency":
                reports = [check_dependency(theta, Z, s)]
            elif args.check == "incoherence":
                reports = [check_incoherence(theta, Z, s)]
            else:
                s_plus = np.concatenate([s, np.arange(2 * theta.n, theta.dim)])
                reports = [check_compatibility(Z, theta.n, s_plus, args.probes, args.seed)]
            for rep in reports:
                violations += not rep.satisfied
                fh.write(rep.to_json() + "\n")
    print(f"condition violations: {violations}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- sample


def cmd_sample(args) -> int:
    n = args.n or 150
    s0 = args.s0 or SimStudyConfig().s0_for(n)
    rng = make_rng(args.seed)
    theta = true_theta(n, s0)
    Z = sample_covariates(n, theta.p, rng)
    g = sample_srgm(theta, Z, rng)
    out = _out_dir(args)
    write_edge_list(g, out / "edges.tsv")
    write_covariates(Z, out / "covariates.tsv")
    doc = _theta_doc(theta)
    doc["support"] = np.flatnonzero(theta.vartheta > 0).tolist()
    (out / "theta.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker processes (0 = all cores)")
    common.add_argument("--out-dir", default=".", help="output directory (default .)")
    common.add_argument("--full", action="store_true", help="reference-scale sizes and replications")
    common.add_argument("-v", "--verbose", action="store_true")

    tune = _Parser(add_help=False)
    tune.add_argument("--t", type=float, default=None, help="heuristic confidence parameter (default 3)")
    tune.add_argument("--strict-factor-8", action="store_true",
                      help="keep the factor 8 between the heuristic and the rescaled penalty")
    tune.add_argument("--level", type=float, default=None, help="confidence level (default 0.95)")

    parser = _Parser(prog="srgm", description="Sparse directed random graph model toolkit.")
    parser.add_argument("--version", action="version", version=f"srgm {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common, tune], help="fit an edge list")
    p.add_argument("edges", help="edge list file")
    p.add_argument("covariates", nargs="?", help="covariate file (optional)")
    p.add_argument("--tune", choices=["bic", "heuristic"], default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed penalty")
    p.add_argument("--tol-kkt", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=50_000)
    p.add_argument("--refit-weights", action="store_true",
                   help="experimental: information matrix from a refit on the selected support")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common, tune], help="run the simulation study")
    p.add_argument("--config", help="config file with a [study] section")
    p.add_argument("--n-grid", type=lambda s: [int(x) for x in s.split(",")], default=None)
    p.add_argument("--M", type=int, default=None, help="replications per n")
    p.add_argument("--tune", default=None, help="comma list of bic, heuristic")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bias", parents=[common], help="giant-component bias experiments")
    p.add_argument("mode", nargs="?", choices=["er", "sbm", "curve"])
    p.add_argument("--figure", choices=["er-bias", "sbm-grid"])
    p.add_argument("--n", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--lmin", type=float)
    p.add_argument("--lmax", type=float, help="upper lambda, or largest block rate for sbm-grid")
    p.add_argument("--reps", type=int)
    p.add_argument("--points", type=int, default=57, help="grid resolution")
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("check", parents=[common], help="matrix condition checks")
    p.add_argument("--check", choices=["all", "dependency", "incoherence", "compatibility"],
                   default="all")
    p.add_argument("--instance", choices=["tight", "design", "random"])
    p.add_argument("--theta", help="parameter JSON (as written by sample)")
    p.add_argument("--covariates", help="covariate file matching --theta")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int, help="instances for --instance random")
    p.add_argument("--probes", type=int, default=1000)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sample", parents=[common], help="write a synthetic dataset")
    p.add_argument("--n", type=int)
    p.add_argument("--s0", type=int)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    raw = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(raw)
    if args.verb == "fit":
        args.tune_given = args.tune is not None
        args.tune = args.tune or "bic"
    if args.verb != "simulate":
        # simulate lets its config file supply these
        for key, value in (("seed", 0), ("t", 3.0), ("level", 0.95)):
            if getattr(args, key, value) is None:
                setattr(args, key, value)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, NoSolutionError, InvalidProbabilityError) as exc:
        print(f"srgm {args.verb}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, DimensionMismatchError) as exc:
        print(f"srgm {args.verb}: bad input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"srgm {args.verb}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NotConvergedError as exc:
        print(f"srgm {args.verb}: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (NumericalFailureError, SingularMatrixError, FloatingPointError) as exc:
        print(f"srgm {args.verb}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
