"""Parameters, link probabilities, likelihood, gradient and Gram matrices.

The design matrix D = [X_out | X_in | 1 | Z] is never stored. Its structure
(two indicator blocks, a ones column and the covariate block) is used
directly, so memory stays O(N p).

Parameter vectors are laid out as ``[alpha (n), beta (n), mu, gamma (p)]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DataFormatError, DimensionMismatchError, InvalidPairError
from .graph import DirectedGraph, pair_index, pair_nodes

__all__ = [
    "Theta",
    "RescaledTheta",
    "EdgeCovariates",
    "SparsityProfile",
    "CovariateCenteringWarning",
    "sigmoid",
    "softplus",
    "link_prob",
    "link_probabilities",
    "nll",
    "nll_rescaled",
    "nll_grad",
    "rescale",
    "unrescale",
    "rescale_penalty",
    "gram_adjusted",
    "max_predictor",
    "write_covariates",
    "read_covariates",
]


class CovariateCenteringWarning(UserWarning):
    """Covariate column means are far from zero relative to their bound."""


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def softplus(x):
    """log(1 + e^x) evaluated without overflow."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


@dataclass(frozen=True)
class Theta:
    """Full parameter: sender effects, receiver effects, density, covariate weights."""

    alpha: np.ndarray
    beta: np.ndarray
    mu: float
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).ravel()
        beta = np.array(self.beta, dtype=float).ravel()
        gamma = np.array(self.gamma, dtype=float).ravel()
        if alpha.shape != beta.shape:
            raise DimensionMismatchError("alpha and beta must have the same length")
        vec = np.concatenate([alpha, beta, [float(self.mu)], gamma])
        if not np.all(np.isfinite(vec)):
            raise ValueError("parameters must be finite")
        if np.any(alpha < 0) or np.any(beta < 0):
            raise ValueError("alpha and beta must be nonnegative")
        for arr in (alpha, beta, gamma):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "gamma", gamma)

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def p(self) -> int:
        return self.gamma.shape[0]

    @property
    def dim(self) -> int:
        return 2 * self.n + 1 + self.p

    @property
    def vartheta(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta])

    @property
    def xi(self) -> np.ndarray:
        return np.concatenate([[self.mu], self.gamma])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta, [self.mu], self.gamma])

    @classmethod
    def from_vector(cls, vec, n: int) -> "Theta":
        vec = np.asarray(vec, dtype=float)
        if vec.shape[0] < 2 * n + 1:
            raise DimensionMismatchError("vector too short for n")
        return cls(vec[:n], vec[n : 2 * n], vec[2 * n], vec[2 * n + 1 :])

    @classmethod
    def zeros(cls, n: int, p: int = 0, mu: float = 0.0) -> "Theta":
        return cls(np.zeros(n), np.zeros(n), mu, np.zeros(p))


@dataclass(frozen=True)
class RescaledTheta:
    """theta_bar = (vartheta / sqrt(n), mu, gamma)."""

    theta_bar: np.ndarray
    n: int

    @property
    def p(self) -> int:
        return self.theta_bar.shape[0] - 2 * self.n - 1


def rescale(theta: Theta) -> RescaledTheta:
    vec = theta.to_vector()
    vec[: 2 * theta.n] /= math.sqrt(theta.n)
    return RescaledTheta(vec, theta.n)


def unrescale(theta_bar: RescaledTheta) -> Theta:
    vec = np.array(theta_bar.theta_bar, dtype=float)
    vec[: 2 * theta_bar.n] *= math.sqrt(theta_bar.n)
    return Theta.from_vector(vec, theta_bar.n)


def rescale_penalty(lam: float, n: int) -> float:
    """Penalty of the rescaled problem: lambda_bar = sqrt(n) * lambda."""
    return math.sqrt(n) * lam


class EdgeCovariates:
    """Covariate vectors Z_ij, one row per ordered pair in lexicographic order."""

    def __init__(self, n: int, values=None, *, warn: bool = True):
        self.n = int(n)
        n_pairs = self.n * (self.n - 1)
        if values is None:
            values = np.zeros((n_pairs, 0))
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != n_pairs:
            raise DimensionMismatchError(f"covariates need {n_pairs} rows, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("covariates must be finite")
        self.values = np.ascontiguousarray(values)
        self.values.setflags(write=False)
        self.p = values.shape[1]
        self.c_bound = float(np.abs(values).max()) if values.size else 0.0
        self.means = values.mean(axis=0) if values.size else np.zeros(self.p)
        self.uncentered = bool(self.p and np.any(np.abs(self.means) > 0.05 * self.c_bound))
        if warn and self.uncentered:
            warnings.warn(
                f"covariate means {self.means} exceed 5% of the bound {self.c_bound:g}; "
                "the theory assumes centred covariates",
                CovariateCenteringWarning,
                stacklevel=2,
            )

    @classmethod
    def from_tensor(cls, tensor, **kw) -> "EdgeCovariates":
        """Build from an (n, n, p) array; diagonal entries are ignored."""
        tensor = np.asarray(tensor, dtype=float)
        if tensor.ndim == 2:
            tensor = tensor[:, :, None]
        n = tensor.shape[0]
        mask = ~np.eye(n, dtype=bool)
        return cls(n, tensor[mask], **kw)

    @classmethod
    def empty(cls, n: int) -> "EdgeCovariates":
        return cls(n, np.zeros((n * (n - 1), 0)))

    def row(self, i: int, j: int) -> np.ndarray:
        return self.values[int(pair_index(i, j, self.n))]

    def second_moment(self) -> np.ndarray:
        """Empirical Z^T Z / N."""
        return self.values.T @ self.values / self.values.shape[0]

    def dot(self, gamma) -> np.ndarray:
        if self.p == 0:
            return np.zeros(self.values.shape[0])
        return self.values @ np.asarray(gamma, dtype=float)


@dataclass(frozen=True)
class SparsityProfile:
    """Link-probability floor rho_n and the predictor cap r_n = -logit(rho_n)."""

    rho_n: float
    r_n: float

    @classmethod
    def from_rho(cls, rho_n: float) -> "SparsityProfile":
        if not 0.0 < rho_n <= 0.5:
            raise ValueError("rho_n must lie in (0, 1/2]")
        return cls(rho_n, math.log((1.0 - rho_n) / rho_n))

    @classmethod
    def from_r(cls, r_n: float) -> "SparsityProfile":
        if r_n < 0:
            raise ValueError("r_n must be nonnegative")
        return cls(1.0 / (1.0 + math.exp(r_n)), r_n)

    @classmethod
    def implied(cls, theta: Theta, Z: EdgeCovariates) -> "SparsityProfile":
        return cls.from_r(max_predictor(theta, Z))


def _check(theta: Theta, Z: EdgeCovariates, g: DirectedGraph | None = None):
    if Z.n != theta.n or Z.p != theta.p:
        raise DimensionMismatchError(
            f"theta has (n={theta.n}, p={theta.p}) but covariates have (n={Z.n}, p={Z.p})"
        )
    if g is not None and g.n != theta.n:
        raise DimensionMismatchError(f"graph has n={g.n}, theta has n={theta.n}")


def linear_predictor(theta: Theta, Z: EdgeCovariates) -> np.ndarray:
    _check(theta, Z)
    return kernels.predictor(theta.alpha, theta.beta, theta.mu, Z.dot(theta.gamma))


def link_prob(theta: Theta, Z: EdgeCovariates, i: int, j: int) -> float:
    if i == j:
        raise InvalidPairError("link probability undefined for i == j")
    _check(theta, Z)
    eta = theta.alpha[i] + theta.beta[j] + theta.mu
    if theta.p:
        eta += float(Z.row(i, j) @ theta.gamma)
    return float(sigmoid(eta))


def link_probabilities(theta: Theta, Z: EdgeCovariates) -> np.ndarray:
    return sigmoid(linear_predictor(theta, Z))


def nll(theta: Theta, g: DirectedGraph, Z: EdgeCovariates) -> float:
    """Negative log-likelihood L(alpha, beta, mu, gamma)."""
    _check(theta, Z, g)
    return float(
        kernels.loss_value(
            theta.alpha, theta.beta, theta.mu, Z.dot(theta.gamma), g.pair_indicator()
        )
    )


def nll_rescaled(theta_bar: RescaledTheta, g: DirectedGraph, Z: EdgeCovariates) -> float:
    """L_bar(theta_bar), using the blown-up indicator columns sqrt(n) X."""
    n = theta_bar.n
    vec = theta_bar.theta_bar
    s = math.sqrt(n)
    rows, cols = pair_nodes(n)
    eta = s * vec[:n][rows] + s * vec[n : 2 * n][cols] + vec[2 * n] + Z.dot(vec[2 * n + 1 :])
    a = g.pair_indicator()
    return float(np.sum(softplus(eta)) - a @ eta)


def nll_grad(theta: Theta, g: DirectedGraph, Z: EdgeCovariates) -> np.ndarray:
    """Gradient of L; equals D^T (p - A) with D the virtual design."""
    _check(theta, Z, g)
    _, g_a, g_b, g_mu, resid = kernels.loss_and_grad(
        theta.alpha, theta.beta, theta.mu, Z.dot(theta.gamma), g.pair_indicator()
    )
    g_gamma = Z.values.T @ resid if Z.p else np.zeros(0)
    return np.concatenate([g_a, g_b, [g_mu], g_gamma])


def gram_adjusted(Z: EdgeCovariates, n: int | None = None, expectation_mode: str = "empirical",
                  second_moment=None) -> np.ndarray:
    """Sample-size adjusted Gram matrix T^-1 D^T D T^-1 from closed-form blocks.

    ``expectation_mode="population-zero-mean"`` sets every first-moment block
    of Z to zero and uses ``second_moment`` (default: the empirical
    Z^T Z / N) for the covariate block.
    """
    n = Z.n if n is None else int(n)
    if n < 2:
        raise ValueError("n must be at least 2")
    if Z.n != n:
        raise DimensionMismatchError("covariates do not match n")
    if expectation_mode not in ("empirical", "population-zero-mean"):
        raise ValueError(f"unknown expectation_mode {expectation_mode!r}")
    p = Z.p
    N = n * (n - 1)
    dim = 2 * n + 1 + p
    G = np.zeros((dim, dim))
    off = (np.ones((n, n)) - np.eye(n)) / (n - 1)
    G[:n, :n] = np.eye(n)
    G[n : 2 * n, n : 2 * n] = np.eye(n)
    G[:n, n : 2 * n] = off
    G[n : 2 * n, :n] = off
    G[: 2 * n, 2 * n] = G[2 * n, : 2 * n] = 1.0 / math.sqrt(n)
    G[2 * n, 2 * n] = 1.0
    if p:
        mom2 = Z.second_moment() if second_moment is None else np.asarray(second_moment, float)
        G[2 * n + 1 :, 2 * n + 1 :] = mom2
        if expectation_mode == "empirical":
            tensor = np.zeros((n, n, p))
            tensor[~np.eye(n, dtype=bool)] = Z.values
            scale = 1.0 / math.sqrt((n - 1) * N)
            cross = np.vstack([tensor.sum(axis=1), tensor.sum(axis=0)]) * scale
            G[: 2 * n, 2 * n + 1 :] = cross
            G[2 * n + 1 :, : 2 * n] = cross.T
            G[2 * n, 2 * n + 1 :] = G[2 * n + 1 :, 2 * n] = Z.means
    return G


def max_predictor(theta: Theta, Z: EdgeCovariates) -> float:
    """max over ordered pairs of |alpha_i + beta_j + mu + gamma^T Z_ij|."""
    eta = linear_predictor(theta, Z)
    return float(np.abs(eta).max()) if eta.size else 0.0


def max_predictor_pair(theta: Theta, Z: EdgeCovariates) -> tuple[int, int]:
    eta = linear_predictor(theta, Z)
    k = int(np.argmax(np.abs(eta)))
    rows, cols = pair_nodes(theta.n)
    return int(rows[k]), int(cols[k])


# ------------------------------------------------------------------- file IO


def write_covariates(Z: EdgeCovariates, path) -> None:
    rows, cols = pair_nodes(Z.n)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# n={Z.n} p={Z.p}\n")
        for k in range(rows.shape[0]):
            vals = "".join("\t" + repr(float(x)) for x in Z.values[k])
            fh.write(f"{rows[k] + 1}\t{cols[k] + 1}{vals}\n")


def read_covariates(path, *, warn: bool = True) -> EdgeCovariates:
    from .graph import _parse_header

    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("empty file", 1)
    head = _parse_header(lines[0].strip(), 1, ["n", "p"])
    n, p = head["n"], head["p"]
    if n < 2 or p < 0:
        raise DataFormatError("need n >= 2 and p >= 0", 1)
    N = n * (n - 1)
    values = np.zeros((N, p))
    seen = np.zeros(N, dtype=bool)
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 + p:
            raise DataFormatError(f"expected {2 + p} tab-separated fields, got {len(parts)}", lineno)
        try:
            i, j = int(parts[0]) - 1, int(parts[1]) - 1
            vals = [float(x) for x in parts[2:]]
        except ValueError:
            raise DataFormatError(f"unparsable row {raw!r}", lineno) from None
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise DataFormatError(f"invalid pair ({i + 1}, {j + 1})", lineno)
        k = int(pair_index(i, j, n))
        if seen[k]:
            raise DataFormatError(f"duplicate pair ({i + 1}, {j + 1})", lineno)
        seen[k] = True
        values[k] = vals
    if not seen.all():
        k = int(np.flatnonzero(~seen)[0])
        rows, cols = pair_nodes(n)
        raise DataFormatError(
            f"covariates incomplete: {int((~seen).sum())} of {N} pairs missing, "
            f"first missing ({rows[k] + 1}, {cols[k] + 1})"
        )
    return EdgeCovariates(n, values, warn=warn)
