"""Directed and undirected graph containers, components, and samplers.

Nodes are 0-based internally. The edge-list text format is 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import kernels
from .errors import DataFormatError, DimensionMismatchError, InvalidProbabilityError
from .rng import make_rng

__all__ = [
    "DirectedGraph",
    "UndirectedView",
    "ComponentDecomposition",
    "pair_index",
    "pair_nodes",
    "degrees",
    "components",
    "sample_er",
    "sample_sbm2",
    "sample_srgm",
    "write_edge_list",
    "read_edge_list",
]


def _frozen(arr, dtype=np.int64):
    arr = np.ascontiguousarray(arr, dtype=dtype)
    arr.setflags(write=False)
    return arr


def pair_index(i, j, n):
    """Position of the ordered pair (i, j) in the global lexicographic order."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    return i * (n - 1) + j - (j > i)


def pair_nodes(n):
    """Sender and receiver index arrays for all N ordered pairs, in order."""
    rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    return rows.astype(np.int64), cols.astype(np.int64)


def _csr(n, keys, values):
    counts = np.bincount(keys, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, values


class DirectedGraph:
    """Simple directed graph on ``n`` nodes (no self-loops, no multi-edges).

    Edges are kept sorted lexicographically; ``out_deg`` and ``in_deg`` are
    the vectors b and d. Instances are immutable.
    """

    __slots__ = ("n", "src", "dst", "out_deg", "in_deg", "_offsets", "_codes", "_indicator")

    def __init__(self, n: int, src, dst):
        n = int(n)
        if n < 1:
            raise ValueError("n must be positive")
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise DimensionMismatchError("src and dst must have equal length")
        if src.size and (src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n):
            raise ValueError("node index out of range")
        if np.any(src == dst):
            raise ValueError("self-loops are not allowed")
        codes = np.unique(src * n + dst)
        src, dst = codes // n, codes % n
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "src", _frozen(src))
        object.__setattr__(self, "dst", _frozen(dst))
        object.__setattr__(self, "out_deg", _frozen(np.bincount(src, minlength=n)))
        object.__setattr__(self, "in_deg", _frozen(np.bincount(dst, minlength=n)))
        offsets, _ = _csr(n, src, dst)
        object.__setattr__(self, "_offsets", _frozen(offsets))
        object.__setattr__(self, "_codes", None)
        object.__setattr__(self, "_indicator", None)

    def __setattr__(self, name, value):
        raise AttributeError("DirectedGraph is immutable")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "DirectedGraph":
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        return cls(n, edges[:, 0], edges[:, 1])

    @classmethod
    def from_adjacency(cls, adj) -> "DirectedGraph":
        adj = np.asarray(adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DimensionMismatchError("adjacency must be square")
        if np.any(np.diag(adj)):
            raise ValueError("self-loops are not allowed")
        src, dst = np.nonzero(adj)
        return cls(adj.shape[0], src, dst)

    @classmethod
    def from_pair_indicator(cls, n: int, a_ind) -> "DirectedGraph":
        a_ind = np.asarray(a_ind)
        if a_ind.shape != (n * (n - 1),):
            raise DimensionMismatchError(f"indicator must have length {n * (n - 1)}")
        rows, cols = pair_nodes(n)
        hit = a_ind.astype(bool)
        return cls(n, rows[hit], cols[hit])

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1)

    @property
    def n_edges(self) -> int:
        return int(self.src.shape[0])

    def out_neighbors(self, i: int) -> np.ndarray:
        return self.dst[self._offsets[i] : self._offsets[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        if self._codes is None:
            object.__setattr__(self, "_codes", frozenset((self.src * self.n + self.dst).tolist()))
        return int(i) * self.n + int(j) in self._codes

    def pair_indicator(self) -> np.ndarray:
        """Float vector A of length N in the global pair order (cached)."""
        if self._indicator is None:
            a = np.zeros(self.n_pairs)
            a[pair_index(self.src, self.dst, self.n)] = 1.0
            a.setflags(write=False)
            object.__setattr__(self, "_indicator", a)
        return self._indicator

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=np.int8)
        adj[self.src, self.dst] = 1
        return adj

    def density(self) -> float:
        return self.n_edges / self.n_pairs if self.n > 1 else 0.0

    def symmetrize(self) -> "UndirectedView":
        return UndirectedView(self.n, self.src, self.dst)

    def __eq__(self, other):
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
        )

    def __hash__(self):
        return hash((self.n, self.src.tobytes(), self.dst.tobytes()))

    def __repr__(self):
        return f"DirectedGraph(n={self.n}, edges={self.n_edges})"


class UndirectedView:
    """Undirected simple graph stored as sorted pairs u < v plus CSR lists."""

    __slots__ = ("n", "u", "v", "_offsets", "_nbrs")

    def __init__(self, n: int, u, v):
        n = int(n)
        u = np.asarray(u, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=np.int64).ravel()
        if u.shape != v.shape:
            raise DimensionMismatchError("u and v must have equal length")
        if np.any(u == v):
            raise ValueError("self-loops are not allowed")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        codes = np.unique(lo * n + hi)
        lo, hi = codes // n, codes % n
        self.n = n
        self.u = _frozen(lo)
        self.v = _frozen(hi)
        ends = np.concatenate([lo, hi])
        other = np.concatenate([hi, lo])
        order = np.lexsort((other, ends))
        offsets, _ = _csr(n, ends, None)
        self._offsets = _frozen(offsets)
        self._nbrs = _frozen(other[order])

    @classmethod
    def from_edges(cls, n: int, edges) -> "UndirectedView":
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        return cls(n, edges[:, 0], edges[:, 1])

    @property
    def n_edges(self) -> int:
        return int(self.u.shape[0])

    def neighbors(self, i: int) -> np.ndarray:
        return self._nbrs[self._offsets[i] : self._offsets[i + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self._offsets)

    def __repr__(self):
        return f"UndirectedView(n={self.n}, edges={self.n_edges})"


@dataclass(frozen=True)
class ComponentDecomposition:
    """Connected components; ids ordered by smallest member node."""

    labels: np.ndarray
    sizes: np.ndarray
    giant_id: int

    @property
    def giant_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.labels == self.giant_id)

    @property
    def giant_size(self) -> int:
        return int(self.sizes[self.giant_id])


def degrees(g: DirectedGraph):
    """Return (out-degrees b, in-degrees d, total d_plus)."""
    return g.out_deg.copy(), g.in_deg.copy(), int(g.in_deg.sum())


def components(g) -> ComponentDecomposition:
    """Connected components under undirected reachability.

    Component ids follow the smallest node index they contain, so the giant
    (``np.argmax`` of sizes) breaks ties toward the smallest minimum index.
    """
    if isinstance(g, DirectedGraph):
        g = g.symmetrize()
    roots = kernels.component_roots(g.n, np.asarray(g.u), np.asarray(g.v))
    # first occurrence of each root happens at that component's smallest node
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    rank = np.empty_like(first)
    rank[np.argsort(first)] = np.arange(first.size)
    labels = rank[inverse]
    sizes = np.bincount(labels)
    return ComponentDecomposition(
        labels=_frozen(labels), sizes=_frozen(sizes), giant_id=int(np.argmax(sizes))
    )


# ------------------------------------------------------------------ samplers


def _row_offsets(m):
    i = np.arange(m, dtype=np.int64)
    return i * m - i * (i + 1) // 2


def _sample_upper_pairs(m, prob, rng):
    """Independent Bernoulli(prob) over the C(m, 2) unordered pairs of range(m)."""
    total = m * (m - 1) // 2
    if total == 0 or prob <= 0.0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    count = rng.binomial(total, prob)
    idx = np.sort(rng.choice(total, size=count, replace=False))
    offsets = _row_offsets(m)
    i = np.searchsorted(offsets, idx, side="right") - 1
    j = idx - offsets[i] + i + 1
    return i, j


def _sample_bipartite_pairs(h1, h2, prob, rng):
    total = h1 * h2
    if total == 0 or prob <= 0.0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    count = rng.binomial(total, prob)
    idx = np.sort(rng.choice(total, size=count, replace=False))
    return idx // h2, idx % h2


def _check_prob(value, name):
    if not (0.0 <= value <= 1.0) or not np.isfinite(value):
        raise InvalidProbabilityError(f"{name} = {value} is not a probability")


def sample_er(n: int, lam: float, seed=None) -> UndirectedView:
    """Erdos-Renyi graph with edge probability ``lam / n``.

    The edge count is drawn from its binomial law and the edge positions
    uniformly without replacement, which gives the same law as independent
    coin flips per pair at O(n + m) cost.
    """
    if lam < 0 or lam >= n:
        raise InvalidProbabilityError(f"need 0 <= lambda < n, got lambda={lam}, n={n}")
    rng = make_rng(seed)
    u, v = _sample_upper_pairs(n, lam / n, rng)
    return UndirectedView(n, u, v)


def sample_sbm2(n: int, a: float, b: float, seed=None):
    """Symmetric two-block SBM; nodes ``[0, n/2)`` form block 0.

    Returns the graph and the 0/1 membership vector.
    """
    if n % 2:
        raise ValueError("n must be even")
    _check_prob(a / n, "a/n")
    _check_prob(b / n, "b/n")
    rng = make_rng(seed)
    h = n // 2
    u1, v1 = _sample_upper_pairs(h, a / n, rng)
    u2, v2 = _sample_upper_pairs(h, a / n, rng)
    u3, v3 = _sample_bipartite_pairs(h, h, b / n, rng)
    u = np.concatenate([u1, u2 + h, u3])
    v = np.concatenate([v1, v2 + h, v3 + h])
    membership = np.repeat(np.array([0, 1], dtype=np.int64), h)
    return UndirectedView(n, u, v), membership


def sample_srgm(theta, Z, seed=None) -> DirectedGraph:
    """Draw a directed graph with independent logistic link probabilities."""
    from .model import link_probabilities

    p = link_probabilities(theta, Z)
    rng = make_rng(seed)
    hit = rng.random(p.shape[0]) < p
    return DirectedGraph.from_pair_indicator(theta.n, hit)


# ------------------------------------------------------------------- file IO


def write_edge_list(g: DirectedGraph, path) -> None:
    lines = [f"# n={g.n}"]
    lines.extend(f"{i + 1}\t{j + 1}" for i, j in zip(g.src.tolist(), g.dst.tolist()))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header(line, lineno, keys):
    if not line.startswith("#"):
        raise DataFormatError(f"missing header '# {' '.join(k + '=<int>' for k in keys)}'", lineno)
    fields = {}
    for tok in line[1:].split():
        if "=" not in tok:
            raise DataFormatError(f"bad header token {tok!r}", lineno)
        key, _, val = tok.partition("=")
        try:
            fields[key] = int(val)
        except ValueError:
            raise DataFormatError(f"header value {tok!r} is not an integer", lineno) from None
    missing = [k for k in keys if k not in fields]
    if missing:
        raise DataFormatError(f"header lacks {', '.join(missing)}", lineno)
    return fields


def read_edge_list(path) -> DirectedGraph:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("empty file", 1)
    n = _parse_header(lines[0].strip(), 1, ["n"])["n"]
    if n < 1:
        raise DataFormatError("n must be positive", 1)
    src, dst = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataFormatError(f"expected 'i<TAB>j', got {raw!r}", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataFormatError(f"non-integer node index in {raw!r}", lineno) from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise DataFormatError(f"node index out of range 1..{n}", lineno)
        if i == j:
            raise DataFormatError("self-loop", lineno)
        src.append(i - 1)
        dst.append(j - 1)
    return DirectedGraph(n, src, dst)
