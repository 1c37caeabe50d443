"""Configuration-model random graphs and expansion measurement."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DegreeInfeasible, Disconnected, OddStubCount, RetryExhausted, ValidationError
from .randomness import make_rng

MAX_RESAMPLE_ROUNDS = 100


@dataclass(frozen=True, eq=False)
class Topology:
    """Undirected multigraph of ``n`` routers with ``d`` uplinks each.

    ``edges`` is an ``(m, 2)`` array of node ids and ``slots`` holds the port
    slot used at each endpoint. A topology resolved from a cabling plan may
    leave some ports unused, so ``d`` is an upper bound there.
    """

    n: int
    d: int
    edges: np.ndarray
    seed: int = 0
    simple: bool = True
    slots: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def degrees(self) -> np.ndarray:
        """Endpoint count per node; a self-loop contributes two."""
        return np.bincount(self.edges.ravel(), minlength=self.n)

    @cached_property
    def _csr(self):
        """Unique-neighbour CSR with multiplicities, self-loops dropped."""
        e = self.edges[self.edges[:, 0] != self.edges[:, 1]]
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        key = np.unique(src * self.n + dst, return_counts=True)
        pairs, mult = key
        u = pairs // self.n
        v = pairs % self.n
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(u, minlength=self.n), out=indptr[1:])
        return indptr, v.astype(np.int64), mult.astype(np.int64)

    @property
    def indptr(self) -> np.ndarray:
        return self._csr[0]

    @property
    def indices(self) -> np.ndarray:
        return self._csr[1]

    @property
    def multiplicity(self) -> np.ndarray:
        return self._csr[2]

    def neighbors(self, u: int) -> np.ndarray:
        """Sorted distinct neighbours of ``u`` (self excluded)."""
        indptr, indices, _ = self._csr
        return indices[indptr[u]:indptr[u + 1]]

    def arc_id(self, u: int, v: int) -> int:
        """Index of the directed arc ``u -> v`` in the CSR arrays, or -1."""
        indptr, indices, _ = self._csr
        lo, hi = indptr[u], indptr[u + 1]
        k = lo + np.searchsorted(indices[lo:hi], v)
        if k < hi and indices[k] == v:
            return int(k)
        return -1

    @cached_property
    def adjacency_matrix(self) -> sp.csr_matrix:
        """Symmetric sparse adjacency counting parallel edges and loops (twice)."""
        e = self.edges
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def self_loop_count(self) -> int:
        return int(np.count_nonzero(self.edges[:, 0] == self.edges[:, 1]))

    def multi_edge_count(self) -> int:
        """Number of surplus copies among parallel non-loop edges."""
        e = self.edges[self.edges[:, 0] != self.edges[:, 1]]
        key = np.minimum(e[:, 0], e[:, 1]) * self.n + np.maximum(e[:, 0], e[:, 1])
        return int(len(key) - len(np.unique(key)))

    def edge_multiset(self) -> list[tuple[int, int]]:
        e = np.sort(self.edges, axis=1)
        return sorted(map(tuple, e.tolist()))

    def is_connected(self) -> bool:
        ncomp, _ = connected_components(self.adjacency_matrix, directed=False)
        return ncomp == 1

    def validate(self, regular: bool = True) -> None:
        """Raise ``ValidationError`` if the documented invariants fail."""
        e = self.edges
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise ValidationError("edge endpoint out of range")
        deg = self.degrees
        if int(deg.sum()) != 2 * len(e):
            raise ValidationError("degree sum does not match edge count")
        if regular and not np.all(deg == self.d):
            bad = np.flatnonzero(deg != self.d)
            raise ValidationError(f"nodes with degree != {self.d}: {bad[:10].tolist()}")
        if np.any(deg > self.d):
            raise ValidationError("node degree exceeds uplink count")
        if self.simple and (self.self_loop_count() or self.multi_edge_count()):
            raise ValidationError("simple topology has self-loops or parallel edges")


def _bad_pair_mask(u: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    """Mark self-loops and every copy but the first of duplicate pairs."""
    bad = u == v
    key = np.minimum(u, v) * n + np.maximum(u, v)
    _, first = np.unique(key, return_index=True)
    dup = np.ones(len(key), dtype=bool)
    dup[first] = False
    return bad | dup


def build_configuration_graph(n: int, d: int, seed: int, simple: bool = True,
                              max_rounds: int = MAX_RESAMPLE_ROUNDS) -> Topology:
    """Pair ``n*d`` half-edges by a seeded uniform permutation.

    With ``simple`` set, each resampling round releases the half-edges of every
    self-loop and duplicate edge together with as many randomly chosen good
    pairs, and re-pairs that pool by a fresh permutation. Rounds repeat until
    the multigraph is simple or ``max_rounds`` is exhausted.
    """
    n, d = int(n), int(d)
    if n < 1 or d < 1:
        raise DegreeInfeasible("n and d must be positive")
    if (n * d) % 2:
        raise OddStubCount(f"n*d = {n * d} is odd")
    if d >= n:
        raise DegreeInfeasible(f"degree {d} must be below node count {n}")
    rng = make_rng(seed)
    stubs = rng.permutation(n * d).reshape(-1, 2)
    if simple:
        for _ in range(max_rounds):
            bad = _bad_pair_mask(stubs[:, 0] // d, stubs[:, 1] // d, n)
            nbad = int(bad.sum())
            if nbad == 0:
                break
            good_idx = np.flatnonzero(~bad)
            extra = rng.choice(good_idx, size=min(len(good_idx), max(nbad, 2)), replace=False)
            redo = np.concatenate([np.flatnonzero(bad), extra])
            pool = stubs[redo].ravel()
            stubs[redo] = rng.permutation(pool).reshape(-1, 2)
        else:
            if _bad_pair_mask(stubs[:, 0] // d, stubs[:, 1] // d, n).any():
                raise RetryExhausted(f"no simple graph after {max_rounds} rounds")
    edges = stubs // d
    slots = stubs % d
    return Topology(n=n, d=d, edges=edges, seed=int(seed), simple=bool(simple), slots=slots)


def normalized_operator(topo: Topology) -> sp.csr_matrix:
    """``D^{-1/2} A D^{-1/2}``; equals ``A/d`` on a d-regular graph."""
    a = topo.adjacency_matrix
    deg = np.asarray(a.sum(axis=1)).ravel()
    if np.any(deg == 0):
        raise Disconnected("graph has isolated nodes")
    s = sp.diags(1.0 / np.sqrt(deg))
    return (s @ a @ s).tocsr()


def spectral_gap(topo: Topology, tolerance: float = 1e-6, max_iter: int = 20000,
                 stable_iters: int = 10) -> float:
    """Second-largest eigenvalue magnitude of the degree-normalised adjacency.

    Power iteration with the top eigenvector projected out after every
    multiply. Stops once the relative change of the estimate stays below
    ``tolerance`` for ``stable_iters`` consecutive iterations.
    """
    if not topo.is_connected():
        raise Disconnected("second eigenvalue is 1: topology is disconnected")
    m = normalized_operator(topo)
    deg = np.asarray(topo.adjacency_matrix.sum(axis=1)).ravel()
    top = np.sqrt(deg)
    top /= np.linalg.norm(top)
    x = make_rng(topo.seed, "spectral").standard_normal(topo.n)
    x -= top * (top @ x)
    norm = np.linalg.norm(x)
    if norm == 0.0:
        return 0.0
    x /= norm
    prev = None
    calm = 0
    for _ in range(max_iter):
        y = m @ x
        y -= top * (top @ y)
        est = float(np.linalg.norm(y))
        if est == 0.0:
            return 0.0
        x = y / est
        if prev is not None and abs(est - prev) <= tolerance * max(est, 1e-300):
            calm += 1
            if calm >= stable_iters:
                break
        else:
            calm = 0
        prev = est
    return est


def save_topology(topo: Topology, path) -> None:
    lines = [f"{topo.n} {topo.d} {topo.seed} {int(topo.simple)}"]
    lines.extend(f"{u} {v}" for u, v in topo.edges.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def load_topology(path, regular: bool = True) -> Topology:
    """Read the text format written by :func:`save_topology` and validate it."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 4:
        raise ValidationError("missing 'n d seed simple' header")
    n, d, seed, simple = (int(x) for x in rows[0])
    try:
        edges = np.array([[int(a), int(b)] for a, b in rows[1:]], dtype=np.int64).reshape(-1, 2)
    except ValueError as exc:
        raise ValidationError(f"malformed edge line: {exc}") from exc
    topo = Topology(n=n, d=d, edges=edges, seed=seed, simple=bool(simple))
    topo.validate(regular=regular)
    return topo
