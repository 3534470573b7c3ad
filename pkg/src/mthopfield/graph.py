"""Sparse symmetric weighted graph storage and labeled/unlabeled submatrix views.

The adjacency is kept as read-only per-row neighbor lists (a CSR layout):
every quantity the learning and inference code needs is a row-local sum,
so row slices are the access pattern worth optimizing for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

EdgeRecord = tuple[str, str, float]


class SparseRows:
    """Immutable CSR-style matrix with fast per-row access.

    Arrays are locked after construction; instances are safe to share
    between concurrent readers.
    """

    __slots__ = ("n_rows", "n_cols", "indptr", "indices", "data")

    def __init__(self, n_rows: int, n_cols: int, indptr: np.ndarray,
                 indices: np.ndarray, data: np.ndarray):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        for arr in (self.indptr, self.indices, self.data):
            arr.setflags(write=False)

    @classmethod
    def from_entries(cls, n_rows: int, n_cols: int,
                     entries: Iterable[tuple[int, int, float]]) -> "SparseRows":
        """Build from (row, col, value) triples; duplicates are the caller's bug."""
        triples = sorted(entries)
        rows = np.fromiter((t[0] for t in triples), dtype=np.int64, count=len(triples))
        indices = np.fromiter((t[1] for t in triples), dtype=np.int64, count=len(triples))
        data = np.fromiter((t[2] for t in triples), dtype=np.float64, count=len(triples))
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n_rows, n_cols, indptr, indices, data)

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor indices and weights of row i (read-only slices)."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        """Row sums of data * vec[indices].

        Uses a cumulative-sum segment reduction: deterministic summation
        order and correct (zero) results for empty rows.
        """
        prod = self.data * np.asarray(vec, dtype=np.float64)[self.indices]
        csum = np.concatenate((np.zeros(1), np.cumsum(prod)))
        return csum[self.indptr[1:]] - csum[self.indptr[:-1]]

    def row_sums(self) -> np.ndarray:
        csum = np.concatenate((np.zeros(1), np.cumsum(self.data)))
        return csum[self.indptr[1:]] - csum[self.indptr[:-1]]

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for i in range(self.n_rows):
            idx, w = self.row(i)
            out[i, idx] = w
        return out


def _check_weight(record: EdgeRecord) -> float:
    a, b, w = record
    try:
        w = float(w)
    except (TypeError, ValueError):
        raise InputError(f"non-numeric weight in edge record ({a!r}, {b!r}, {w!r})")
    if not math.isfinite(w):
        raise InputError(f"non-finite weight in edge record ({a!r}, {b!r}, {w!r})")
    if w < 0.0:
        raise InputError(f"negative weight in edge record ({a!r}, {b!r}, {w})")
    return w


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected weighted graph over string-identified nodes.

    Invariants enforced at load time: symmetry, non-negative weights and a
    zero diagonal (self-interactions enter the model only through the task
    similarity matrix, never through the adjacency).
    """

    node_ids: tuple[str, ...]
    adj: SparseRows
    _index: dict[str, int] = field(repr=False, default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def index_of(self, node_id: str) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise InputError(f"unknown node id {node_id!r}")

    def weight(self, i: int, j: int) -> float:
        idx, w = self.adj.row(i)
        pos = np.searchsorted(idx, j)
        if pos < idx.size and idx[pos] == j:
            return float(w[pos])
        return 0.0

    def weighted_degree(self, i: int) -> float:
        if not 0 <= i < self.n:
            raise InputError(f"node index {i} out of range [0, {self.n})")
        _, w = self.adj.row(i)
        return float(np.sum(w))

    def total_edge_weight(self) -> float:
        # Each undirected edge is stored twice.
        return float(np.sum(self.adj.data)) / 2.0

    def submatrix(self, rows: Sequence[int], cols: Sequence[int]) -> SparseRows:
        """Read-only view with entry (i, j) = w[rows[i], cols[j]]."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        for name, sel in (("rows", rows), ("cols", cols)):
            if sel.size and (sel.min() < 0 or sel.max() >= self.n):
                raise InputError(f"{name} selection out of range [0, {self.n})")
            if np.unique(sel).size != sel.size:
                raise InputError(f"{name} selection contains duplicate indices")
        lookup = np.full(self.n, -1, dtype=np.int64)
        lookup[cols] = np.arange(cols.size)
        entries = []
        for local_r, g in enumerate(rows):
            idx, w = self.adj.row(int(g))
            local_c = lookup[idx]
            keep = local_c >= 0
            for c, v in zip(local_c[keep], w[keep]):
                entries.append((local_r, int(c), float(v)))
        return SparseRows.from_entries(rows.size, cols.size, entries)


def load_graph(edge_records: Iterable[EdgeRecord]) -> WeightedGraph:
    """Build a WeightedGraph from (id_a, id_b, weight) records.

    Duplicate records for the same unordered pair are merged only when the
    weights agree exactly; disagreeing duplicates, negative weights and
    self-loops are rejected. Node indices follow the sorted order of the
    external ids.
    """
    weights: dict[tuple[str, str], float] = {}
    nodes: set[str] = set()
    for record in edge_records:
        a, b, _ = record
        a, b = str(a), str(b)
        w = _check_weight(record)
        if a == b:
            raise InputError(
                f"self-loop record ({a!r}, {b!r}, {w}): the diagonal must stay zero")
        key = (a, b) if a < b else (b, a)
        if key in weights and weights[key] != w:
            raise InputError(
                f"conflicting duplicate weights for edge ({key[0]!r}, {key[1]!r}): "
                f"{weights[key]} vs {w}")
        weights[key] = w
        nodes.add(a)
        nodes.add(b)
    node_ids = tuple(sorted(nodes))
    index = {v: i for i, v in enumerate(node_ids)}
    entries = []
    for (a, b), w in weights.items():
        ia, ib = index[a], index[b]
        entries.append((ia, ib, w))
        entries.append((ib, ia, w))
    adj = SparseRows.from_entries(len(node_ids), len(node_ids), entries)
    return WeightedGraph(node_ids=node_ids, adj=adj, _index=index)


def read_edge_tsv(path: str | Path) -> list[EdgeRecord]:
    """Parse an edge-list TSV: `id_a<TAB>id_b<TAB>weight`, '#' comments allowed."""
    records: list[EdgeRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            try:
                w = float(parts[2])
            except ValueError:
                raise InputError(f"{path}:{lineno}: weight {parts[2]!r} is not a number")
            records.append((parts[0], parts[1], w))
    return records


def load_graph_tsv(path: str | Path) -> WeightedGraph:
    return load_graph(read_edge_tsv(path))


def submatrix(graph: WeightedGraph, rows: Sequence[int], cols: Sequence[int]) -> SparseRows:
    return graph.submatrix(rows, cols)


def weighted_degree(graph: WeightedGraph, i: int) -> float:
    return graph.weighted_degree(i)
