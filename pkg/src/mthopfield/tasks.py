"""Per-task labelings, Jaccard task similarity and task grouping."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .graph import WeightedGraph

LabelRecord = tuple[str, str, str]


@dataclass(frozen=True)
class TaskLabeling:
    """{+, -} assignments for m tasks on a shared labeled node set L.

    `labeled` holds the sorted global node indices of L; `positives` holds,
    per task, the subset of L labeled '+'. Negatives are implicit as the
    complement within L. Heavy imbalance is reported, never enforced.
    """

    task_ids: tuple[str, ...]
    labeled: np.ndarray
    positives: tuple[frozenset[int], ...]

    def __post_init__(self):
        lab = set(int(i) for i in self.labeled)
        if len(lab) != self.labeled.size:
            raise InputError("labeled node set contains duplicates")
        for tid, pos in zip(self.task_ids, self.positives):
            if not pos <= lab:
                raise InputError(f"positives of task {tid!r} fall outside the labeled set")

    @property
    def m(self) -> int:
        return len(self.task_ids)

    @property
    def n_labeled(self) -> int:
        return int(self.labeled.size)

    def positive_counts(self) -> np.ndarray:
        return np.array([len(p) for p in self.positives], dtype=np.int64)

    def positive_rates(self) -> np.ndarray:
        """p_{k,+} = |L_{k,+}| / |L| per task."""
        return self.positive_counts() / float(self.n_labeled)

    def indicator_matrix(self) -> np.ndarray:
        """Boolean (|L|, m) matrix, True where the node is positive for the task."""
        chi = np.zeros((self.n_labeled, self.m), dtype=bool)
        local = {int(g): i for i, g in enumerate(self.labeled)}
        for k, pos in enumerate(self.positives):
            for g in pos:
                chi[local[g], k] = True
        return chi

    def local_positive_sets(self) -> list[np.ndarray]:
        """Positive indices per task, local to the order of `labeled`."""
        local = {int(g): i for i, g in enumerate(self.labeled)}
        return [np.array(sorted(local[g] for g in pos), dtype=np.int64)
                for pos in self.positives]

    def restrict(self, nodes: Sequence[int]) -> "TaskLabeling":
        """Labeling induced on a subset of the labeled nodes."""
        keep = np.asarray(sorted(int(i) for i in nodes), dtype=np.int64)
        keep_set = set(int(i) for i in keep)
        if not keep_set <= set(int(i) for i in self.labeled):
            raise InputError("restriction nodes must be a subset of the labeled set")
        positives = tuple(frozenset(g for g in pos if g in keep_set)
                          for pos in self.positives)
        return TaskLabeling(task_ids=self.task_ids, labeled=keep, positives=positives)

    def select_tasks(self, task_indices: Sequence[int]) -> "TaskLabeling":
        idx = list(task_indices)
        return TaskLabeling(
            task_ids=tuple(self.task_ids[k] for k in idx),
            labeled=self.labeled,
            positives=tuple(self.positives[k] for k in idx),
        )


@dataclass(frozen=True)
class TaskSimilarity:
    """Symmetric m x m task relatedness matrix with zero diagonal, entries in [0, 1]."""

    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise InputError("similarity matrix must be square")
        if not np.array_equal(s, s.T):
            raise InputError("similarity matrix must be symmetric")
        if np.any(np.diag(s) != 0.0):
            raise InputError("similarity matrix must have a zero diagonal")
        if np.any(s < 0.0) or np.any(s > 1.0):
            raise InputError("similarity entries must lie in [0, 1]")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @property
    def m(self) -> int:
        return self.s.shape[0]

    @property
    def row_sums(self) -> np.ndarray:
        """S_k = sum_r s_kr."""
        return self.s.sum(axis=1)

    def submatrix(self, task_indices: Sequence[int]) -> "TaskSimilarity":
        idx = np.asarray(task_indices, dtype=np.int64)
        return TaskSimilarity(self.s[np.ix_(idx, idx)].copy())


@dataclass(frozen=True)
class TaskGrouping:
    """Partition of task indices into batches that are learned jointly."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: list[int] = []
        for g in self.groups:
            seen.extend(g)
        if len(seen) != len(set(seen)):
            raise InputError("task appears in more than one group")


def jaccard_similarity(labeling: TaskLabeling) -> TaskSimilarity:
    """s_kr = |L_{k,+} ∩ L_{r,+}| / |L_{k,+} ∪ L_{r,+}|, 0 when both sets are empty."""
    if labeling.m < 2:
        raise InputError("jaccard similarity needs at least 2 tasks")
    m = labeling.m
    s = np.zeros((m, m))
    for k in range(m):
        for r in range(k + 1, m):
            union = labeling.positives[k] | labeling.positives[r]
            if union:
                val = len(labeling.positives[k] & labeling.positives[r]) / len(union)
            else:
                val = 0.0
            s[k, r] = s[r, k] = val
    return TaskSimilarity(s)


def group_by_cardinality(labeling: TaskLabeling,
                         bin_edges: Sequence[int]) -> TaskGrouping:
    """Group tasks whose positive counts fall in the same half-open bin.

    `bin_edges` (strictly increasing) define bins [e_0, e_1), [e_1, e_2), ...
    Counts below the first edge and at/above the last edge form one residual
    group per side. An empty edge list puts every task in a single group.
    """
    edges = list(bin_edges)
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise InputError("bin edges must be strictly increasing")
    counts = labeling.positive_counts()
    if not edges:
        return TaskGrouping(groups=(tuple(range(labeling.m)),))
    buckets: dict[int, list[int]] = {}
    for k, c in enumerate(counts):
        slot = int(np.searchsorted(edges, c, side="right"))  # 0 = below first edge
        buckets.setdefault(slot, []).append(k)
    groups = tuple(tuple(buckets[slot]) for slot in sorted(buckets))
    return TaskGrouping(groups=groups)


def threshold_similarity(sim: TaskSimilarity, cutoff: float) -> TaskSimilarity:
    """Zero out entries below `cutoff`; symmetry and zero diagonal survive."""
    if not 0.0 <= cutoff <= 1.0:
        raise InputError("similarity cutoff must lie in [0, 1]")
    s = sim.s.copy()
    s[s < cutoff] = 0.0
    return TaskSimilarity(s)


def read_label_tsv(path: str | Path) -> list[LabelRecord]:
    """Parse a label TSV: `node_id<TAB>task_id<TAB>label` with label in {+, -}."""
    records: list[LabelRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            if parts[2] not in ("+", "-"):
                raise InputError(f"{path}:{lineno}: label must be '+' or '-', got {parts[2]!r}")
            records.append((parts[0], parts[1], parts[2]))
    return records


def build_labeling(graph: WeightedGraph, records: Iterable[LabelRecord],
                   implicit_negatives: bool = True) -> TaskLabeling:
    """Assemble a TaskLabeling from label records against a loaded graph.

    L is the set of nodes mentioned at least once. With implicit negatives
    (the default), a node of L without an explicit label for some task is
    negative for it; otherwise every (node, task) pair must be spelled out.
    """
    explicit: dict[tuple[str, str], str] = {}
    for node_id, task_id, label in records:
        graph.index_of(node_id)  # raises InputError for unknown nodes
        key = (node_id, task_id)
        if key in explicit and explicit[key] != label:
            raise InputError(
                f"conflicting labels for node {node_id!r}, task {task_id!r}")
        explicit[key] = label
    if not explicit:
        raise InputError("label input contains no records")
    task_ids = tuple(sorted({t for _, t in explicit}))
    node_ids = sorted({v for v, _ in explicit})
    if not implicit_negatives:
        missing = [(v, t) for v in node_ids for t in task_ids if (v, t) not in explicit]
        if missing:
            raise InputError(
                f"{len(missing)} unlabeled (node, task) pairs with implicit negatives "
                f"disabled; first: {missing[0]!r}")
    labeled = np.array(sorted(graph.index_of(v) for v in node_ids), dtype=np.int64)
    positives = tuple(
        frozenset(graph.index_of(v) for v in node_ids
                  if explicit.get((v, t)) == "+")
        for t in task_ids)
    return TaskLabeling(task_ids=task_ids, labeled=labeled, positives=positives)
