"""Evolving undirected graph, edge-event streams and snapshot schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .exceptions import FormatError, InvalidArgumentError, SelfLoopError

__all__ = [
    "CsrSnapshot",
    "DynamicGraph",
    "EdgeEvent",
    "SnapshotSchedule",
    "build_schedule",
    "load_edge_stream",
    "new_graph",
]


class EdgeEvent(NamedTuple):
    u: int
    v: int
    t: int


class CsrSnapshot(NamedTuple):
    """Immutable CSR view of a graph. ``etime[k]`` is the insertion index of
    the edge stored at ``indices[k]``; neighbors are sorted by node id."""

    indptr: np.ndarray
    indices: np.ndarray
    degree: np.ndarray
    etime: np.ndarray
    m: int

    @property
    def n(self) -> int:
        return self.degree.shape[0]


class DynamicGraph:
    """Mutable simple undirected graph over a fixed node set ``0..n-1``.

    Edges carry the global insertion index at which they were added, so a
    CSR snapshot of the final graph can answer "what did ``u`` look like
    before event ``t``" without replaying.
    """

    def __init__(self, n: int):
        if n < 1:
            raise InvalidArgumentError(f"node count must be >= 1, got {n}")
        self.n = int(n)
        self.degree = np.zeros(self.n, dtype=np.int64)
        self.m = 0
        self.duplicates_dropped = 0
        self._adj: list[list[int]] = [[] for _ in range(self.n)]
        self._etime: list[list[int]] = [[] for _ in range(self.n)]
        self._index: list[set[int]] = [set() for _ in range(self.n)]
        self._csr: CsrSnapshot | None = None

    def __repr__(self):
        return f"DynamicGraph(n={self.n}, m={self.m})"

    def _check_node(self, u):
        if not 0 <= u < self.n:
            raise InvalidArgumentError(f"node id {u} out of range [0, {self.n})")

    def has_edge(self, u: int, v: int) -> bool:
        self._check_node(u)
        self._check_node(v)
        return v in self._index[u]

    def insert_edge(self, u: int, v: int) -> bool:
        """Insert the undirected edge ``(u, v)``.

        Returns False (and leaves the graph untouched) for a duplicate.
        """
        u, v = int(u), int(v)
        self._check_node(u)
        self._check_node(v)
        if u == v:
            raise SelfLoopError(f"self-loop on node {u}")
        if v in self._index[u]:
            self.duplicates_dropped += 1
            return False
        t = self.m
        for a, b in ((u, v), (v, u)):
            self._adj[a].append(b)
            self._etime[a].append(t)
            self._index[a].add(b)
            self.degree[a] += 1
        self.m += 1
        self._csr = None
        return True

    def insert_events(self, events: Iterable[EdgeEvent]) -> int:
        return sum(self.insert_edge(e.u, e.v) for e in events)

    def neighbors(self, u: int) -> list[int]:
        """Neighbors of ``u`` in insertion order (do not mutate)."""
        self._check_node(u)
        return self._adj[u]

    def csr(self) -> CsrSnapshot:
        """Sorted CSR snapshot, rebuilt lazily after mutations."""
        if self._csr is None:
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(self.degree, out=indptr[1:])
            indices = np.empty(indptr[-1], dtype=np.int64)
            etime = np.empty(indptr[-1], dtype=np.int64)
            for u in range(self.n):
                lo, hi = indptr[u], indptr[u + 1]
                if lo == hi:
                    continue
                nb = np.fromiter(self._adj[u], dtype=np.int64, count=hi - lo)
                et = np.fromiter(self._etime[u], dtype=np.int64, count=hi - lo)
                order = np.argsort(nb, kind="stable")
                indices[lo:hi] = nb[order]
                etime[lo:hi] = et[order]
            self._csr = CsrSnapshot(indptr, indices, self.degree.copy(), etime, self.m)
        return self._csr

    def edges(self) -> list[tuple[int, int]]:
        """Edges as ``(min, max)`` pairs in insertion order."""
        out = [None] * self.m
        for u in range(self.n):
            for v, t in zip(self._adj[u], self._etime[u]):
                if u < v:
                    out[t] = (u, v)
        return out

    def copy(self) -> "DynamicGraph":
        g = DynamicGraph(self.n)
        for u, v in self.edges():
            g.insert_edge(u, v)
        g.duplicates_dropped = self.duplicates_dropped
        return g

    def check_invariants(self) -> None:
        """Assert symmetry, no self-loops, no duplicates and degree bookkeeping."""
        total = 0
        for u in range(self.n):
            nb = self._adj[u]
            assert len(nb) == len(self._index[u]) == self.degree[u], u
            assert u not in self._index[u], u
            for v in nb:
                assert u in self._index[v], (u, v)
            total += len(nb)
        assert total == 2 * self.m

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "DynamicGraph":
        g = cls(n)
        for u, v in edges:
            g.insert_edge(u, v)
        return g


def new_graph(n: int) -> DynamicGraph:
    return DynamicGraph(n)


def load_edge_stream(path, n: int | None = None) -> list[EdgeEvent]:
    """Parse an edge-stream text file.

    One edge per line as ``u v [timestamp]``; ``#`` starts a comment line.
    Line order defines event order; undirected duplicates keep the first
    occurrence. Self-loops are rejected as format errors.
    """
    events: list[EdgeEvent] = []
    seen: set[tuple[int, int]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise FormatError(f"expected 2 or 3 columns, got {len(parts)}", lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
                if len(parts) == 3:
                    int(parts[2])
            except ValueError:
                raise FormatError(f"non-integer field in {line!r}", lineno) from None
            if u < 0 or v < 0 or (n is not None and max(u, v) >= n):
                raise FormatError(f"node id out of range in {line!r}", lineno)
            if u == v:
                raise FormatError(f"self-loop on node {u}", lineno)
            key = (u, v) if u < v else (v, u)
            if key in seen:
                continue
            seen.add(key)
            events.append(EdgeEvent(u, v, len(events)))
    return events


def write_edge_stream(path, events: Iterable[EdgeEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(f"{e.u} {e.v}\n")


@dataclass
class SnapshotSchedule:
    mode: str
    base: int
    steps: list[int] = field(default_factory=list)

    @property
    def T(self) -> int:
        return len(self.steps) + 1

    def boundaries(self) -> list[tuple[int, int]]:
        """Event index ranges ``[lo, hi)``: first is G0, then one per step."""
        out = [(0, self.base)]
        lo = self.base
        for s in self.steps:
            out.append((lo, lo + s))
            lo += s
        return out

    @property
    def total(self) -> int:
        return self.base + sum(self.steps)


def build_schedule(events, mode: str = "major", *, T: int = 5, batch: int = 100,
                   k: int = 3, base_fraction: float = 0.5) -> SnapshotSchedule:
    """Split an event list into a base graph and per-snapshot batches.

    ``major``: the base holds ``floor(base_fraction * |E|)`` events and the
    remainder is divided into ``T`` near-equal steps (earlier steps get the
    extra events when the division is uneven).
    ``minor``: the last ``k * batch`` events arrive as ``k`` fixed batches.
    """
    total = len(events)
    if mode == "major":
        if T < 1:
            raise InvalidArgumentError("T must be >= 1")
        base = int(math.floor(base_fraction * total))
        rest = total - base
        if rest < T:
            raise InvalidArgumentError(f"{rest} remaining events cannot fill {T} steps")
        q, extra = divmod(rest, T)
        steps = [q + (1 if i < extra else 0) for i in range(T)]
        return SnapshotSchedule("major", base, steps)
    if mode == "minor":
        if batch < 1 or k < 1:
            raise InvalidArgumentError("batch and k must be >= 1")
        if k * batch >= total:
            raise InvalidArgumentError(f"{k}x{batch} events exceed the {total} available")
        return SnapshotSchedule("minor", total - k * batch, [batch] * k)
    raise InvalidArgumentError(f"unknown schedule mode {mode!r}")
