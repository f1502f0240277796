"""Dataset directories, format converters and synthetic stand-ins.

A dataset directory holds:

``edges.txt``
    edge stream, one ``u v`` per line (see :func:`pprdyn.graph.load_edge_stream`);
``features.bin``
    EMB1 matrix with one row per node (``n x d``);
``labels.txt``
    ``node label`` pairs; nodes without a line are unlabeled.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..embedding import load_embeddings, save_embeddings
from ..exceptions import DatasetError, FormatError, InvalidArgumentError
from ..graph import DynamicGraph, EdgeEvent, load_edge_stream, write_edge_stream


@dataclass
class Splits:
    train: np.ndarray
    dev: np.ndarray
    test: np.ndarray


@dataclass
class Dataset:
    name: str
    n: int
    events: list[EdgeEvent]
    X: np.ndarray  # (d, n) float32
    y: np.ndarray  # (n,) int64, -1 for unlabeled
    tracked: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    splits: Splits | None = None

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n_labels(self) -> int:
        return int(self.y.max()) + 1 if (self.y >= 0).any() else 0


def save_dataset(ds: Dataset, directory) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_stream(out / "edges.txt", ds.events)
    save_embeddings(out / "features.bin", ds.X.T)
    with open(out / "labels.txt", "w") as fh:
        for i in np.flatnonzero(ds.y >= 0):
            fh.write(f"{i} {ds.y[i]}\n")


def load_dataset(directory, *, base_fraction: float = 0.5, n_tracked: int = 1000,
                 seed: int = 0) -> Dataset:
    """Load and validate a dataset directory, then pick tracked nodes and
    stratified 70/10/20 splits among labeled non-dangling nodes of G0."""
    root = Path(directory)
    for name in ("edges.txt", "features.bin", "labels.txt"):
        if not (root / name).exists():
            raise DatasetError(f"{root}: missing {name}")
    try:
        feats, _ = load_embeddings(root / "features.bin")
    except FormatError as exc:
        raise DatasetError(str(exc)) from exc
    n = feats.shape[0]
    try:
        events = load_edge_stream(root / "edges.txt", n=n)
    except FormatError as exc:
        raise DatasetError(f"{root / 'edges.txt'}: {exc}") from exc
    y = np.full(n, -1, dtype=np.int64)
    with open(root / "labels.txt") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                node, lab = int(parts[0]), int(parts[1])
            except (ValueError, IndexError):
                raise DatasetError(f"labels.txt line {lineno}: expected 'node label'") from None
            if not 0 <= node < n:
                raise DatasetError(f"labels.txt line {lineno}: node {node} outside [0, {n})")
            if lab < 0:
                raise DatasetError(f"labels.txt line {lineno}: negative label")
            y[node] = lab
    present = np.unique(y[y >= 0])
    if present.size == 0:
        raise DatasetError("no labeled nodes")
    missing = sorted(set(range(int(present.max()) + 1)) - set(present.tolist()))
    if missing:
        raise DatasetError(f"label ids are not contiguous; missing {missing}")
    if not np.all(np.isfinite(feats)):
        raise DatasetError("features contain non-finite values")
    ds = Dataset(root.name, n, events, np.ascontiguousarray(feats.T), y)
    choose_tracked(ds, base_fraction=base_fraction, n_tracked=n_tracked, seed=seed)
    return ds


def base_graph(ds: Dataset, base_fraction: float = 0.5) -> DynamicGraph:
    g = DynamicGraph(ds.n)
    g.insert_events(ds.events[: int(np.floor(base_fraction * len(ds.events)))])
    return g


def _stratified_take(rng, pool: np.ndarray, y: np.ndarray, k: int) -> np.ndarray:
    """``k`` nodes from ``pool`` with class proportions kept and at least
    one node per class (when ``k`` allows)."""
    classes = np.unique(y[pool])
    if k >= pool.size:
        return np.sort(pool)
    by_class = {c: rng.permutation(pool[y[pool] == c]) for c in classes}
    quota = {c: max(1, int(round(k * by_class[c].size / pool.size))) for c in classes}
    while sum(quota.values()) > k:
        c = max(quota, key=lambda c: (quota[c], c))
        quota[c] -= 1
    while sum(quota.values()) < k:
        c = max(classes, key=lambda c: (by_class[c].size - quota[c], -c))
        quota[c] += 1
    return np.sort(np.concatenate([by_class[c][: quota[c]] for c in classes]))


def choose_tracked(ds: Dataset, *, base_fraction: float = 0.5, n_tracked: int = 1000,
                   seed: int = 0) -> None:
    g0 = base_graph(ds, base_fraction)
    pool = np.flatnonzero((ds.y >= 0) & (g0.degree > 0))
    if pool.size == 0:
        raise DatasetError("no labeled node has an edge in the base graph")
    rng = np.random.default_rng(seed)
    tracked = _stratified_take(rng, pool, ds.y, n_tracked)
    ds.tracked = tracked
    ds.splits = stratified_splits(tracked, ds.y, seed=seed)


def stratified_splits(nodes: np.ndarray, y: np.ndarray, fractions=(0.7, 0.1, 0.2),
                      seed: int = 0) -> Splits:
    """Per-class 70/10/20 split; every class with >= 3 members appears in
    all three parts."""
    rng = np.random.default_rng(seed + 7919)
    parts = ([], [], [])
    for c in np.unique(y[nodes]):
        members = rng.permutation(nodes[y[nodes] == c])
        k = members.size
        n_dev = max(1, int(round(fractions[1] * k))) if k >= 3 else 0
        n_test = max(1, int(round(fractions[2] * k))) if k >= 3 else 0
        n_train = k - n_dev - n_test
        parts[0].append(members[:n_train])
        parts[1].append(members[n_train:n_train + n_dev])
        parts[2].append(members[n_train + n_dev:])
    return Splits(*(np.sort(np.concatenate(p)).astype(np.int64) for p in parts))


def convert_linqs(content_path, cites_path, out_dir, name: str | None = None) -> Dataset:
    """Convert the LINQS ``<name>.content`` / ``<name>.cites`` pair (as
    distributed for Cora and Citeseer) into a dataset directory.

    Node ids follow the order of the content file, labels are numbered by
    sorted class name, citations to unknown papers and self-citations are
    dropped, and undirected duplicates keep their first occurrence.
    """
    ids, rows, names = {}, [], []
    with open(content_path) as fh:
        for line in fh:
            parts = line.strip().split("\t")
            if len(parts) < 3:
                continue
            ids[parts[0]] = len(ids)
            rows.append(np.array(parts[1:-1], dtype=np.float32))
            names.append(parts[-1])
    X = np.vstack(rows)
    classes = {c: k for k, c in enumerate(sorted(set(names)))}
    y = np.array([classes[c] for c in names], dtype=np.int64)
    events, seen = [], set()
    with open(cites_path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 2 or parts[0] not in ids or parts[1] not in ids:
                continue
            u, v = ids[parts[1]], ids[parts[0]]
            key = (min(u, v), max(u, v))
            if u == v or key in seen:
                continue
            seen.add(key)
            events.append(EdgeEvent(u, v, len(events)))
    ds = Dataset(name or Path(out_dir).name, X.shape[0], events, np.ascontiguousarray(X.T), y)
    save_dataset(ds, out_dir)
    return ds


def make_synthetic(n: int = 2708, m: int = 5277, d: int = 1433, n_labels: int = 7, *,
                   homophily: float = 0.8, words_per_node: int = 18, topic_weight: float = 0.3,
                   seed: int = 0, name: str = "synthetic") -> Dataset:
    """Planted-partition graph with bag-of-words features.

    Endpoints are drawn with heavy-tailed node weights; with probability
    ``homophily`` the second endpoint shares the first's class. Each node
    samples ``words_per_node`` distinct words, a ``topic_weight`` share of
    them from a class-specific vocabulary slice, the rest uniformly, which
    gives a weak but non-trivial attribute signal.
    """
    if words_per_node > d or n_labels > d:
        raise InvalidArgumentError(f"d={d} is too small for {words_per_node} words per node "
                                   f"and {n_labels} classes")
    rng = np.random.default_rng(seed)
    y = rng.integers(0, n_labels, size=n)
    weight = rng.pareto(2.5, size=n) + 1.0
    members = [np.flatnonzero(y == c) for c in range(n_labels)]
    member_p = [weight[mm] / weight[mm].sum() for mm in members]
    p_all = weight / weight.sum()
    seen, events = set(), []
    while len(events) < m:
        u = int(rng.choice(n, p=p_all))
        if rng.random() < homophily:
            v = int(rng.choice(members[y[u]], p=member_p[y[u]]))
        else:
            v = int(rng.choice(n, p=p_all))
        key = (min(u, v), max(u, v))
        if u == v or key in seen:
            continue
        seen.add(key)
        events.append(EdgeEvent(u, v, len(events)))
    X = np.zeros((d, n), dtype=np.float32)
    slice_w = d // n_labels
    for i in range(n):
        k_topic = rng.binomial(words_per_node, topic_weight)
        lo = y[i] * slice_w
        topic = rng.choice(np.arange(lo, lo + slice_w), size=min(k_topic, slice_w), replace=False)
        background = rng.choice(d, size=words_per_node - topic.size, replace=False)
        X[np.concatenate([topic, background]), i] = 1.0
    ds = Dataset(name, n, events, X, y.astype(np.int64))
    return ds


def describe(ds: Dataset) -> dict:
    return {
        "name": ds.name,
        "n": ds.n,
        "edges": len(ds.events),
        "d": ds.d,
        "labels": ds.n_labels,
        "tracked": int(ds.tracked.size),
        "label_counts": dict(sorted(Counter(ds.y[ds.y >= 0].tolist()).items())),
    }
