"""PPR-based contextual features and positional encodings.

A node's representation is built from its PPR vector ``pi``:

* ``aggregate``: the PPR-weighted sum of node features, ``h = X pi``;
* ``hash_reduce`` / ``sparse_random_project``: a short sketch of ``pi``
  itself, used as a positional encoding;
* ``bundle``: how the two are fused for the downstream classifier.

``PPREmbedding`` wraps all of this as a scikit-learn transformer over a
sparse matrix whose rows are PPR vectors.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import FormatError, InvalidArgumentError
from .ppr.state import PprVector

MODES = ("additive", "concat", "pe_only", "feat_only")
ENCODERS = ("hash", "srp")


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z += np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _seed_streams(seed: int) -> tuple[np.uint64, np.uint64]:
    base = _splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    s1 = base[0]
    s2 = _splitmix64(np.array([s1], dtype=np.uint64))[0]
    return s1, s2


def _sparse_items(pi) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pi, PprVector):
        items = pi.items()
        idx = np.fromiter((k for k, _ in items), dtype=np.int64, count=len(items))
        val = np.fromiter((v for _, v in items), dtype=np.float64, count=len(items))
        return idx, val
    if sp.issparse(pi):
        row = sp.csr_matrix(pi)
        return row.indices.astype(np.int64), row.data.astype(np.float64)
    arr = np.asarray(pi, dtype=np.float64).ravel()
    idx = np.flatnonzero(arr)
    return idx, arr[idx]


@dataclass
class PositionalEncoding:
    vector: np.ndarray
    seed: int


@dataclass
class EmbeddingBundle:
    h: np.ndarray
    pe: PositionalEncoding
    mode: str

    @property
    def features(self) -> np.ndarray:
        """Classifier input. For ``additive`` this is ``h || pe``; the
        learned projection of ``pe`` and the sum happen in the classifier."""
        if self.mode == "pe_only":
            return self.pe.vector
        if self.mode == "feat_only":
            return self.h
        return np.concatenate([self.h, self.pe.vector])

    @property
    def input_dim(self) -> int:
        return self.features.shape[0]


def aggregate(X: np.ndarray, pi) -> np.ndarray:
    """``h = sum_j pi(j) * X[:, j]`` for a ``d x n`` feature matrix."""
    idx, val = _sparse_items(pi)
    if idx.size and (idx.min() < 0 or idx.max() >= X.shape[1]):
        raise InvalidArgumentError("PPR support contains node ids outside the feature matrix")
    if idx.size == 0:
        return np.zeros(X.shape[0], dtype=np.float64)
    return X[:, idx].astype(np.float64) @ val


def hash_reduce(pi, d_pe: int, seed: int = 0) -> PositionalEncoding:
    """Signed feature hashing of a PPR vector into ``d_pe`` buckets."""
    if d_pe < 1:
        raise InvalidArgumentError("d_pe must be >= 1")
    idx, val = _sparse_items(pi)
    out = np.zeros(d_pe)
    if idx.size:
        s1, s2 = _seed_streams(seed)
        keys = idx.astype(np.uint64)
        bucket = (_splitmix64(keys ^ s1) % np.uint64(d_pe)).astype(np.int64)
        sign = np.where(_splitmix64(keys ^ s2) & np.uint64(1), 1.0, -1.0)
        np.add.at(out, bucket, sign * val)
    return PositionalEncoding(out, seed)


def _srp_block(idx: np.ndarray, d_pe: int, seed: int) -> np.ndarray:
    """Projection entries for the given nodes, shape ``(len(idx), d_pe)``."""
    s1, _ = _seed_streams(seed)
    keys = idx.astype(np.uint64)[:, None] * np.uint64(d_pe) + np.arange(d_pe, dtype=np.uint64)
    u = _splitmix64(keys ^ s1) % np.uint64(6)
    block = np.zeros(u.shape)
    block[u == 0] = np.sqrt(3.0)
    block[u == 1] = -np.sqrt(3.0)
    return block


def sparse_random_project(pi, d_pe: int, seed: int = 0) -> PositionalEncoding:
    """Achlioptas-style projection with entries in {+-sqrt(3), 0} (prob.
    1/6, 2/3, 1/6), scaled by ``1/sqrt(d_pe)`` so l2 norms are preserved in
    expectation. Columns are regenerated per node from the seed."""
    if d_pe < 1:
        raise InvalidArgumentError("d_pe must be >= 1")
    idx, val = _sparse_items(pi)
    if idx.size == 0:
        return PositionalEncoding(np.zeros(d_pe), seed)
    return PositionalEncoding(val @ _srp_block(idx, d_pe, seed) / np.sqrt(d_pe), seed)


def bundle(h: np.ndarray, pe: PositionalEncoding, mode: str) -> EmbeddingBundle:
    if mode not in MODES:
        raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "additive" and h.shape[0] == 0:
        raise InvalidArgumentError("additive fusion needs a non-empty feature vector")
    return EmbeddingBundle(np.asarray(h), pe, mode)


def default_pe_dim(n: int) -> int:
    return 512 if n >= 10_000 else min(n, 256)


def encode(pi, d_pe: int, seed: int = 0, encoder: str = "hash") -> PositionalEncoding:
    if encoder == "hash":
        return hash_reduce(pi, d_pe, seed)
    if encoder == "srp":
        return sparse_random_project(pi, d_pe, seed)
    raise InvalidArgumentError(f"unknown encoder {encoder!r}")


class PPREmbedding(TransformerMixin, BaseEstimator):
    """Turn PPR rows into classifier inputs.

    Parameters
    ----------
    features : array of shape (d, n_nodes) or None
        Node attribute matrix. Required unless ``mode='pe_only'``.
    mode : {'concat', 'additive', 'pe_only', 'feat_only'}
    d_pe : int or None
        Encoding width; ``None`` picks a size from the node count.
    encoder : {'hash', 'srp'}
    seed : int

    ``transform`` takes a sparse matrix of shape (n_sources, n_nodes) whose
    rows are PPR vectors and returns a dense float32 matrix. In additive mode
    the output is ``[h, pe]`` and ``split_`` gives the feature width the
    classifier needs to fuse them.
    """

    def __init__(self, features=None, mode="concat", d_pe=None, encoder="hash", seed=0):
        self.features = features
        self.mode = mode
        self.d_pe = d_pe
        self.encoder = encoder
        self.seed = seed

    def fit(self, P, y=None):
        P = check_array(P, accept_sparse="csr")
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.encoder not in ENCODERS:
            raise InvalidArgumentError(f"encoder must be one of {ENCODERS}")
        self.n_nodes_ = P.shape[1]
        if self.mode != "pe_only":
            if self.features is None:
                raise InvalidArgumentError(f"mode {self.mode!r} needs a feature matrix")
            if self.features.shape[1] != self.n_nodes_:
                raise InvalidArgumentError(
                    f"feature matrix has {self.features.shape[1]} columns, PPR rows have {self.n_nodes_}")
        self.d_pe_ = self.d_pe or default_pe_dim(self.n_nodes_)
        d = 0 if self.features is None else self.features.shape[0]
        self.split_ = d if self.mode == "additive" else None
        return self

    def _pe_matrix(self, P) -> np.ndarray:
        if self.encoder == "hash":
            # Same construction as hash_reduce, vectorised over rows.
            s1, s2 = _seed_streams(self.seed)
            keys = np.arange(self.n_nodes_, dtype=np.uint64)
            bucket = (_splitmix64(keys ^ s1) % np.uint64(self.d_pe_)).astype(np.int64)
            sign = np.where(_splitmix64(keys ^ s2) & np.uint64(1), 1.0, -1.0)
            H = sp.csr_matrix((sign, (np.arange(self.n_nodes_), bucket)),
                              shape=(self.n_nodes_, self.d_pe_))
            return np.asarray((P @ H).todense())
        out = np.zeros((P.shape[0], self.d_pe_))
        for k in range(P.shape[0]):
            out[k] = sparse_random_project(P[k], self.d_pe_, self.seed).vector
        return out

    def transform(self, P):
        check_is_fitted(self, "d_pe_")
        P = sp.csr_matrix(check_array(P, accept_sparse="csr"))
        if P.shape[1] != self.n_nodes_:
            raise InvalidArgumentError("PPR matrix width changed since fit")
        parts = []
        if self.mode != "pe_only":
            X = np.asarray(self.features, dtype=np.float64)
            if P.nnz > 0.05 * P.shape[0] * P.shape[1]:
                # Dense BLAS beats scipy's sparse-times-dense once rows fill in.
                parts.append(P.toarray() @ X.T)
            else:
                parts.append(np.asarray(P @ X.T))
        if self.mode != "feat_only":
            parts.append(self._pe_matrix(P))
        return np.hstack(parts).astype(np.float32)


def save_embeddings(path, matrix: np.ndarray, node_ids=None) -> None:
    """Write ``EMB1`` binary (16-byte header, row-major float32) plus an
    optional ``<path>.ids`` sidecar listing one node id per row."""
    mat = np.ascontiguousarray(matrix, dtype="<f4")
    if mat.ndim != 2:
        raise InvalidArgumentError("embedding matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(b"EMB1" + struct.pack("<III", mat.shape[0], mat.shape[1], 0))
        fh.write(mat.tobytes())
    if node_ids is not None:
        if len(node_ids) != mat.shape[0]:
            raise InvalidArgumentError("one node id per row required")
        Path(str(path) + ".ids").write_text("".join(f"{int(i)}\n" for i in node_ids))


def load_embeddings(path) -> tuple[np.ndarray, list[int] | None]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != b"EMB1":
        raise FormatError(f"{path}: missing EMB1 header")
    rows, cols, _ = struct.unpack("<III", raw[4:16])
    body = raw[16:]
    if len(body) != rows * cols * 4:
        raise FormatError(f"{path}: expected {rows}x{cols} float32 payload, got {len(body)} bytes")
    mat = np.frombuffer(body, dtype="<f4").reshape(rows, cols).copy()
    ids_path = Path(str(path) + ".ids")
    ids = [int(t) for t in ids_path.read_text().split()] if ids_path.exists() else None
    return mat, ids
