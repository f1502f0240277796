"""scikit-learn style front end for maintained PPR vectors."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegreeZeroError, InvalidArgumentError
from .graph import DynamicGraph
from .ppr import PprConfig, PushState, adjust_batch, certify, forward_push, ista_solve


def _as_edges(edges) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise InvalidArgumentError("edges must have shape (n_edges, 2)")
    return arr[:, :2]


class DynamicPPR(BaseEstimator):
    """PPR vectors for a set of sources, kept current as edges arrive.

    Parameters
    ----------
    alpha : float
        Teleport probability.
    eps : float
        Push tolerance; the ISTA weight defaults to ``alpha * eps / m``.
    solver : {'ista', 'push'}
    eps_ista : float or None
        Fixed ISTA weight, overriding the mapping above.
    warm_start : bool
        Adjust and resume existing states on ``partial_fit`` (True) or
        re-solve from scratch (False).

    Attributes
    ----------
    graph_ : DynamicGraph
    sources_ : ndarray of int
    states_ : list of solver states, one per source
    op_count_ : int
        Solver work summed over every call so far.
    """

    def __init__(self, alpha=0.15, eps=1e-8, solver="ista", eps_ista=None, warm_start=True):
        self.alpha = alpha
        self.eps = eps
        self.solver = solver
        self.eps_ista = eps_ista
        self.warm_start = warm_start

    def _config(self) -> PprConfig:
        m = max(self.graph_.m, 1)
        eps_ista = self.eps_ista if self.eps_ista is not None else self.alpha * self.eps / m
        return PprConfig(alpha=self.alpha, eps_push=self.eps, eps_ista=eps_ista)

    def _solve(self, state):
        csr = self.graph_.csr()
        if self.solver == "push":
            return forward_push(csr, state, self._config())
        return ista_solve(csr, state, self._config())

    def fit(self, edges, sources, n_nodes=None):
        """Build the graph from ``edges`` (array ``(m, 2)`` or a
        :class:`DynamicGraph`, which is copied) and solve every source."""
        if self.solver not in ("ista", "push"):
            raise InvalidArgumentError(f"solver must be 'ista' or 'push', got {self.solver!r}")
        if isinstance(edges, DynamicGraph):
            self.graph_ = edges.copy()
        else:
            arr = _as_edges(edges)
            n = n_nodes if n_nodes is not None else int(arr.max()) + 1 if arr.size else 0
            self.graph_ = DynamicGraph(n)
            for u, v in arr:
                self.graph_.insert_edge(int(u), int(v))
        self.sources_ = np.asarray(sources, dtype=np.int64).ravel()
        self.states_ = [self._solve(int(s)) for s in self.sources_]
        self.op_count_ = sum(s.op_count for s in self.states_)
        return self

    def partial_fit(self, edges):
        """Insert new edges, then bring every source up to date."""
        check_is_fitted(self, "states_")
        g = self.graph_
        deg_before = g.degree.copy()
        batch = []
        for u, v in _as_edges(edges):
            stamp = g.m
            if g.insert_edge(int(u), int(v)):
                batch.append((int(u), int(v), stamp))
        if not batch:
            return self
        csr = g.csr()
        before = sum(s.op_count for s in self.states_)
        out = []
        for st in self.states_:
            if not self.warm_start:
                new = self._solve(st.source)
                new.op_count += st.op_count
                out.append(new)
                continue
            try:
                adjust_batch(st, csr, deg_before, batch, self.alpha)
                out.append(self._solve(st))
            except DegreeZeroError:
                new = self._solve(st.source)
                new.op_count += st.op_count
                out.append(new)
        self.states_ = out
        self.op_count_ += sum(s.op_count for s in out) - before
        return self

    def transform(self, X=None):
        """Sparse ``(n_sources, n_nodes)`` matrix of PPR rows. ``X`` is
        ignored and accepted for pipeline compatibility."""
        check_is_fitted(self, "states_")
        deg = self.graph_.degree
        rows = []
        for st in self.states_:
            vals = st.p if isinstance(st, PushState) else np.sqrt(deg) * st.x
            rows.append(sp.csr_matrix(np.maximum(vals, 0.0)))
        return sp.vstack(rows, format="csr") if rows else sp.csr_matrix((0, self.graph_.n))

    def certify(self) -> bool:
        """True when every state meets its solver's termination certificate."""
        check_is_fitted(self, "states_")
        csr = self.graph_.csr()
        cfg = self._config()
        return all(certify(csr, s, cfg) for s in self.states_)
