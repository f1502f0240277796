"""Power iteration, forward push and ISTA, plus the per-edge warm-start
adjustments for insertions."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..exceptions import (DanglingNodeError, DegreeZeroError, InconsistentStateError,
                          InvalidArgumentError, IterationLimitError)
from ..graph import CsrSnapshot, DynamicGraph
from . import _kernels
from .state import PprConfig, PprState, PprVector, PushState

__all__ = [
    "adjust_batch",
    "forward_push",
    "ista_adjust_edge",
    "ista_solve",
    "power_iteration",
    "push_adjust_edge",
    "to_ppr",
]


def _snapshot(g) -> CsrSnapshot:
    return g.csr() if isinstance(g, DynamicGraph) else g


def _check_source(csr: CsrSnapshot, s: int):
    if not 0 <= s < csr.n:
        raise InvalidArgumentError(f"source {s} out of range")
    if csr.degree[s] == 0:
        raise DanglingNodeError(f"source {s} has no neighbors")


def power_iteration(g, s: int, alpha: float = 0.15, tol: float = 1e-12,
                    max_iter: int = 100_000) -> PprVector:
    """Fixed-point iteration ``pi <- (1-alpha) A D^-1 pi + alpha e_s``.

    Stops once successive iterates differ by at most ``tol`` in l1.
    """
    csr = _snapshot(g)
    _check_source(csr, s)
    n = csr.n
    A = sp.csr_matrix((np.ones(csr.indices.shape[0]), csr.indices, csr.indptr), shape=(n, n))
    inv_d = np.zeros(n)
    nz = csr.degree > 0
    inv_d[nz] = 1.0 / csr.degree[nz]
    pi = np.zeros(n)
    pi[s] = 1.0
    for _ in range(max_iter):
        nxt = (1.0 - alpha) * (A @ (pi * inv_d))
        nxt[s] += alpha
        diff = np.abs(nxt - pi).sum()
        pi = nxt
        if diff <= tol:
            return PprVector.from_dense(s, pi)
    raise IterationLimitError(f"power iteration did not reach tol={tol} in {max_iter} steps",
                              PprVector.from_dense(s, pi))


def forward_push(g, state: PushState | int, config: PprConfig) -> PushState:
    """Run forward push until every ``|r(i)| <= eps_push / m * d(i)``.

    ``state`` may be a source id (fresh start) or an existing state, which
    is updated in place and returned. Pushes cost ``1 + d(i)`` ops each.
    """
    csr = _snapshot(g)
    if not isinstance(state, PushState):
        _check_source(csr, int(state))
        state = PushState.fresh(int(state), csr.n)
    if csr.m == 0:
        return state
    thr = config.eps_push / csr.m
    seeds = np.flatnonzero(np.abs(state.r) > thr * csr.degree)
    max_ops = np.iinfo(np.int64).max
    ops, done = _kernels.forward_push(csr.indptr, csr.indices, csr.degree, state.p, state.r,
                                      config.alpha, thr, seeds, max_ops)
    state.op_count += int(ops)
    return state


def push_adjust_edge(state: PushState, g_before: DynamicGraph, u: int, v: int,
                     alpha: float = 0.15) -> PushState:
    """Warm-start adjustment for the directed incidence ``u -> v`` of a new edge.

    ``g_before`` must not yet contain the edge. Call once per direction.
    """
    du = int(g_before.degree[u])
    pu = state.p[u]
    if pu == 0.0:
        return state
    if du == 0:
        raise DegreeZeroError(f"node {u} had degree 0 before insertion")
    state.p[u] = pu * (du + 1) / du
    state.r[u] -= pu / (alpha * du)
    state.r[v] += (1.0 - alpha) * pu / (alpha * du)
    state.op_count += 3
    return state


def ista_solve(g, state: PprState | int, config: PprConfig) -> PprState:
    """Proximal-gradient solve of the l1-regularised scaled PPR objective.

    Resumes from ``state`` (updated in place) or starts fresh from a source
    id. Terminates when every coordinate meets the first-order condition
    within the configured slack; raises ``IterationLimitError`` carrying the
    partial state when ``max_sweeps`` is exhausted.
    """
    csr = _snapshot(g)
    if not isinstance(state, PprState):
        _check_source(csr, int(state))
        state = PprState.fresh(int(state), csr.degree, config.alpha)
    cand = np.fromiter(sorted(state.dirty), dtype=np.int64, count=len(state.dirty))
    if state.eps is not None and state.eps != config.eps_ista:
        # The thresholds moved, so coordinates outside the dirty set may
        # violate the optimality condition too.
        thr = config.eps_ista * np.sqrt(csr.degree)
        viol = np.where(state.x > 0, np.abs(state.grad + thr), np.abs(state.grad) - thr)
        extra = np.flatnonzero((viol > config.kkt_rtol * thr + config.kkt_atol) & (csr.degree > 0))
        cand = np.union1d(cand, extra)
    ops, sweeps, done = _kernels.ista(csr.indptr, csr.indices, csr.degree, state.x, state.grad,
                                      cand, config.alpha, config.eps_ista, config.kkt_rtol,
                                      config.kkt_atol, config.max_sweeps)
    state.op_count += int(ops)
    if not done:
        raise IterationLimitError(f"ISTA hit max_sweeps={config.max_sweeps}", state)
    state.dirty = set()
    state.epoch = 0
    state.eps = config.eps_ista
    return state


def ista_adjust_edge(state: PprState, g_before: DynamicGraph, u: int, v: int,
                     alpha: float = 0.15) -> PprState:
    """Warm-start adjustment of an ISTA state for inserting edge ``(u, v)``.

    Both endpoints are scaled by ``(d+1)/d`` using pre-insertion degrees,
    and the gradient is re-derived locally so it is exact on the graph
    that includes the new edge. ``g_before`` must not yet contain it.
    """
    if g_before.has_edge(u, v):
        raise InvalidArgumentError(f"edge ({u}, {v}) already present")
    du, dv = int(g_before.degree[u]), int(g_before.degree[v])
    if (du == 0 and state.x[u] != 0.0) or (dv == 0 and state.x[v] != 0.0):
        raise DegreeZeroError(f"edge ({u}, {v}) touches a degree-0 node carrying mass")
    nu = list(g_before.neighbors(u))
    nv = list(g_before.neighbors(v))
    # Small local CSR holding only the rows the kernel reads.
    rows = {u: nu + [v], v: nv + [u]}
    local = sorted(set([u, v] + nu + nv))
    remap = {w: k for k, w in enumerate(local)}
    indptr = np.zeros(len(local) + 1, dtype=np.int64)
    indices, etime = [], []
    for k, w in enumerate(local):
        nb = rows.get(w, [])
        indices.extend(remap[z] for z in nb)
        etime.extend([0] * (len(nb) - 1) + [1] if nb else [])
        indptr[k + 1] = len(indices)
    deg0 = np.array([g_before.degree[w] for w in local], dtype=np.int64)
    x = state.x[local]
    grad = state.grad[local]
    touched = np.zeros(len(local), dtype=np.bool_)
    s_local = remap.get(state.source, -1)
    ops = _kernels.ista_adjust_batch(indptr, np.array(indices, dtype=np.int64),
                                     np.array(etime, dtype=np.int64), deg0, x, grad, s_local,
                                     alpha, np.array([remap[u]]), np.array([remap[v]]),
                                     np.array([1]), touched)
    state.x[local] = x
    state.grad[local] = grad
    state.dirty.update(local[k] for k in np.flatnonzero(touched))
    state.op_count += int(ops)
    state.epoch += 1
    return state


def adjust_batch(state, csr_after: CsrSnapshot, deg_before: np.ndarray, events, alpha: float):
    """Apply warm-start adjustments for a batch of inserted edges.

    ``events`` are ``(u, v, t)`` with ``t`` the edge's insertion index in the
    graph behind ``csr_after``; ``deg_before`` are degrees before the batch.
    Works for both push and ISTA states.
    """
    if len(events) == 0:
        return state
    ev = np.asarray(events, dtype=np.int64).reshape(-1, 3)
    eu, evv, et = ev[:, 0].copy(), ev[:, 1].copy(), ev[:, 2].copy()
    if isinstance(state, PushState):
        ops = _kernels.push_adjust_batch(deg_before, state.p, state.r, eu, evv, alpha)
    else:
        touched = np.zeros(csr_after.n, dtype=np.bool_)
        ops = _kernels.ista_adjust_batch(csr_after.indptr, csr_after.indices, csr_after.etime,
                                         deg_before, state.x, state.grad, state.source, alpha,
                                         eu, evv, et, touched)
        if ops >= 0:
            state.dirty.update(np.flatnonzero(touched).tolist())
            state.epoch += len(ev)
    if ops < 0:
        k = -1 - ops
        raise DegreeZeroError(f"event {tuple(ev[k])} touches a degree-0 node carrying mass")
    state.op_count += int(ops)
    return state


def to_ppr(state, degree: np.ndarray | None = None) -> PprVector:
    """Export a solver state as a PPR vector.

    ISTA states need the current ``degree`` vector (``pi = sqrt(d) * x``);
    push states export ``p`` directly. Tiny negative round-off is clipped.
    """
    if isinstance(state, PushState):
        values = state.p
    else:
        if degree is None:
            raise InvalidArgumentError("degree vector required for ISTA states")
        values = np.sqrt(degree) * state.x
    if values.size and values.min() < -1e-12:
        raise InconsistentStateError(f"negative PPR entry {values.min():.3e}")
    return PprVector.from_dense(state.source, values)
