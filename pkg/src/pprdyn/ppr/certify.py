"""Independent post-hoc checks of solver states."""
from __future__ import annotations

import numpy as np

from ..graph import DynamicGraph
from . import _kernels
from .state import PprConfig, PprState, PushState


def _csr(g):
    return g.csr() if isinstance(g, DynamicGraph) else g


def exact_gradient(g, x: np.ndarray, source: int, alpha: float) -> np.ndarray:
    csr = _csr(g)
    out = np.zeros(csr.n)
    _kernels.ista_gradient(csr.indptr, csr.indices, csr.degree, x, source, alpha, out,
                           np.arange(csr.n, dtype=np.int64))
    return out


def exact_residual(g, p: np.ndarray, source: int, alpha: float) -> np.ndarray:
    csr = _csr(g)
    out = np.zeros(csr.n)
    _kernels.push_residual(csr.indptr, csr.indices, csr.degree, p, source, alpha, out)
    return out


def residual_check(g, state, alpha: float = 0.15) -> float:
    """Largest absolute gap between the maintained gradient (ISTA) or
    residual (push) and its from-scratch recomputation on ``g``."""
    if isinstance(state, PushState):
        ref = exact_residual(g, state.p, state.source, alpha)
        return float(np.max(np.abs(ref - state.r), initial=0.0))
    ref = exact_gradient(g, state.x, state.source, alpha)
    return float(np.max(np.abs(ref - state.grad), initial=0.0))


def push_certificate(g, state: PushState, config: PprConfig, slack: float = 1e-12) -> bool:
    """``|r(i)| <= eps/m * d(i)`` for every node, using a recomputed residual."""
    csr = _csr(g)
    r = exact_residual(csr, state.p, state.source, config.alpha)
    bound = config.eps_push / max(csr.m, 1) * csr.degree
    return bool(np.all(np.abs(r) <= bound + slack))


def kkt_violation(g, state: PprState, config: PprConfig) -> np.ndarray:
    """Per-coordinate first-order violation in units of the allowed slack
    (<= 1 means satisfied), from a recomputed gradient."""
    csr = _csr(g)
    grad = exact_gradient(csr, state.x, state.source, config.alpha)
    thr = config.eps_ista * np.sqrt(csr.degree)
    pos = state.x > 0
    viol = np.where(pos, np.abs(grad + thr), np.maximum(np.abs(grad) - thr, 0.0))
    viol[state.x < 0] = np.inf
    allowed = config.kkt_rtol * thr + config.kkt_atol
    return viol / allowed


def ista_certificate(g, state: PprState, config: PprConfig, slack: float = 2.0) -> bool:
    """KKT condition on the recomputed gradient. ``slack`` multiplies the
    solver's own allowance to absorb drift between maintained and exact
    gradients."""
    return bool(np.all(kkt_violation(g, state, config) <= slack))


def certify(g, state, config: PprConfig) -> bool:
    if isinstance(state, PushState):
        return push_certificate(g, state, config)
    return ista_certificate(g, state, config)
