"""Personalized PageRank solvers: power iteration (oracle), forward push
and ISTA, with warm-start maintenance under edge insertions."""
from .certify import certify, exact_gradient, exact_residual, ista_certificate, push_certificate, residual_check
from .solvers import (adjust_batch, forward_push, ista_adjust_edge, ista_solve, power_iteration,
                      push_adjust_edge, to_ppr)
from .state import PprConfig, PprState, PprVector, PushState, load_state, save_state

__all__ = [
    "PprConfig", "PprState", "PprVector", "PushState", "load_state", "save_state",
    "adjust_batch", "certify", "exact_gradient", "exact_residual", "forward_push",
    "ista_adjust_edge", "ista_certificate", "ista_solve", "power_iteration",
    "push_adjust_edge", "push_certificate", "residual_check", "to_ppr",
]
