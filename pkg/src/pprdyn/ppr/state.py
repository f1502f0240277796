"""Solver configuration and per-source state containers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InvalidArgumentError


@dataclass(frozen=True)
class PprConfig:
    """Teleport probability and tolerances.

    ``eps_push`` uses the push semantics (residual bound ``eps/m * d(i)``),
    ``eps_ista`` is the l1 weight of the scaled objective. The ISTA KKT
    check allows ``kkt_rtol * eps_ista * sqrt(d(i)) + kkt_atol`` of slack.
    """

    alpha: float = 0.15
    eps_push: float = 1e-8
    eps_ista: float = 1e-12
    max_sweeps: int = 100_000
    kkt_rtol: float = 0.1
    kkt_atol: float = 1e-15

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.eps_push <= 0 or self.eps_ista <= 0:
            raise InvalidArgumentError("tolerances must be positive")
        if self.max_sweeps < 1:
            raise InvalidArgumentError("max_sweeps must be >= 1")
        if self.kkt_rtol < 0 or self.kkt_atol < 0:
            raise InvalidArgumentError("KKT slack must be non-negative")

    @property
    def step_size(self) -> float:
        return 1.0 / (2.0 - self.alpha)


@dataclass
class PprVector:
    """Sparse non-negative approximate PPR vector of one source."""

    source: int
    entries: dict[int, float] = field(default_factory=dict)

    @classmethod
    def from_dense(cls, source: int, values: np.ndarray) -> "PprVector":
        idx = np.flatnonzero(values > 0.0)
        return cls(int(source), {int(i): float(values[i]) for i in idx})

    def to_dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        for i, v in self.entries.items():
            out[i] = v
        return out

    def l1(self) -> float:
        return float(sum(abs(v) for v in self.entries.values()))

    def __len__(self):
        return len(self.entries)

    def items(self):
        return sorted(self.entries.items())

    def to_text(self) -> str:
        """One ``source<TAB>node<TAB>value`` line per nonzero, full precision."""
        return "".join(f"{self.source}\t{i}\t{v!r}\n" for i, v in self.items())


@dataclass
class PushState:
    """Forward-push state: estimate ``p`` and residual ``r`` (dense)."""

    source: int
    p: np.ndarray
    r: np.ndarray
    op_count: int = 0

    @classmethod
    def fresh(cls, source: int, n: int) -> "PushState":
        p = np.zeros(n)
        r = np.zeros(n)
        r[source] = 1.0
        return cls(int(source), p, r)

    def mass(self) -> float:
        """``sum(p) + sum(r)``; equals 1 for a consistent state."""
        return float(self.p.sum() + self.r.sum())

    def copy(self) -> "PushState":
        return PushState(self.source, self.p.copy(), self.r.copy(), self.op_count)


@dataclass
class PprState:
    """ISTA state in scaled coordinates: ``pi = sqrt(d) * x``.

    ``dirty`` lists coordinates whose optimality may have changed since the
    last solve; a fresh state only has the source. ``eps`` is the l1 weight
    the state was last solved at (``None`` if never), so a solve at a
    different weight knows to rescan every coordinate.
    """

    source: int
    x: np.ndarray
    grad: np.ndarray
    epoch: int = 0
    op_count: int = 0
    dirty: set = field(default_factory=set)
    eps: float | None = None

    @classmethod
    def fresh(cls, source: int, degree: np.ndarray, alpha: float) -> "PprState":
        n = degree.shape[0]
        g = np.zeros(n)
        if degree[source] > 0:
            g[source] = -alpha / np.sqrt(degree[source])
        return cls(int(source), np.zeros(n), g, dirty={int(source)})

    def copy(self) -> "PprState":
        return PprState(self.source, self.x.copy(), self.grad.copy(), self.epoch,
                        self.op_count, set(self.dirty), self.eps)


def save_state(path, state) -> None:
    """Write a solver state as an ``.npz`` archive."""
    kind = "push" if isinstance(state, PushState) else "ista"
    a = state.p if kind == "push" else state.x
    b = state.r if kind == "push" else state.grad
    extra = np.array(sorted(getattr(state, "dirty", ())), dtype=np.int64)
    with open(path, "wb") as fh:
        np.savez(fh, kind=np.array(kind), source=np.int64(state.source), a=a, b=b,
                 op_count=np.int64(state.op_count), epoch=np.int64(getattr(state, "epoch", 0)),
                 dirty=extra, eps=np.float64(np.nan if getattr(state, "eps", None) is None
                                             else state.eps))


def load_state(path):
    with np.load(path, allow_pickle=False) as z:
        kind = str(z["kind"])
        if kind == "push":
            return PushState(int(z["source"]), z["a"].copy(), z["b"].copy(), int(z["op_count"]))
        if kind == "ista":
            eps = float(z["eps"])
            return PprState(int(z["source"]), z["a"].copy(), z["b"].copy(), int(z["epoch"]),
                            int(z["op_count"]), set(z["dirty"].tolist()),
                            None if np.isnan(eps) else eps)
    raise InvalidArgumentError(f"{path}: unknown state kind {kind!r}")
