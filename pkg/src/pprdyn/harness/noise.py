"""Gaussian attribute noise mixed in with a snapshot-dependent weight."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidArgumentError


@dataclass(frozen=True)
class NoiseConfig:
    """``lambda_t = clamp(t/T + lambda_base, 0, 1)`` is the weight kept on
    the clean features. ``mu`` / ``sigma`` default to the moments of the
    matrix passed to :func:`apply_noise`; set them via :meth:`from_features`
    to pin them to the original matrix once."""

    lambda_base: float = 0.0
    mu: float | None = None
    sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lambda_base <= 1.0:
            raise InvalidArgumentError("lambda_base must be in [0, 1]")
        if self.sigma is not None and self.sigma < 0:
            raise InvalidArgumentError("sigma must be non-negative")

    @classmethod
    def from_features(cls, X: np.ndarray, lambda_base: float = 0.0, seed: int = 0) -> "NoiseConfig":
        X = np.asarray(X, dtype=np.float64)
        return cls(lambda_base, float(X.mean()), float(X.std()), seed)

    def weight(self, t: int, T: int) -> float:
        return float(np.clip(t / T + self.lambda_base, 0.0, 1.0))


def apply_noise(X: np.ndarray, t: int, T: int, cfg: NoiseConfig) -> np.ndarray:
    """``lam * X + (1 - lam) * N(mu, sigma^2)`` elementwise; the noise draw
    depends only on ``(cfg.seed, t)``."""
    if T < 1 or not 0 <= t <= T:
        raise InvalidArgumentError(f"need 0 <= t <= T and T >= 1, got t={t}, T={T}")
    lam = cfg.weight(t, T)
    if lam == 1.0:
        return np.array(X, copy=True)
    X64 = np.asarray(X, dtype=np.float64)
    mu = X64.mean() if cfg.mu is None else cfg.mu
    sigma = X64.std() if cfg.sigma is None else cfg.sigma
    rng = np.random.default_rng([cfg.seed, t])
    noise = rng.normal(mu, sigma, size=X.shape)
    return (lam * X64 + (1.0 - lam) * noise).astype(X.dtype, copy=False)
