"""Combine per-factor rationality scores into one reward.

The weights are a softmax of ``lam * score``: ``lam = 0`` is the plain mean,
large positive ``lam`` approaches the best-scoring discriminator and large
negative ``lam`` the worst one. All arithmetic is float64.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

PRESETS = {
    "mean": 0.0,
    "max": 40.0,
    "min": -40.0,
}


@dataclass(frozen=True)
class CombinationParams:
    lam: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.lam):
            raise ConfigError(f"lambda must be finite, got {self.lam}")

    @classmethod
    def from_mode(cls, mode: str, lam: float = 0.0) -> "CombinationParams":
        """``mean``/``max``/``min`` presets, or ``soft`` with an explicit lambda."""
        if mode == "soft":
            return cls(float(lam))
        try:
            return cls(PRESETS[mode])
        except KeyError:
            raise ConfigError(f"unknown lambda mode {mode!r}; expected soft, {', '.join(PRESETS)}") from None


def _scores(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 0 or y.shape[-1] < 1:
        raise ContractError("need at least one discriminator score")
    if not np.all(np.isfinite(y)):
        raise ContractError("discriminator scores must be finite")
    return y


def _lam(lam) -> float:
    return lam.lam if isinstance(lam, CombinationParams) else float(lam)


def combination_weights(y, lam) -> np.ndarray:
    """Softmax of ``lam * y`` over the last axis."""
    y = _scores(y)
    z = _lam(lam) * y
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def q_value(y, lam):
    """Expected return: the weighted sum of scores, kept inside [min y, max y].

    Accepts a single score vector (returns a float) or a ``[B, m]`` batch.
    """
    y = _scores(y)
    q = (combination_weights(y, lam) * y).sum(axis=-1)
    q = np.clip(q, y.min(axis=-1), y.max(axis=-1))
    return float(q) if q.ndim == 0 else q
