"""Monte Carlo estimate containers and weighted-mean helpers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

__all__ = ["MomentEstimate", "weighted_estimate", "ess"]


@dataclass
class MomentEstimate:
    """Monte Carlo estimate of an expectation.

    Attributes
    ----------
    mean, stderr : float
    replicas : int
        Number of samples that entered the estimate.
    ess : float
        Effective sample size ``(Σw)²/Σw²`` of the importance weights.
    seed : int or None
    params : dict
    status : {"ok", "unreliable"}
        ``"unreliable"`` when the ESS floor (or another quality gate) was missed.
    diagnostics : dict
    """

    mean: float
    stderr: float
    replicas: int
    ess: float
    seed: int | None = None
    params: dict[str, Any] = field(default_factory=dict)
    status: str = "ok"
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")
        if self.ess > self.replicas * (1 + 1e-9):
            raise ValueError("ess cannot exceed replicas")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def rel_err(self) -> float:
        return self.stderr / abs(self.mean) if self.mean else math.inf

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MomentEstimate":
        return cls(**d)


def ess(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=float)
    top = float(np.max(np.abs(w))) if w.size else 0.0
    if not top > 0 or not math.isfinite(top):
        return 0.0
    w = w / top
    s2 = float(np.sum(w * w))
    return float(np.sum(w)) ** 2 / s2 if s2 > 0 else 0.0


def weighted_estimate(values: np.ndarray, log_weights: np.ndarray | None, *, seed=None,
                      params=None, ess_floor: float = 100.0,
                      diagnostics: dict | None = None) -> MomentEstimate:
    """Estimate ``E[w v]`` where ``w = exp(log_weights)`` has known unit mean.

    The weights are normalised by an exact denominator upstream, so this is a
    plain (not self-normalised) average of ``w v``.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if log_weights is None:
        w = np.ones(n)
        wv = v
    else:
        w = np.exp(np.asarray(log_weights, dtype=float))
        wv = w * v
    mean = float(np.mean(wv))
    stderr = float(np.std(wv, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    e = n if log_weights is None else min(float(n), ess(w))
    status = "ok" if e >= min(ess_floor, n) else "unreliable"
    if not math.isfinite(mean):
        status = "unreliable"
    return MomentEstimate(mean, stderr, n, e, seed, dict(params or {}), status,
                          dict(diagnostics or {}))
