"""The stochastic zeta function as a truncated principal-value product over point samples."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import cje, rng as rngmod, sinebeta
from .errors import DomainError, HypothesisError
from .estimates import MomentEstimate, weighted_estimate
from .sinebeta import PointSample

__all__ = ["ZetaSample", "xi_pv", "xi_abs_batch", "CrossCheck", "xi_moment_cross_check",
           "EVAL_FRACTION"]

# evaluation points are restricted to |z| <= R * EVAL_FRACTION
EVAL_FRACTION = 0.25
_TAILS = ("none", "mean-density")


def _check_args(points: PointSample, z: complex, R_used: float):
    lo, hi = points.window
    if R_used <= 0 or -R_used < lo - 1e-12 or R_used > hi + 1e-12:
        raise DomainError(f"R_used={R_used} must be positive and inside the sample window {points.window}")
    if abs(z) > EVAL_FRACTION * R_used * (1 + 1e-12):
        raise DomainError(f"|z|={abs(z)} exceeds the evaluation limit R/4 = {EVAL_FRACTION * R_used}")
    if np.any(points.points == 0.0):
        raise DomainError("a point sits exactly at 0; reject the sample")


def _tail_factor(z: complex, R_used: float, tail: str) -> complex:
    if tail == "none":
        return 1.0
    if tail == "mean-density":
        # missing factors |x| >= R at density 1/(2π): exp(-z² Σ 1/(2x²)) ≈ exp(-z²/(2πR))
        return np.exp(-(z * z) / (2.0 * math.pi * R_used))
    raise DomainError(f"unknown tail policy {tail!r}; expected one of {_TAILS}")


def xi_pv(points: PointSample, z: complex, R_used: float, tail: str = "none") -> complex:
    """``prod_{|x| < R_used} (1 - z/x)`` over the sample's points.

    Accumulated as a sum of log-moduli plus a sum of arguments. For real
    ``z`` the result is exactly real, with sign ``(-1)^{#negative factors}``.
    ``tail="mean-density"`` multiplies by ``exp(-z²/(2πR))``, the mean
    contribution of the omitted factors at density ``1/(2π)``.
    """
    _check_args(points, z, R_used)
    if z == 0:
        return 1.0 + 0.0j
    x = points.points[np.abs(points.points) < R_used]
    f = 1.0 - z / x
    if np.any(f == 0):
        return 0.0 + 0.0j
    logmag = float(np.sum(np.log(np.abs(f))))
    tf = _tail_factor(z, R_used, tail)
    if np.isreal(z):
        neg = int(np.count_nonzero(np.real(f) < 0))
        return complex((-1.0) ** neg * math.exp(logmag) * float(np.real(tf)), 0.0)
    arg = float(np.sum(np.angle(f)))
    return complex(np.exp(logmag + 1j * arg) * tf)


def xi_abs_batch(samples: Sequence[PointSample], xs: Sequence[float], R_used: float,
                 tail: str = "none") -> np.ndarray:
    """``log|ξ(x)|`` for real ``xs`` over many samples; shape ``(len(samples), len(xs))``."""
    xs = np.asarray(xs, dtype=float)
    out = np.zeros((len(samples), xs.size))
    for j, x in enumerate(xs):
        if abs(x) > EVAL_FRACTION * R_used * (1 + 1e-12):
            raise DomainError(f"|x|={abs(x)} exceeds R/4")
    tails = np.array([math.log(abs(_tail_factor(x, R_used, tail))) for x in xs])
    for i, s in enumerate(samples):
        pts = s.points[np.abs(s.points) < R_used]
        if np.any(pts == 0.0):
            raise DomainError("a point sits exactly at 0; reject the sample")
        with np.errstate(divide="ignore"):
            out[i] = np.sum(np.log(np.abs(1.0 - xs[:, None] / pts[None, :])), axis=1) + tails
    out[:, xs == 0] = 0.0
    return out


@dataclass
class ZetaSample:
    """One point configuration with a cache of truncated-product values."""

    beta: float
    delta: float
    points: PointSample
    cache: dict = field(default_factory=dict)

    def value(self, z: complex, R_used: float, tail: str = "none") -> complex:
        key = (complex(z), float(R_used), tail)
        if key not in self.cache:
            self.cache[key] = xi_pv(self.points, z, R_used, tail)
        return self.cache[key]


@dataclass
class CrossCheck:
    """Two estimates of the same expectation and their standardised discrepancy."""

    route_a: MomentEstimate
    route_b: MomentEstimate
    z_score: float
    flags: list[str] = field(default_factory=list)
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def agree_2sigma(self) -> bool:
        return abs(self.z_score) <= 2.0


def _z(a: MomentEstimate, b: MomentEstimate) -> float:
    s = math.hypot(a.stderr, b.stderr)
    if s == 0:
        return 0.0 if a.mean == b.mean else math.inf
    return (a.mean - b.mean) / s


def sde_moment(beta: float, delta: float, xs: Sequence[float], rs: Sequence[float], *,
               paths: int = 2000, R: float = 80.0, spacing: float = 0.5, dt: float | None = None,
               policy: str = "geometric", tail: str = "mean-density", seed: int | None = None,
               threads: int | None = None, max_discard: float = 0.01) -> MomentEstimate:
    """``E[prod_j |ξ^{β,δ}(x_j)|^{r_j}]`` from simulated Hua–Pickrell samples and the PV product."""
    seed = rngmod.new_seed() if seed is None else int(seed)
    xs = np.asarray(xs, dtype=float)
    rs = np.asarray(rs, dtype=float)
    lam = sinebeta.lambda_grid(R, spacing)
    batch = sinebeta.simulate_endpoints(beta, delta, lam, paths, seed, dt=dt, policy=policy,
                                        threads=threads, purpose="zeta-sde")
    samples, discarded = sinebeta.sample_points(batch, (-R, R))
    la = xi_abs_batch(samples, xs, R, tail)
    vals = np.exp(la @ rs)
    est = weighted_estimate(vals, None, seed=seed,
                            params={"beta": beta, "delta": delta, "xs": xs.tolist(), "rs": rs.tolist(),
                                    "paths": paths, "R": R, "spacing": spacing, "dt": batch.grid.dt,
                                    "policy": policy, "tail": tail},
                            diagnostics={"discarded": discarded, "jump_violations": batch.jump_violations,
                                         "monotone_violation_rate": batch.monotone_violation_rate()})
    if discarded > max_discard * paths:
        est.status = "unreliable"
    return est


def xi_moment_cross_check(beta: float, delta: float, xs: Sequence[float], rs: Sequence[float],
                          sde_params: dict | None = None, cje_params: dict | None = None) -> CrossCheck:
    """Compare the PV-product route with the finite-N circular-Jacobi proxy.

    Parameters
    ----------
    sde_params : dict
        Keyword arguments for :func:`sde_moment` (``paths``, ``R``, ``spacing``,
        ``dt``, ``policy``, ``tail``, ``seed``, ``threads``).
    cje_params : dict
        ``N``, ``replicas``, ``seed``, ``threads`` for
        :func:`cbelab.cje.cj_joint_moment`.
    """
    if sum(rs) > 2.0 * delta + 1e-12:
        raise HypothesisError("sum(rs) must not exceed 2 delta")
    sp = dict(sde_params or {})
    cp = {"N": 512, "replicas": 4000, **(cje_params or {})}
    a = sde_moment(beta, delta, xs, rs, **sp)
    b = cje.cj_joint_moment(beta, delta, cp.pop("N"), xs, rs, cp.pop("replicas"), cp.pop("seed", None), **cp)
    flags = []
    if not a.ok:
        flags.append("sde-route-unreliable")
    if not b.ok:
        flags.append("cje-route-unreliable")
    return CrossCheck(a, b, _z(a, b), flags,
                      {"beta": beta, "delta": delta, "xs": list(xs), "rs": list(rs)})
