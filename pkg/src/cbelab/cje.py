"""Circular-Jacobi expectations of the normalised polynomial ``q_N``.

For a chain of size ``N``, ``|q_N(e^{ix/N})| = |X_N(e^{ix/N})| / |X_N(1)|``.
Expectations under the circular-Jacobi law ``CJ_{N,β,δ}`` (the CβE tilted by
``|X_N(1)|^{2δ}``) are computed by sampling chains from a proposal tilt
``δ_p`` and weighting with

    w = |X_N(1)|^{2(δ - δ_p)} · E|X|^{2δ_p} / E|X|^{2δ}

where both expectations are exact Morris products. ``δ_p = 0`` is the plain
CβE change of measure; the default ``δ_p = δ`` samples the circular-Jacobi
law directly (``w ≡ 1``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import opuc, rng as rngmod
from .errors import DomainError, HypothesisError
from .estimates import MomentEstimate, weighted_estimate
from .specfun import morris_moment

__all__ = [
    "MomentEstimate",
    "WeightedSample",
    "ProxyPaths",
    "q_abs",
    "cj_joint_moment",
    "cj_joint_samples",
    "xi_proxy_paths",
    "mom_rhs_estimate",
    "check_mom_hypotheses",
    "default_quad_points",
]

DEFAULT_ESS_FLOOR = 100.0


@dataclass
class WeightedSample:
    """Per-replica payloads with their log importance weights."""

    log_weight: np.ndarray
    payload: np.ndarray
    info: dict[str, Any] = field(default_factory=dict)


@dataclass
class ProxyPaths:
    """Finite-N samples of ``x ↦ log|q_N(e^{ix/N})|`` under the circular-Jacobi law.

    Attributes
    ----------
    x_grid : ndarray, shape (G,)
    log_abs : ndarray, shape (R, G)
    log_weight : ndarray, shape (R,)
    params : dict
    """

    x_grid: np.ndarray
    log_abs: np.ndarray
    log_weight: np.ndarray
    params: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None

    def moment(self, powers: Sequence[float] | np.ndarray, ess_floor: float = DEFAULT_ESS_FLOOR) -> MomentEstimate:
        """Weighted mean of ``prod_g |path(x_g)|^{powers_g}``."""
        p = np.asarray(powers, dtype=float)
        logv = self.log_abs @ p
        lw = None if not np.any(self.log_weight) else self.log_weight
        return weighted_estimate(np.exp(logv), lw, seed=self.seed, ess_floor=ess_floor,
                                 params={**self.params, "powers": p.tolist()})


def q_abs(chain: opuc.VerblunskyChain, x: float) -> float:
    """``log|q_N(e^{ix/N})|`` with ``N = chain.size``; ``-inf`` if ``X_N(1) = 0``."""
    N = chain.size
    lx = opuc.log_abs_batch(chain.coefficients()[None, :], np.array([0.0, float(x) / N]))[0]
    if lx[0] == -math.inf:
        return -math.inf
    return float(lx[1] - lx[0])


def _validate_common(beta, delta, N):
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta!r}")
    if delta < 0:
        raise DomainError(f"delta must be nonnegative, got {delta!r}")
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")


def _log_q_block(beta, N, seed, purpose, block, size, delta, tilt, x_angles):
    """Sample one block and return ``(log|q| at x_angles, log weights, zero count)``."""
    batch = opuc.chains_for_block(beta, N, seed, purpose, block, size, tilt=tilt)
    thetas = np.concatenate(([0.0], x_angles))
    la = opuc.log_abs_batch(batch.coeffs, thetas)
    l1 = la[:, 0]
    good = np.isfinite(l1)
    lq = la[good, 1:] - l1[good, None]
    if delta != tilt:
        lw = 2.0 * (delta - tilt) * l1[good] + morris_moment(beta, N, tilt) - morris_moment(beta, N, delta)
    else:
        lw = np.zeros(lq.shape[0])
    return lq, lw, int(np.count_nonzero(~good))


def _collect(parts):
    lq = np.concatenate([p[0] for p in parts], axis=0)
    lw = np.concatenate([p[1] for p in parts])
    zeros = sum(p[2] for p in parts)
    return lq, lw, zeros


def _prepare_joint(beta, delta, N, xs, rs):
    beta, delta = float(beta), float(delta)
    _validate_common(beta, delta, N)
    xs = [float(x) for x in xs]
    rs = [float(r) for r in rs]
    if len(xs) != len(rs):
        raise DomainError("xs and rs must have equal length")
    if any(r < 0 for r in rs):
        raise DomainError("exponents must be nonnegative")
    if sum(rs) > 2.0 * delta + 1e-12:
        raise HypothesisError(f"sum(rs)={sum(rs)!r} exceeds 2*delta={2 * delta!r}")
    # canonical ordering makes results invariant under joint permutation of (xs, rs)
    pairs = sorted(zip(xs, rs))
    return beta, delta, np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def cj_joint_samples(beta: float, delta: float, N: int, xs: Sequence[float], rs: Sequence[float],
                     replicas: int, seed: int, *, proposal_tilt: float | None = None,
                     threads: int | None = None, purpose: str = "cj") -> WeightedSample:
    """Per-replica values ``prod_j |q_N(e^{ix_j/N})|^{r_j}`` with their log weights.

    Replica ``i`` uses the same chain for every ``N`` (coefficients are drawn
    column by column), which couples estimates across ``N``.
    """
    beta, delta, xs_c, rs_c = _prepare_joint(beta, delta, N, xs, rs)
    tilt = delta if proposal_tilt is None else float(proposal_tilt)

    def work(block, size):
        return _log_q_block(beta, int(N), int(seed), purpose, block, size, delta, tilt, xs_c / N)

    lq, lw, zeros = _collect(rngmod.map_blocks(work, replicas, threads))
    logv = np.zeros(lq.shape[0])
    for j in range(rs_c.size):
        logv += rs_c[j] * lq[:, j]
    return WeightedSample(lw, np.exp(logv), {"zero_at_one": zeros, "xs": xs_c.tolist(), "rs": rs_c.tolist(),
                                             "proposal_tilt": tilt})


def cj_joint_moment(beta: float, delta: float, N: int, xs: Sequence[float], rs: Sequence[float],
                    replicas: int, seed: int | None = None, *, proposal_tilt: float | None = None,
                    ess_floor: float = DEFAULT_ESS_FLOOR, threads: int | None = None,
                    purpose: str = "cj") -> MomentEstimate:
    """``E_{CJ_{N,β,δ}}[prod_j |q_N(e^{ix_j/N})|^{r_j}]``.

    Parameters
    ----------
    beta, delta, N : float, float, int
    xs, rs : sequences of equal length
        Evaluation points (microscopic scale) and nonnegative exponents with
        ``sum(rs) <= 2 delta``.
    replicas : int
    seed : int, optional
        Root of the counter-derived streams; generated if omitted.
    proposal_tilt : float, optional
        ``δ_p`` of the sampling law; defaults to ``delta``. ``0`` reproduces
        the plain CβE change of measure with the exact Morris denominator.
    ess_floor : float
        Estimates with smaller effective sample size are flagged ``unreliable``.

    Returns
    -------
    MomentEstimate
    """
    seed = rngmod.new_seed() if seed is None else int(seed)
    ws = cj_joint_samples(beta, delta, N, xs, rs, replicas, seed, proposal_tilt=proposal_tilt,
                          threads=threads, purpose=purpose)
    tilt = ws.info["proposal_tilt"]
    params = {"beta": float(beta), "delta": float(delta), "N": int(N), "xs": ws.info["xs"],
              "rs": ws.info["rs"], "replicas": int(replicas), "proposal_tilt": tilt}
    return weighted_estimate(ws.payload, ws.log_weight if tilt != delta else None, seed=seed,
                             params=params, ess_floor=ess_floor,
                             diagnostics={"zero_at_one": ws.info["zero_at_one"]})


def xi_proxy_paths(beta: float, delta: float, N: int, x_grid: Sequence[float], replicas: int,
                   seed: int | None = None, *, proposal_tilt: float | None = None,
                   threads: int | None = None, purpose: str = "cj") -> ProxyPaths:
    """Finite-N proxies ``|q_N(e^{ix/N})|`` for ``|ξ^{β,δ}(x)|`` on ``x_grid``."""
    beta, delta = float(beta), float(delta)
    _validate_common(beta, delta, N)
    xg = np.asarray(x_grid, dtype=float)
    if np.any(np.abs(xg) > math.pi * N):
        raise DomainError("x_grid must lie within [-pi N, pi N]")
    tilt = delta if proposal_tilt is None else float(proposal_tilt)
    seed = rngmod.new_seed() if seed is None else int(seed)

    def work(block, size):
        return _log_q_block(beta, int(N), seed, purpose, block, size, delta, tilt, xg / N)

    lq, lw, zeros = _collect(rngmod.map_blocks(work, replicas, threads))
    params = {"beta": beta, "delta": delta, "N": int(N), "replicas": int(replicas),
              "proposal_tilt": tilt, "zero_at_one": zeros}
    return ProxyPaths(xg, lq, lw, params, seed)


def check_mom_hypotheses(beta: float, k: float, s: float) -> None:
    """Raise :class:`HypothesisError` unless the moments-of-moments limit theorem applies."""
    if k < 1 or not s > 0 or not beta > 0:
        raise HypothesisError(f"need k >= 1, s > 0, beta > 0 (k={k}, s={s}, beta={beta})")
    if float(k).is_integer():
        if not 2.0 * k * s * s > beta:
            raise HypothesisError(f"need 2ks^2 > beta, got {2 * k * s * s} <= {beta}")
        return
    ck = math.ceil(k)
    if not 2.0 * s * s * (2.0 * k - ck) > beta:
        raise HypothesisError("need 2s^2(2k - ceil(k)) > beta")
    c1 = math.ceil(k - 1)
    if not 4.0 * c1 * (k - c1) * s * s > beta:
        raise HypothesisError("need 4 ceil(k-1)(k - ceil(k-1)) s^2 > beta")


def default_quad_points(R: float) -> int:
    return max(512, int(math.ceil(16 * R)))


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def mom_rhs_estimate(beta: float, k: float, s: float, N: int, R: float | None = None,
                     quad_points: int | None = None, replicas: int = 1000,
                     seed: int | None = None, *, proposal_tilt: float | None = None,
                     threads: int | None = None, ess_floor: float = DEFAULT_ESS_FLOOR,
                     tail_target: float = 0.01, tail_correction: bool = False) -> MomentEstimate:
    """``E_{CJ_{N,β,ks}}[(∫_{-R}^{R} |q_N(e^{ix/N})|^{2s} dx)^{k-1}]``.

    The integral is a trapezoid rule on ``quad_points`` nodes (default
    ``max(512, 16R)``). The diagnostics record a tail estimate for the
    truncated part, from a power-law fit ``C|x|^{-a}`` with
    ``a = 4s²(k-1)/β`` over ``R/2 <= |x| <= R``. When ``R`` is omitted it is
    chosen from a pilot run so that the tail estimate is below
    ``tail_target`` of the integral. With ``tail_correction`` each replica's
    integral is extended beyond ``±R`` by its own fitted power-law tail
    ``2 c_i R^{1-a}/(a-1)`` before raising to ``k - 1``.
    """
    beta, k, s = float(beta), float(k), float(s)
    check_mom_hypotheses(beta, k, s)
    seed = rngmod.new_seed() if seed is None else int(seed)
    delta = k * s
    params = {"beta": beta, "k": k, "s": s, "N": int(N), "R": R, "quad_points": quad_points,
              "replicas": int(replicas), "tail_correction": bool(tail_correction)}
    if k == 1.0:
        return MomentEstimate(1.0, 0.0, int(replicas), float(replicas), seed, params)
    a = 4.0 * s * s * (k - 1.0) / beta
    if a <= 1.0:
        raise HypothesisError(f"tail exponent 4s^2(k-1)/beta = {a} <= 1: truncated integral does not converge")
    if R is None:
        pilot = mom_rhs_estimate(beta, k, s, N, 40.0, None, min(replicas, 256), seed,
                                 proposal_tilt=proposal_tilt, threads=threads, ess_floor=0)
        frac = pilot.diagnostics["tail_fraction"]
        R = 40.0 * max(1.0, (frac / tail_target) ** (1.0 / (a - 1.0)))
        R = min(R, 0.5 * math.pi * N)
        params["R"] = R
    R = float(R)
    if R > math.pi * N:
        raise DomainError(f"R={R} exceeds pi*N")
    n = default_quad_points(R) if quad_points is None else int(quad_points)
    params["quad_points"] = n
    xg = np.linspace(-R, R, n)
    tw = _trapezoid_weights(n, xg[1] - xg[0])
    far = np.abs(xg) >= 0.5 * R
    tilt = delta if proposal_tilt is None else float(proposal_tilt)

    def work(block, size):
        lq, lw, zeros = _log_q_block(beta, int(N), seed, "mom-rhs", block, size, delta, tilt, xg / N)
        vals = np.exp(2.0 * s * lq)
        integral = vals @ tw
        far_mean = (vals[:, far] * np.abs(xg[far]) ** a).mean(axis=1)
        return integral, lw, zeros, far_mean

    parts = rngmod.map_blocks(work, replicas, threads)
    integral = np.concatenate([p[0] for p in parts])
    lw = np.concatenate([p[1] for p in parts])
    far_c = np.concatenate([p[3] for p in parts])
    w = np.exp(lw)
    c_fit = float(np.mean(w * far_c))
    mean_int = float(np.mean(w * integral))
    tail = 2.0 * c_fit * R ** (1.0 - a) / (a - 1.0)
    if tail_correction:
        integral = integral + 2.0 * far_c * R ** (1.0 - a) / (a - 1.0)
    diag = {"tail_exponent": a, "tail_estimate": tail, "tail_corrected": bool(tail_correction),
            "tail_fraction": tail / mean_int if mean_int > 0 else math.inf,
            "mean_integral": mean_int, "zero_at_one": sum(p[2] for p in parts)}
    return weighted_estimate(integral ** (k - 1.0), lw if tilt != delta else None, seed=seed,
                             params=params, ess_floor=ess_floor, diagnostics=diag)
