"""Exact CβE_N expectations: quadrature over the ordered simplex (N ≤ 4) and β = 2 Toeplitz determinants."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import DomainError
from .specfun import z_const

__all__ = ["brute_force_joint_moment", "cue_toeplitz_moment", "MAX_N", "MAX_TOEPLITZ_N"]

MAX_N = 4
MAX_TOEPLITZ_N = 4096
_TWO_PI = 2.0 * math.pi


def _gl(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def brute_force_joint_moment(beta: float, N: int, thetas: Sequence[float], ss: Sequence[float],
                             nodes: int | None = None) -> float:
    """``E_{CβE_N}[prod_m |X_N(e^{iθ_m})|^{2 s_m}]`` by nested Gauss–Legendre quadrature.

    The eigenangles are integrated over ``0 < φ_1 < ... < φ_N < 2π`` (times
    ``N!``); each one-dimensional range is split at the evaluation angles,
    where ``|1 - e^{i(θ-φ)}|^{2s}`` may have a kink. The integrand is then
    smooth on every cell, so the rule converges geometrically for integer or
    half-integer ``s`` and ``β``. Other values leave algebraic endpoint
    singularities (at ``β = 1/2`` the error is about 1e-5 at the default
    node counts).

    Parameters
    ----------
    beta : float
    N : int, 1 <= N <= 4
    thetas, ss : sequences
        Evaluation angles and exponents.
    nodes : int, optional
        Gauss nodes per cell (default depends on ``N``).
    """
    beta = float(beta)
    if not beta > 0:
        raise DomainError("beta must be positive")
    if int(N) != N or N < 1:
        raise DomainError("N must be a positive integer")
    N = int(N)
    if N > MAX_N:
        raise DomainError(f"brute-force quadrature supports N <= {MAX_N}, got {N}")
    th = np.mod(np.asarray(thetas, dtype=float), _TWO_PI)
    sv = np.asarray(ss, dtype=float)
    if th.shape != sv.shape:
        raise DomainError("thetas and ss must have equal length")
    if np.all(sv == 0):
        return 1.0
    if nodes is None:
        nodes = {1: 60, 2: 48, 3: 32, 4: 20}[N]
    gx, gw = _gl(nodes)
    cuts = np.sort(np.unique(th))

    # partial points (P, d) and weights (P,)
    pts = np.zeros((1, 0))
    wts = np.ones(1)
    for _ in range(N):
        lo = pts[:, -1] if pts.shape[1] else np.zeros(pts.shape[0])
        edges = np.concatenate([lo[:, None], np.clip(np.broadcast_to(cuts, (lo.size, cuts.size)), lo[:, None], _TWO_PI),
                                np.full((lo.size, 1), _TWO_PI)], axis=1)
        a = edges[:, :-1]
        b = edges[:, 1:]
        h = b - a  # (P, C)
        new = a[:, :, None] + h[:, :, None] * gx[None, None, :]  # (P, C, n)
        nw = wts[:, None, None] * h[:, :, None] * gw[None, None, :]
        keep = (h > 0)[:, :, None] & np.ones_like(gx, dtype=bool)[None, None, :]
        P = pts.shape[0]
        rep = np.repeat(np.arange(P), keep.reshape(P, -1).sum(axis=1))
        pts = np.concatenate([pts[rep], new[keep][:, None]], axis=1)
        wts = nw[keep]

    logf = np.zeros(pts.shape[0])
    for j in range(N):
        for k in range(j + 1, N):
            logf += beta * np.log(np.abs(2.0 * np.sin(0.5 * (pts[:, k] - pts[:, j]))))
    for t, s in zip(th, sv):
        if s == 0:
            continue
        with np.errstate(divide="ignore"):
            logf += 2.0 * s * np.sum(np.log(np.abs(2.0 * np.sin(0.5 * (t - pts)))), axis=1)
    log_norm = math.lgamma(N + 1) - z_const(beta, N)
    return float(np.sum(wts * np.exp(logf + log_norm)))


def cue_toeplitz_moment(N: int, thetas: Sequence[float], ms: Sequence[int]) -> float:
    """``E_{CUE_N}[prod_j |X_N(e^{iθ_j})|^{2 m_j}]`` for nonnegative integers ``m_j``.

    By Heine's identity the expectation is the ``N x N`` Toeplitz determinant
    of the symbol ``prod_j |1 - e^{i(φ-θ_j)}|^{2 m_j}``, a trigonometric
    polynomial of degree ``sum(m)``, so the matrix is banded and the value is
    exact up to rounding. This is the β = 2 case only.
    """
    if int(N) != N or N < 1 or N > MAX_TOEPLITZ_N:
        raise DomainError(f"N must be an integer in [1, {MAX_TOEPLITZ_N}]")
    N = int(N)
    th = np.asarray(thetas, dtype=float)
    mv = np.asarray(ms)
    if th.shape != mv.shape:
        raise DomainError("thetas and ms must have equal length")
    if np.any(mv < 0) or np.any(mv != np.round(mv)):
        raise DomainError("exponents must be nonnegative integers")
    # Laurent coefficients, index d <-> e^{i(d - deg)φ}
    coef = np.ones(1, dtype=complex)
    for t, m in zip(th, mv.astype(int)):
        fac = np.array([-np.exp(1j * t), 2.0, -np.exp(-1j * t)])
        for _ in range(m):
            coef = np.convolve(coef, fac)
    deg = (coef.size - 1) // 2
    T = np.zeros((N, N), dtype=complex)
    for d in range(-deg, deg + 1):
        if abs(d) < N:
            T += np.diag(np.full(N - abs(d), coef[d + deg]), -d)
    sign, logdet = np.linalg.slogdet(T)
    return float(math.exp(logdet) * sign.real)
