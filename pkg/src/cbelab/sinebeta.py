"""Coupled Prüfer diffusions, Sine_β / Hua–Pickrell point samples and their statistics.

The diffusion for each ``λ`` is

    dp = λ(β/4)e^{βt/4} dt + Re[(e^{-ip} - 1)(dB + i dW - iδ dt)],

with ``B`` and ``W`` independent standard real Brownian motions shared by all
``λ``. It is integrated by Euler–Maruyama from ``t0 < 0`` to ``0``; the
deterministic drift is integrated exactly over each step. Points are the
``λ`` with ``p_λ(0) ∈ θ + 2πℤ`` where ``θ`` is drawn from the ``Θ_δ`` law.

Time grids
----------
``policy="uniform"`` uses ``ceil(-t0/dt)`` equal steps. ``policy="geometric"``
(default) keeps the base step once ``λ_max e^{βt/4} >= 1`` and lengthens it
proportionally to ``1/(λ_max e^{βt/4})`` earlier on (capped). In that early
range ``p`` is small and the local error is proportional to ``p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numba import njit
from scipy.interpolate import PchipInterpolator

from . import rng as rngmod
from .errors import DomainError, NumericalError
from .estimates import MomentEstimate, weighted_estimate
from .opuc import tilted_unit_sample

__all__ = [
    "DrivingPath",
    "PruferEndpoint",
    "EndpointBatch",
    "PointSample",
    "PairCorrelation",
    "TimeGrid",
    "time_grid",
    "theta_delta_sample",
    "driving_path",
    "integrate_p",
    "simulate_endpoints",
    "extract_points",
    "sample_points",
    "estimate_pair_correlation",
    "estimate_intensity",
    "cos_moment",
    "lambda_grid",
    "sine_kernel_rho2",
]

_TWO_PI = 2.0 * math.pi
MAX_JUMP = 0.5 * math.pi
DEFAULT_CAP = 25.0


@dataclass(frozen=True)
class TimeGrid:
    """Step times ``t0 = times[0] < ... < times[-1] = 0``."""

    times: np.ndarray
    dt: float
    t0: float
    policy: str

    @property
    def steps(self) -> int:
        return self.times.size - 1


@dataclass
class DrivingPath:
    """One realisation of the complex driving noise on a time grid.

    ``increments[k] = ΔB_k + i ΔW_k`` over ``[times[k], times[k+1]]``; real
    and imaginary parts each have variance equal to the step length.
    """

    t0: float
    dt: float
    times: np.ndarray
    increments: np.ndarray
    seed: dict | None = None

    @property
    def steps(self) -> int:
        return self.increments.size


@dataclass
class PruferEndpoint:
    """``p_λ(0)`` on a sorted ``λ`` grid for one driving path."""

    lambdas: np.ndarray
    p_values: np.ndarray
    delta: float
    beta: float
    violations: int = 0

    def monotone_violations(self, tol: float = 1e-12) -> int:
        return int(np.count_nonzero(np.diff(self.p_values) < -tol))


@dataclass
class EndpointBatch:
    """Endpoints for many paths on a shared ``λ`` grid, with their ``Θ_δ`` draws."""

    lambdas: np.ndarray
    p_values: np.ndarray  # (P, L)
    thetas: np.ndarray  # (P,)
    delta: float
    beta: float
    grid: TimeGrid
    jump_violations: int = 0
    seed: int | None = None

    def endpoint(self, i: int) -> PruferEndpoint:
        return PruferEndpoint(self.lambdas, self.p_values[i], self.delta, self.beta)

    def monotone_violation_rate(self, tol: float = 1e-12) -> float:
        d = np.diff(self.p_values, axis=1)
        return float(np.count_nonzero(d < -tol)) / d.size


@dataclass
class PointSample:
    """Points of one configuration inside ``window``."""

    window: tuple[float, float]
    points: np.ndarray
    theta: float


@dataclass
class PairCorrelation:
    """Binned, translation-averaged pair correlation ``ρ̂⁽²⁾(0, x)``."""

    edges: np.ndarray
    rho: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    n_samples: int
    empty: np.ndarray
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def sine_kernel_rho2(x) -> np.ndarray:
    """β = 2 pair correlation ``1/(4π²) - sin²(x/2)/(π²x²)``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = 1.0 / (4 * math.pi ** 2) - np.sin(0.5 * x) ** 2 / (math.pi ** 2 * x * x)
    return np.where(x == 0, 0.0, v)


# ---------------------------------------------------------------------------
# grids and noise


def default_dt(beta: float) -> float:
    return 1e-3 * 4.0 / beta


def default_t0(beta: float, lam_max: float, tol: float = 1e-4) -> float:
    lam_max = max(abs(lam_max), tol)
    return min(-default_dt(beta), (4.0 / beta) * math.log(tol / lam_max))


def time_grid(beta: float, lam_max: float, dt: float | None = None, t0: float | None = None,
              policy: str = "geometric", cap: float = DEFAULT_CAP) -> TimeGrid:
    """Build the Euler–Maruyama time grid.

    Parameters
    ----------
    beta : float
    lam_max : float
        Largest ``|λ|`` to be integrated; sets ``t0`` and the geometric grid.
    dt : float, optional
        Base step, default ``1e-3 · 4/β``.
    t0 : float, optional
        Start time, default chosen so that ``λ_max e^{βt0/4} <= 1e-4``.
    policy : {"geometric", "uniform"}
    cap : float
        Maximal ratio between a geometric step and the base step.
    """
    if not beta > 0:
        raise DomainError("beta must be positive")
    dt = default_dt(beta) if dt is None else float(dt)
    t0 = default_t0(beta, lam_max) if t0 is None else float(t0)
    if not (dt > 0 and t0 < 0):
        raise DomainError("need dt > 0 and t0 < 0")
    if policy == "uniform":
        n = int(math.ceil(-t0 / dt - 1e-9))
        times = -dt * np.arange(n, -1, -1, dtype=float)
        times[-1] = 0.0
        return TimeGrid(times, dt, float(times[0]), policy)
    if policy != "geometric":
        raise DomainError(f"unknown time-grid policy {policy!r}")
    lam = max(abs(lam_max), 1e-300)
    ts = [0.0]
    t = 0.0
    q = beta / 4.0
    while t > t0:
        a = lam * math.exp(q * t)
        h = dt * min(cap, max(1.0, 1.0 / a))
        t = max(t - h, t0)
        if t - t0 < 1e-3 * dt:
            t = t0
        ts.append(t)
    times = np.array(ts[::-1])
    return TimeGrid(times, dt, float(times[0]), policy)


def lambda_grid(window: float, spacing: float = 0.5) -> np.ndarray:
    """Symmetric grid on ``[-window, window]`` containing 0 with spacing ``<= spacing``."""
    half = int(math.ceil(window / spacing - 1e-12))
    return np.linspace(-window, window, 2 * half + 1)


def theta_delta_sample(delta: float, rng: np.random.Generator, size: int | None = None):
    """Draw from ``Θ_δ`` (density ∝ ``|1 - e^{iθ}|^{2δ}`` on ``[0, 2π)``) by rejection from uniform."""
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    n = 1 if size is None else int(size)
    out = tilted_unit_sample(rng, float(delta), n)
    return float(out[0]) if size is None else out


def _increments(rng: np.random.Generator, grid: TimeGrid, paths: int) -> tuple[np.ndarray, np.ndarray]:
    sq = np.sqrt(np.diff(grid.times))
    dB = rng.standard_normal((paths, sq.size)) * sq
    dW = rng.standard_normal((paths, sq.size)) * sq
    return dB, dW


def driving_path(beta: float, lam_max: float, rng: np.random.Generator, dt: float | None = None,
                 t0: float | None = None, policy: str = "geometric") -> DrivingPath:
    """Sample one driving path on the grid from :func:`time_grid`."""
    grid = time_grid(beta, lam_max, dt, t0, policy)
    dB, dW = _increments(rng, grid, 1)
    return DrivingPath(grid.t0, grid.dt, grid.times, dB[0] + 1j * dW[0])


def _refine(times: np.ndarray, dB: np.ndarray, dW: np.ndarray, rng: np.random.Generator):
    """Halve every step by Brownian-bridge midpoint sampling (same underlying path)."""
    h = np.diff(times)
    mid = times[:-1] + 0.5 * h
    nt = np.empty(2 * h.size + 1)
    nt[0::2] = times
    nt[1::2] = mid
    sd = np.sqrt(h / 4.0)
    out = []
    for d in (dB, dW):
        first = 0.5 * d + sd * rng.standard_normal(d.shape)
        nd = np.empty(d.shape[:-1] + (2 * h.size,))
        nd[..., 0::2] = first
        nd[..., 1::2] = d - first
        out.append(nd)
    return nt, out[0], out[1]


def initial_p(beta: float, delta: float, lambdas: np.ndarray, t0: float) -> np.ndarray:
    """Linearised small-``p`` steady solution at ``t0``."""
    q = beta / 4.0
    return lambdas * math.exp(q * t0) * q / (q + delta)


@njit(cache=True, nogil=True)
def _prufer_kernel(lams, p0, times, dB, dW, beta, delta, maxjump, out):
    P, S = dB.shape
    L = lams.shape[0]
    q = beta / 4.0
    bad = 0
    p = np.empty(L)
    for path in range(P):
        for l in range(L):
            p[l] = p0[l]
        for k in range(S):
            h = times[k + 1] - times[k]
            g = math.exp(q * times[k + 1]) - math.exp(q * times[k])
            db = dB[path, k]
            dws = dW[path, k] - delta * h
            for l in range(L):
                pl = p[l]
                dp = lams[l] * g + (math.cos(pl) - 1.0) * db + math.sin(pl) * dws
                if abs(dp) > maxjump:
                    bad += 1
                p[l] = pl + dp
        for l in range(L):
            out[path, l] = p[l]
    return bad


def _integrate_block(beta, delta, lambdas, times, dB, dW, rng_refine):
    lambdas = np.ascontiguousarray(lambdas, dtype=float)
    p0 = initial_p(beta, delta, lambdas, times[0])
    out = np.empty((dB.shape[0], lambdas.size))
    bad = _prufer_kernel(lambdas, p0, times, dB, dW, float(beta), float(delta), MAX_JUMP, out)
    if bad:
        times, dB, dW = _refine(times, dB, dW, rng_refine)
        bad2 = _prufer_kernel(lambdas, p0, times, dB, dW, float(beta), float(delta), MAX_JUMP, out)
        if bad2:
            raise NumericalError("Euler step instability persists after refinement",
                                 violations=int(bad2), steps=int(times.size - 1))
    # λ = 0 is an exact fixed point
    out[:, lambdas == 0.0] = 0.0
    return out, int(bad)


def integrate_p(beta: float, delta: float, lambdas: Sequence[float], path: DrivingPath,
                rng: np.random.Generator | None = None) -> PruferEndpoint:
    """Euler–Maruyama endpoints ``p_λ(0)`` for all ``λ`` driven by one shared path."""
    lam = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lam) < 0):
        raise DomainError("lambdas must be sorted")
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    inc = np.asarray(path.increments)
    rr = rng if rng is not None else np.random.default_rng(0)
    out, bad = _integrate_block(beta, delta, lam, np.asarray(path.times, dtype=float),
                                np.ascontiguousarray(inc.real[None, :]), np.ascontiguousarray(inc.imag[None, :]), rr)
    return PruferEndpoint(lam, out[0], float(delta), float(beta), bad)


def simulate_endpoints(beta: float, delta: float, lambdas: Sequence[float], paths: int,
                       seed: int | None = None, *, dt: float | None = None, t0: float | None = None,
                       policy: str = "geometric", threads: int | None = None,
                       block_size: int = 64, purpose: str = "sde") -> EndpointBatch:
    """Endpoints for ``paths`` independent driving paths, plus one ``Θ_δ`` draw per path."""
    beta, delta = float(beta), float(delta)
    if not beta > 0 or delta < 0:
        raise DomainError("need beta > 0 and delta >= 0")
    lam = np.ascontiguousarray(np.asarray(lambdas, dtype=float))
    if np.any(np.diff(lam) < 0):
        raise DomainError("lambdas must be sorted")
    seed = rngmod.new_seed() if seed is None else int(seed)
    grid = time_grid(beta, float(np.max(np.abs(lam))), dt, t0, policy)

    def work(block, size):
        g = rngmod.stream(seed, purpose, block, 0)
        dB, dW = _increments(g, grid, size)
        out, bad = _integrate_block(beta, delta, lam, grid.times, dB, dW, rngmod.stream(seed, purpose, block, 1))
        th = theta_delta_sample(delta, rngmod.stream(seed, purpose, block, 2), size)
        return out, th, bad

    parts = rngmod.map_blocks(work, paths, threads, block_size=block_size)
    return EndpointBatch(lam, np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                         delta, beta, grid, sum(p[2] for p in parts), seed)


# ---------------------------------------------------------------------------
# points


def _hermite_inverse(lam0, h, A, B, dA, dB, level, iters: int = 40):
    """Solve the cubic Hermite segment for ``level`` by safeguarded Newton on ``t ∈ [0, 1]``."""
    t = (level - A) / (B - A)
    lo = np.zeros_like(t)
    hi = np.ones_like(t)
    for _ in range(iters):
        t2 = t * t
        t3 = t2 * t
        H = (2 * t3 - 3 * t2 + 1) * A + (t3 - 2 * t2 + t) * dA + (3 * t2 - 2 * t3) * B + (t3 - t2) * dB - level
        dH = (6 * t2 - 6 * t) * (A - B) + (3 * t2 - 4 * t + 1) * dA + (3 * t2 - 2 * t) * dB
        lo = np.where(H < 0, t, lo)
        hi = np.where(H >= 0, t, hi)
        tn = t - H / np.where(dH > 0, dH, 1.0)
        t = np.where((dH <= 0) | (tn <= lo) | (tn >= hi), 0.5 * (lo + hi), tn)
    return lam0 + t * h


def extract_points(endpoint: PruferEndpoint, theta: float, window: tuple[float, float],
                   tol: float = 1e-12, interp: str = "pchip") -> PointSample | None:
    """Locate ``{λ : p_λ(0) = θ mod 2π}`` inside ``window``.

    Crossings of ``θ + 2πn`` are assigned to the grid cell ``(p_i, p_{i+1}]``
    and located by inverting the interpolant on that cell. The interpolant
    is ``"linear"`` or the monotone cubic ``"pchip"`` (default). Returns
    ``None`` (sample discarded) if a decreasing cell spans a level.
    """
    lam = endpoint.lambdas
    p = endpoint.p_values
    lo, hi = float(window[0]), float(window[1])
    if lo < lam[0] - 1e-12 or hi > lam[-1] + 1e-12:
        raise DomainError("window must lie inside the lambda grid")
    if interp not in ("linear", "pchip"):
        raise DomainError(f"unknown interpolation {interp!r}")
    a, b = p[:-1], p[1:]
    down = b < a - tol
    if np.any(down):
        n_lo = np.floor((b[down] - theta) / _TWO_PI)
        n_hi = np.floor((a[down] - theta) / _TWO_PI)
        if np.any(n_hi > n_lo):
            return None
    up = ~down & (b > a)
    ia = np.nonzero(up)[0]
    # levels θ + 2πn with a < level <= b
    n0 = np.floor((a[ia] - theta) / _TWO_PI) + 1
    n1 = np.floor((b[ia] - theta) / _TWO_PI)
    cnt = np.maximum((n1 - n0 + 1).astype(np.int64), 0)
    if cnt.sum() == 0:
        return PointSample((lo, hi), np.empty(0), float(theta))
    cell = np.repeat(ia, cnt)
    offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    level = theta + _TWO_PI * (np.repeat(n0, cnt) + offs)
    h = lam[cell + 1] - lam[cell]
    if interp == "linear" or lam.size < 3:
        pts = lam[cell] + (level - a[cell]) / (b[cell] - a[cell]) * h
    else:
        d = PchipInterpolator(lam, p).derivative()(lam)
        pts = _hermite_inverse(lam[cell], h, a[cell], b[cell], d[cell] * h, d[cell + 1] * h, level)
    pts = pts[(pts >= lo) & (pts <= hi)]
    return PointSample((lo, hi), np.sort(pts), float(theta))


def sample_points(batch: EndpointBatch, window: tuple[float, float],
                  interp: str = "pchip") -> tuple[list[PointSample], int]:
    """Extract a :class:`PointSample` for each path; returns ``(samples, discarded)``."""
    out = []
    discarded = 0
    for i in range(batch.p_values.shape[0]):
        s = extract_points(batch.endpoint(i), batch.thetas[i], window, interp=interp)
        if s is None:
            discarded += 1
        else:
            out.append(s)
    return out, discarded


def estimate_pair_correlation(samples: Sequence[PointSample], bins) -> PairCorrelation:
    """Translation-averaged pair-count estimator of ``ρ⁽²⁾(0, x)``.

    Unordered pairs at distance ``d`` are binned. With window length ``L``,
    the expected count in ``[u, v]`` is ``∫_u^v ρ⁽²⁾(x)(L - x)dx`` per sample,
    which is the normalisation used. The standard error treats each bin count
    as Poisson (the small-probability limit of a binomial count).
    """
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("bins must be increasing edges")
    if not samples:
        raise DomainError("no samples")
    lo, hi = samples[0].window
    L = hi - lo
    counts = np.zeros(edges.size - 1)
    for smp in samples:
        x = smp.points
        if x.size < 2:
            continue
        d = (x[None, :] - x[:, None])[np.triu_indices(x.size, 1)]
        counts += np.histogram(d, bins=edges)[0]
    n = len(samples)
    u, v = edges[:-1], edges[1:]
    norm = n * ((v - u) * L - 0.5 * (v * v - u * u))
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(norm > 0, counts / norm, 0.0)
        se = np.where(norm > 0, np.sqrt(counts) / norm, np.inf)
    empty = counts == 0
    return PairCorrelation(edges, rho, se, counts, n, empty, {"window": [lo, hi]})


def estimate_intensity(samples: Sequence[PointSample]) -> MomentEstimate:
    """Mean number of points per unit length."""
    lo, hi = samples[0].window
    dens = np.array([s.points.size for s in samples], dtype=float) / (hi - lo)
    return weighted_estimate(dens, None, params={"window": [lo, hi], "samples": len(samples)})


def cos_moment(beta: float, delta: float, x: float, kmax: int, paths: int, seed: int | None = None,
               *, dt: float | None = None, t0: float | None = None, policy: str = "geometric",
               threads: int | None = None) -> list[MomentEstimate]:
    """``E[cos(k p_x(0))]`` for ``k = 1..kmax`` with standard errors."""
    if not x > 0:
        raise DomainError("x must be positive")
    seed = rngmod.new_seed() if seed is None else int(seed)
    batch = simulate_endpoints(beta, delta, [float(x)], paths, seed, dt=dt, t0=t0, policy=policy,
                               threads=threads, purpose="cos-moment")
    p = batch.p_values[:, 0]
    out = []
    for k in range(1, int(kmax) + 1):
        out.append(weighted_estimate(np.cos(k * p), None, seed=seed,
                                     params={"beta": beta, "delta": delta, "x": x, "k": k, "paths": paths,
                                             "dt": batch.grid.dt, "t0": batch.grid.t0,
                                             "policy": policy}))
    return out
