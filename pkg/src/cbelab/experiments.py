"""Top-level reproductions and cross-checks.

Every experiment takes an explicit ``seed`` (generated when omitted) and
returns a dataclass report with a ``to_record`` method producing an
:class:`ExperimentRecord`. Records can be replayed with :func:`replay`.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import cje, opuc, rng as rngmod, sinebeta, specfun, zeta
from .errors import DomainError, HypothesisError
from .estimates import MomentEstimate, ess, weighted_estimate
from .oracle import brute_force_joint_moment

__all__ = [
    "ExperimentRecord",
    "brute_force_joint_moment",
    "oracle_triangle",
    "phase_tail_check",
    "PhaseTailReport",
    "mom_direct",
    "momrep_cj_side",
    "mom_scaling",
    "ScalingReport",
    "mom_limit_compare",
    "LimitReport",
    "corr_compare",
    "CorrReport",
    "bound_verify",
    "BoundReport",
    "qu_valko_check",
    "QuValkoReport",
    "qu_valko_coefficients",
    "EXPERIMENTS",
    "run_experiment",
    "replay",
]


# ---------------------------------------------------------------------------
# records


@dataclass
class ExperimentRecord:
    """Self-describing, JSON-serialisable result of one experiment run."""

    experiment: str
    params: dict[str, Any]
    seed: int | None
    estimates: list[dict[str, Any]] = field(default_factory=list)
    derived: dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0
    status: str = "ok"
    version: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentRecord":
        return cls(**d)


def _est_dict(e: MomentEstimate, label: str | None = None) -> dict[str, Any]:
    d = e.to_dict()
    if label is not None:
        d["label"] = label
    return d


# ---------------------------------------------------------------------------
# oracle triangle


def oracle_triangle(beta: float, N: int, s: float, replicas: int = 100_000, seed: int | None = None,
                    threads: int | None = None) -> dict[str, Any]:
    """Morris product, torus quadrature and OPUC Monte Carlo for ``E|X_N(1)|^{2s}``."""
    seed = rngmod.new_seed() if seed is None else int(seed)
    closed = math.exp(specfun.morris_moment(beta, N, s))
    quad = brute_force_joint_moment(beta, N, [0.0], [s]) if N <= 3 else None
    mc = one_point_mc(beta, N, s, replicas, seed, threads=threads)
    out = {"beta": beta, "N": N, "s": s, "morris": closed, "quadrature": quad,
           "mc": mc.mean, "mc_stderr": mc.stderr, "seed": seed}
    out["quad_rel_err"] = None if quad is None else abs(quad / closed - 1.0)
    out["mc_z"] = (mc.mean - closed) / mc.stderr if mc.stderr > 0 else 0.0
    return out


def one_point_mc(beta: float, N: int, s: float, replicas: int, seed: int | None = None,
                 threads: int | None = None) -> MomentEstimate:
    """Plain CβE Monte Carlo of ``E|X_N(1)|^{2s}`` from sampled chains."""
    seed = rngmod.new_seed() if seed is None else int(seed)

    def work(block, size):
        batch = opuc.chains_for_block(beta, N, seed, "one-point", block, size)
        return np.exp(2.0 * s * opuc.log_abs_batch(batch.coeffs, np.array([0.0]))[:, 0])

    vals = np.concatenate(rngmod.map_blocks(work, replicas, threads))
    return weighted_estimate(vals, None, seed=seed,
                             params={"beta": beta, "N": N, "s": s, "replicas": replicas})


@dataclass
class PhaseTailReport:
    """Empirical exceedance of Prüfer-phase increments against the sub-Gaussian bound."""

    beta: float
    j: int
    ell: int
    theta: float
    ts: list[float]
    freq: list[float]
    bound: list[float]
    pvalues: list[float]
    replicas: int
    seed: int
    level: float = 0.01
    min_bound: float = 1e-3

    @property
    def tested(self) -> list[bool]:
        return [b >= self.min_bound for b in self.bound]

    @property
    def passed(self) -> bool:
        return all(p >= self.level for p, t in zip(self.pvalues, self.tested) if t)

    def to_record(self, params: dict) -> ExperimentRecord:
        d = asdict(self)
        d["tested"] = self.tested
        d["passed"] = self.passed
        return ExperimentRecord("phase-tail", params, self.seed, [], d,
                                status="ok" if self.passed else "gate-failure")


def phase_tail_check(beta: float = 2.0, j: int = 64, ell: int = 64, theta: float = 0.0,
                     replicas: int = 10_000, seed: int | None = None, ts: Sequence[float] | None = None,
                     threads: int | None = None, level: float = 0.01, min_bound: float = 1e-3) -> PhaseTailReport:
    """Exceedance frequencies of ``|Ψ_{j+ℓ}(θ) - Ψ_j(θ) - ℓθ|`` with one-sided binomial p-values.

    The p-value at each ``t`` is ``P(Bin(n, bound(t)) >= count)``; small values
    mean the empirical tail exceeds the bound.
    """
    from scipy.stats import binom

    seed = rngmod.new_seed() if seed is None else int(seed)
    N = j + ell + 1

    def work(block, size):
        batch = opuc.chains_for_block(beta, N, seed, "phase-tail", block, size)
        return np.abs(opuc.phase_increments(batch.coeffs, theta, j, ell))

    inc = np.concatenate(rngmod.map_blocks(work, replicas, threads))
    if ts is None:
        ts = np.round(np.arange(0.25, 6.0 + 1e-9, 0.25), 10).tolist()
    ts = [float(t) for t in ts]
    bound = opuc.phase_tail_bound(beta, j, ell, ts)
    counts = np.array([np.count_nonzero(inc >= t) for t in ts])
    pv = binom.sf(counts - 1, replicas, bound)
    return PhaseTailReport(beta, j, ell, theta, ts, (counts / replicas).tolist(), bound.tolist(),
                           pv.tolist(), replicas, seed, level, min_bound)


# ---------------------------------------------------------------------------
# moments of moments


def default_quad_nodes(N: int) -> int:
    return max(512, 8 * int(N))


def _log_mean_exp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.mean(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)


def mom_direct(beta: float, k: float, s: float, N: int, quad_nodes: int | None = None,
               replicas: int = 1000, seed: int | None = None, *, proposal: str = "tilted",
               threads: int | None = None, ess_floor: float = 100.0) -> MomentEstimate:
    """Monte Carlo estimate of ``M_N(k; s) = E[((1/2π)∫|X_N(e^{iθ})|^{2s}dθ)^k]``.

    The inner integral ``I_s`` is a trapezoid (equispaced) rule with
    ``quad_nodes = max(512, 8N)`` nodes.

    Parameters
    ----------
    proposal : {"tilted", "cbe"}
        ``"cbe"`` averages ``I_s^k`` over CβE chains. Its relative variance
        grows like a large power of ``N``. ``"tilted"`` (default) draws
        circular-Jacobi chains with ``δ = ks``. Rotating such a chain
        uniformly gives the CβE law reweighted by ``I_{ks}/E|X(1)|^{2ks}``,
        so ``E|X(1)|^{2ks} · I_s^k / I_{ks}`` is an unbiased estimator. The
        ratio ``I_s^k / I_{ks}`` lies in ``(0, 1]`` by Jensen's inequality.
        ``I_s`` and ``I_{ks}`` are rotation invariant, so no explicit
        rotation is needed.
    """
    beta, k, s = float(beta), float(k), float(s)
    if not (k > 0 and s > 0):
        raise DomainError("k and s must be positive")
    if proposal not in ("tilted", "cbe"):
        raise DomainError(f"unknown proposal {proposal!r}")
    seed = rngmod.new_seed() if seed is None else int(seed)
    M = default_quad_nodes(N) if quad_nodes is None else int(quad_nodes)
    delta = k * s if proposal == "tilted" else 0.0
    log_m = specfun.morris_moment(beta, N, delta) if delta else 0.0

    def work(block, size):
        batch = opuc.chains_for_block(beta, N, seed, "mom-direct", block, size, tilt=delta)
        la = opuc.log_abs_circle_batch(batch.coeffs, M)
        log_is = _log_mean_exp(2.0 * s * la)
        if delta:
            log_iks = _log_mean_exp(2.0 * k * s * la)
            return log_m - log_iks, k * log_is
        return np.zeros(size), k * log_is

    parts = rngmod.map_blocks(work, replicas, threads)
    lw = np.concatenate([p[0] for p in parts])
    wv = np.exp(lw + np.concatenate([p[1] for p in parts]))
    params = {"beta": beta, "k": k, "s": s, "N": int(N), "quad_nodes": M, "replicas": int(replicas),
              "proposal": proposal}
    est = weighted_estimate(wv, None, seed=seed, params=params, ess_floor=ess_floor)
    # the gate uses the integrand-aware ESS (Σwv)²/Σ(wv)²; the weight-only ESS is kept for reference
    est.ess = min(float(replicas), ess(wv))
    est.diagnostics["weight_ess"] = ess(np.exp(lw)) if delta else float(replicas)
    if est.ess < min(ess_floor, replicas):
        est.status = "unreliable"
    return est


def momrep_cj_side(beta: float, k: float, s: float, N: int, quad_nodes: int | None = None,
                   replicas: int = 1000, seed: int | None = None, *,
                   threads: int | None = None) -> MomentEstimate:
    """``E_{CJ_{N,β,ks}}[((1/2π)∫|X_N(e^{iθ})/X_N(1)|^{2s}dθ)^{k-1}]``.

    Multiplied by ``E|X_N(1)|^{2ks}`` this equals ``M_N(k; s)`` exactly
    (rotation invariance plus change of measure).
    """
    beta, k, s = float(beta), float(k), float(s)
    seed = rngmod.new_seed() if seed is None else int(seed)
    M = default_quad_nodes(N) if quad_nodes is None else int(quad_nodes)
    delta = k * s

    def work(block, size):
        batch = opuc.chains_for_block(beta, N, seed, "momrep-cj", block, size, tilt=delta)
        la = opuc.log_abs_circle_batch(batch.coeffs, M)
        log_is = _log_mean_exp(2.0 * s * (la - la[:, :1]))
        return np.exp((k - 1.0) * log_is)

    vals = np.concatenate(rngmod.map_blocks(work, replicas, threads))
    return weighted_estimate(vals, None, seed=seed,
                             params={"beta": beta, "k": k, "s": s, "N": int(N), "quad_nodes": M,
                                     "replicas": int(replicas)})


def _mom_direct_samples(beta, k, s, N, M, replicas, seed, threads):
    """Per-replica ``w·v`` values of the tilted ``mom_direct`` estimator (for covariances)."""
    delta = k * s
    log_m = specfun.morris_moment(beta, N, delta)

    def work(block, size):
        batch = opuc.chains_for_block(beta, N, seed, "mom-direct", block, size, tilt=delta)
        la = opuc.log_abs_circle_batch(batch.coeffs, M)
        return np.exp(log_m - _log_mean_exp(2.0 * k * s * la) + k * _log_mean_exp(2.0 * s * la))

    return np.concatenate(rngmod.map_blocks(work, replicas, threads))


def _log_mean_cov(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``log`` of column means of an ``(R, C)`` sample matrix and their delta-method covariance."""
    R = samples.shape[0]
    m = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False, ddof=1).reshape(samples.shape[1], samples.shape[1])
    return np.log(m), cov / (R * np.outer(m, m))


def _wls_slope(x: np.ndarray, y: np.ndarray, cov: np.ndarray, groups: np.ndarray | None = None):
    """Weighted least-squares common slope of ``y`` on ``x`` (separate intercept per group).

    Weights are the inverse diagonal variances; the returned standard error
    uses the full covariance (sandwich form), so correlated cells are
    accounted for. If any cell has (numerically) zero variance, equal
    weights are used.
    """
    n = x.size
    groups = np.zeros(n, dtype=int) if groups is None else np.asarray(groups)
    ug = np.unique(groups)
    X = np.zeros((n, ug.size + 1))
    for j, g in enumerate(ug):
        X[groups == g, j] = 1.0
    X[:, -1] = x
    d = np.diag(cov)
    # zero-variance cells (exact estimators) carry no weighting information
    w = 1.0 / d if np.all(d > 1e-20) else np.ones(n)
    XtW = X.T * w
    A = np.linalg.inv(XtW @ X)
    coef = A @ (XtW @ y)
    V = A @ (XtW @ cov @ XtW.T) @ A
    return float(coef[-1]), float(math.sqrt(max(V[-1, -1], 0.0))), coef


@dataclass
class ScalingReport:
    """Growth-exponent fit of the moments of moments in ``N``."""

    beta: float
    k: float
    s: float
    Ns: list[int]
    estimates: list[MomentEstimate]
    slope: float
    stderr: float
    ci: tuple[float, float]
    predicted: float
    tol: float
    passed: bool
    ci_covers_prediction: bool
    seed: int | None = None

    def to_record(self, params: dict) -> ExperimentRecord:
        return ExperimentRecord("mom-scaling", params, self.seed,
                                [_est_dict(e, f"N={n}") for n, e in zip(self.Ns, self.estimates)],
                                {"slope": self.slope, "stderr": self.stderr, "ci": list(self.ci),
                                 "predicted": self.predicted, "tol": self.tol, "passed": self.passed,
                                 "ci_covers_prediction": self.ci_covers_prediction},
                                status="ok" if self.passed else "fail")


def mom_scaling(beta: float, k: float, s: float, Ns: Sequence[int], replicas: int = 1000,
                seed: int | None = None, *, tol: float = 0.15, threads: int | None = None,
                quad_nodes: int | None = None) -> ScalingReport:
    """Fit the slope of ``log M_N(k; s)`` against ``log N`` and compare with ``2k²s²/β - k + 1``.

    All ``N`` share replica streams (chain ``i`` at size ``N`` is a prefix of
    chain ``i`` at size ``2N``), and the slope error uses the resulting
    covariance. The run passes when ``|slope - predicted| <= tol``; whether
    the 95% interval covers the prediction is reported separately.
    """
    beta, k, s = float(beta), float(k), float(s)
    if not 2.0 * k * s * s > beta:
        raise HypothesisError(f"scaling regime needs 2ks^2 > beta (got {2 * k * s * s} <= {beta})")
    seed = rngmod.new_seed() if seed is None else int(seed)
    Ns = [int(n) for n in Ns]
    cols = []
    ests = []
    for n in Ns:
        M = default_quad_nodes(n) if quad_nodes is None else int(quad_nodes)
        v = _mom_direct_samples(beta, k, s, n, M, replicas, seed, threads)
        cols.append(v)
        ests.append(weighted_estimate(v, None, seed=seed, params={"beta": beta, "k": k, "s": s, "N": n,
                                                                  "quad_nodes": M, "replicas": replicas}))
    y, cov = _log_mean_cov(np.stack(cols, axis=1))
    slope, se, _ = _wls_slope(np.log(np.array(Ns, dtype=float)), y, cov)
    pred = specfun.mom_exponent(beta, k, s)
    ci = (slope - 1.96 * se, slope + 1.96 * se)
    return ScalingReport(beta, k, s, Ns, ests, slope, se, ci, pred, tol, abs(slope - pred) <= tol,
                         ci[0] <= pred <= ci[1], seed)


@dataclass
class LimitReport:
    """Normalised moments of moments versus the limit-theorem right-hand side."""

    lhs: MomentEstimate
    rhs: MomentEstimate
    f_const: float
    exponent: float
    overlap_2sigma: bool
    lhs_rel_halfwidth: float
    rhs_rel_halfwidth: float
    momrep: dict[str, Any] | None = None
    seed: int | None = None

    def to_record(self, params: dict) -> ExperimentRecord:
        ests = [_est_dict(self.lhs, "lhs"), _est_dict(self.rhs, "rhs")]
        return ExperimentRecord("mom-limit", params, self.seed, ests,
                                {"f_const": self.f_const, "exponent": self.exponent,
                                 "overlap_2sigma": self.overlap_2sigma,
                                 "lhs_rel_halfwidth": self.lhs_rel_halfwidth,
                                 "rhs_rel_halfwidth": self.rhs_rel_halfwidth, "momrep": self.momrep},
                                status="ok" if self.overlap_2sigma else "fail")


def _scaled(e: MomentEstimate, c: float, **extra) -> MomentEstimate:
    return MomentEstimate(e.mean * c, e.stderr * abs(c), e.replicas, e.ess, e.seed,
                          {**e.params, **extra}, e.status, dict(e.diagnostics))


def mom_limit_compare(beta: float, k: float, s: float, N: int, R: float | None = None,
                      replicas: int = 4000, seed: int | None = None, *, rhs_replicas: int | None = None,
                      momrep_check: bool = False, tail_correction: bool = True,
                      threads: int | None = None) -> LimitReport:
    """Compare ``M_N(k;s)/N^{2k²s²/β-k+1}`` with ``F · E[(∫_{-R}^{R}|q_N|^{2s})^{k-1}]``.

    With ``momrep_check`` the exact finite-N identity
    ``M_N = E|X_N(1)|^{2ks} · E_CJ[((1/2π)∫|X/X(1)|^{2s})^{k-1}]`` is tested
    too, with the two sides drawn from independent streams. The right-hand
    side adds the fitted power-law tail beyond ``±R`` unless
    ``tail_correction`` is off (see :func:`cbelab.cje.mom_rhs_estimate`).
    """
    beta, k, s = float(beta), float(k), float(s)
    cje.check_mom_hypotheses(beta, k, s)
    seed = rngmod.new_seed() if seed is None else int(seed)
    e = specfun.mom_exponent(beta, k, s)
    f = specfun.f_const(beta, k, s)
    md = mom_direct(beta, k, s, N, None, replicas, seed, threads=threads)
    lhs = _scaled(md, float(N) ** (-e), normalised=True)
    rr = cje.mom_rhs_estimate(beta, k, s, N, R, None, rhs_replicas or replicas, seed, threads=threads,
                              tail_correction=tail_correction)
    rhs = _scaled(rr, f, f_const=f)
    lo = max(lhs.mean - 2 * lhs.stderr, rhs.mean - 2 * rhs.stderr)
    hi = min(lhs.mean + 2 * lhs.stderr, rhs.mean + 2 * rhs.stderr)
    momrep = None
    if momrep_check:
        cj = momrep_cj_side(beta, k, s, N, None, replicas, seed, threads=threads)
        scale = math.exp(specfun.morris_moment(beta, N, k * s))
        z = (md.mean - scale * cj.mean) / math.hypot(md.stderr, scale * cj.stderr)
        momrep = {"direct": md.mean, "direct_stderr": md.stderr, "cj_side": scale * cj.mean,
                  "cj_side_stderr": scale * cj.stderr, "z": z}
    return LimitReport(lhs, rhs, f, e, lo <= hi, 2 * lhs.rel_err(), 2 * rhs.rel_err(), momrep, seed)


# ---------------------------------------------------------------------------
# correlation functions


def sine_kernel_correlation(xs: Sequence[float]) -> float:
    """β = 2 ``m``-point correlation ``det[K(x_i - x_j)]`` with ``K(x) = sin(x/2)/(πx)``."""
    x = np.asarray(xs, dtype=float)
    d = x[:, None] - x[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        K = np.where(d == 0, 1.0 / (2 * math.pi), np.sin(0.5 * d) / (math.pi * d))
    return float(np.linalg.det(K))


@dataclass
class CorrReport:
    """``m``-point correlation of Sine_β by simulation (A) and by the circular-Jacobi formula (B)."""

    m: int
    xs: list[float]
    route_a: MomentEstimate
    route_b: MomentEstimate
    exact: float | None
    z_score: float
    seed: int | None = None

    def to_record(self, params: dict) -> ExperimentRecord:
        return ExperimentRecord("corr-compare", params, self.seed,
                                [_est_dict(self.route_a, "route_a"), _est_dict(self.route_b, "route_b")],
                                {"exact": self.exact, "z_score": self.z_score})


def corr_compare(beta: float, m: int, xs: Sequence[float], sde_params: dict | None = None,
                 replicas: int = 4000, seed: int | None = None, *, N: int = 512,
                 threads: int | None = None) -> CorrReport:
    """Route A: binned Sine_β correlations; route B: ``𝔠 · Vandermonde · E_CJ[prod|q|^β]``.

    ``sde_params`` may set ``paths``, ``window``, ``spacing``, ``bin_width``,
    ``dt`` and ``policy``. Route A supports ``m = 1`` (intensity) and
    ``m = 2`` (pair correlation at ``|x_2 - x_1|``, averaged over one bin).
    """
    beta = float(beta)
    m = int(m)
    xs = [float(x) for x in xs]
    if m < 1 or len(xs) != m:
        raise DomainError("need m >= 1 and exactly m points")
    if len(set(xs)) != m:
        raise DomainError("points must be distinct")
    seed = rngmod.new_seed() if seed is None else int(seed)
    sp = {"paths": 2000, "window": 30.0, "spacing": 0.5, "bin_width": 0.1, "dt": None,
          "policy": "geometric", **(sde_params or {})}
    c = specfun.c_const(beta, m)
    rel = [x - xs[0] for x in xs[1:]]
    vdm = 1.0
    for i in range(m):
        for j in range(i + 1, m):
            vdm *= abs(xs[i] - xs[j]) ** beta
    if m == 1:
        rb = MomentEstimate(c, 0.0, replicas, float(replicas), seed, {"c_const": c})
    else:
        e = cje.cj_joint_moment(beta, m * beta / 2.0, N, rel, [beta] * (m - 1), replicas, seed,
                                threads=threads)
        rb = _scaled(e, c * vdm, c_const=c, vandermonde=vdm)
    W = float(sp["window"])
    batch = sinebeta.simulate_endpoints(beta, 0.0, sinebeta.lambda_grid(W, sp["spacing"]), int(sp["paths"]),
                                        seed, dt=sp["dt"], policy=sp["policy"], threads=threads,
                                        purpose="corr-sde")
    samples, discarded = sinebeta.sample_points(batch, (-W, W))
    if m == 1:
        ra = sinebeta.estimate_intensity(samples)
    elif m == 2:
        d = abs(rel[0])
        bw = float(sp["bin_width"])
        pc = sinebeta.estimate_pair_correlation(samples, np.array([d - bw / 2, d + bw / 2]))
        ra = MomentEstimate(float(pc.rho[0]), float(pc.stderr[0]), len(samples), float(len(samples)), seed,
                            {"bin": [d - bw / 2, d + bw / 2]})
    else:
        raise DomainError("route A supports m <= 2")
    ra.diagnostics.update({"discarded": discarded, "jump_violations": batch.jump_violations})
    exact = sine_kernel_correlation(xs) if beta == 2.0 else None
    z = (ra.mean - rb.mean) / math.hypot(ra.stderr, rb.stderr) if (ra.stderr or rb.stderr) else 0.0
    return CorrReport(m, xs, ra, rb, exact, z, seed)


# ---------------------------------------------------------------------------
# joint-moment bound


def bound_shape(delta: float, rs: Sequence[float], xs: Sequence[float], beta: float) -> float:
    """``prod_j (1+|x_j|^{(2δ-Σr)r_j/β})^{-1} prod_{i<j} (1+|x_i-x_j|^{r_i r_j/β})^{-1}`` (with ``0^0 = 1``)."""
    rs = [float(r) for r in rs]
    xs = [float(x) for x in xs]
    tot = sum(rs)
    v = 1.0
    for x, r in zip(xs, rs):
        v /= 1.0 + abs(x) ** ((2.0 * delta - tot) * r / beta)
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            v /= 1.0 + abs(xs[i] - xs[j]) ** (rs[i] * rs[j] / beta)
    return v


@dataclass
class BoundReport:
    """Estimates divided by the bound shape over an ``(N, xs)`` grid."""

    cells: list[dict[str, Any]]
    max_ratio: float
    min_ratio: float
    spread: float
    slope: float
    slope_stderr: float
    spread_limit: float
    upward_trend: bool
    trend_consistent_zero: bool
    passed: bool
    seed: int | None = None

    def to_record(self, params: dict) -> ExperimentRecord:
        return ExperimentRecord("bound-verify", params, self.seed, list(self.cells),
                                {"max_ratio": self.max_ratio, "min_ratio": self.min_ratio, "spread": self.spread,
                                 "slope": self.slope, "slope_stderr": self.slope_stderr,
                                 "upward_trend": self.upward_trend,
                                 "trend_consistent_zero": self.trend_consistent_zero, "passed": self.passed},
                                status="ok" if self.passed else "fail")


def bound_verify(beta: float, delta: float, rs: Sequence[float], x_configs: Sequence[Sequence[float]],
                 Ns: Sequence[int], replicas: int = 2000, seed: int | None = None, *,
                 spread_limit: float = 3.0, threads: int | None = None) -> BoundReport:
    """Ratio of ``cj_joint_moment`` to the bound shape across ``N`` and configurations.

    The log-ratio is regressed on ``log N`` with one intercept per
    configuration. Cells share replica streams across ``N`` and across
    configurations, and the slope error uses the full covariance.
    """
    beta, delta = float(beta), float(delta)
    rs = [float(r) for r in rs]
    if sum(rs) > 2 * delta + 1e-12:
        raise HypothesisError("sum(rs) must not exceed 2 delta")
    seed = rngmod.new_seed() if seed is None else int(seed)
    cells, cols, logn, groups = [], [], [], []
    for N in Ns:
        for ci, xs in enumerate(x_configs):
            ws = cje.cj_joint_samples(beta, delta, int(N), xs, rs, replicas, seed, threads=threads)
            shape = bound_shape(delta, rs, xs, beta)
            v = ws.payload * np.exp(ws.log_weight) / shape
            cols.append(v)
            logn.append(math.log(N))
            groups.append(ci)
            mean = float(v.mean())
            se = float(v.std(ddof=1) / math.sqrt(v.size))
            cells.append({"N": int(N), "xs": [float(x) for x in xs], "shape": shape, "ratio": mean,
                          "ratio_stderr": se, "estimate": mean * shape, "estimate_stderr": se * shape})
    ratios = np.array([c["ratio"] for c in cells])
    y, cov = _log_mean_cov(np.stack(cols, axis=1))
    if np.allclose(np.diag(cov), 0.0):
        slope, se = 0.0, 0.0
    else:
        slope, se, _ = _wls_slope(np.array(logn), y, cov, np.array(groups))
    mx, mn = float(ratios.max()), float(ratios.min())
    spread = mx / mn
    upward = se > 0 and slope > 3 * se
    consistent = abs(slope) <= 3 * se if se > 0 else slope == 0.0
    return BoundReport(cells, mx, mn, spread, slope, se, spread_limit, upward, consistent,
                       spread <= spread_limit and consistent, seed)


# ---------------------------------------------------------------------------
# comparison identity


def qu_valko_coefficients(beta: float, kmax: int) -> np.ndarray:
    """``c_k = prod_{j<k}(-β/2+j) / prod_{j<k}(1+β/2+j)`` for ``k = 1..kmax``."""
    out = np.empty(kmax)
    c = 1.0
    for k in range(1, kmax + 1):
        j = k - 1
        c *= (-0.5 * beta + j) / (1.0 + 0.5 * beta + j)
        out[k - 1] = c
    return out


def _qv_remainder(beta: float, K: int, horizon: int = 100_000) -> float:
    """Bound on ``sum_{k>K} |c_k|`` (partial sum to ``horizon`` plus a power-law tail)."""
    c = qu_valko_coefficients(beta, horizon)
    if np.all(c[K:] == 0):
        return 0.0
    tail = np.abs(c[K:]).sum()
    return float(tail + abs(c[-1]) * horizon / beta)


@dataclass
class QuValkoReport:
    """Both sides of the comparison identity for ``E|ξ^{β,β}(x)|^β``."""

    x: float
    lhs: MomentEstimate
    rhs: MomentEstimate
    kmax: int
    remainder: float
    z_score: float
    agree_2sigma: bool
    exact: float | None = None
    seed: int | None = None

    def to_record(self, params: dict) -> ExperimentRecord:
        return ExperimentRecord("qu-valko", params, self.seed,
                                [_est_dict(self.lhs, "lhs"), _est_dict(self.rhs, "rhs")],
                                {"kmax": self.kmax, "remainder": self.remainder, "z_score": self.z_score,
                                 "agree_2sigma": self.agree_2sigma, "exact": self.exact},
                                status="ok" if self.agree_2sigma else "fail")


def qu_valko_check(beta: float, x: float, replicas: int = 10_000, seed: int | None = None, *,
                   N: int = 512, cj_replicas: int | None = None, kmax: int | None = None,
                   dt: float | None = None, policy: str = "geometric",
                   threads: int | None = None) -> QuValkoReport:
    """Compare ``E|ξ^{β,β}(x)|^β`` (circular-Jacobi proxy at size ``N``) with the cosine series.

    The right-hand side is
    ``(1/(𝔠₂ x^β)) (1/(4π²) + (1/(2π²)) Σ_k c_k E cos(k p_x(0)))`` with
    ``p`` the δ = β/2 diffusion, estimated from ``replicas`` paths. For
    even β the series is finite. Otherwise it is truncated and the
    remainder is bounded; the bound must stay below half the Monte Carlo
    error, and ``kmax`` is doubled until it does.
    """
    beta, x = float(beta), float(x)
    if not x > 0:
        raise DomainError("x must be positive")
    seed = rngmod.new_seed() if seed is None else int(seed)
    lhs = cje.cj_joint_moment(beta, beta, N, [x], [beta], cj_replicas or replicas, seed, threads=threads)
    batch = sinebeta.simulate_endpoints(beta, beta / 2.0, [x], replicas, seed, dt=dt, policy=policy,
                                        threads=threads, purpose="qu-valko")
    p = batch.p_values[:, 0]
    c2 = specfun.c_const(beta, 2)
    pref = 1.0 / (c2 * x ** beta)
    half = 0.5 * beta
    if kmax is None:
        kmax = int(half) if half.is_integer() else 64
    while True:
        coef = qu_valko_coefficients(beta, kmax)
        nz = np.nonzero(coef)[0]
        kk = np.arange(1, kmax + 1)
        g = np.cos(np.outer(p, kk[nz])) @ coef[nz] if nz.size else np.zeros_like(p)
        vals = pref * (1.0 / (4 * math.pi ** 2) + g / (2 * math.pi ** 2))
        rhs = weighted_estimate(vals, None, seed=seed, params={"beta": beta, "x": x, "paths": replicas,
                                                              "kmax": kmax, "dt": batch.grid.dt,
                                                              "policy": policy})
        rem = pref * _qv_remainder(beta, kmax) / (2 * math.pi ** 2)
        if rem <= 0.5 * rhs.stderr or kmax >= 4096:
            break
        kmax *= 2
    if rem > 0.5 * rhs.stderr:
        rhs.status = "unreliable"
    z = (lhs.mean - rhs.mean) / math.hypot(lhs.stderr, rhs.stderr)
    exact = 12.0 / x ** 2 * (1.0 - 4.0 * math.sin(x / 2) ** 2 / x ** 2) if beta == 2.0 else None
    return QuValkoReport(x, lhs, rhs, kmax, rem, z, abs(z) <= 2.0, exact, seed)


# ---------------------------------------------------------------------------
# registry and replay


def _as_list(v) -> list:
    if v is None:
        return []
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


def _status_of(ests: Sequence[MomentEstimate]) -> str:
    return "ok" if all(e.ok for e in ests) else "unreliable"


def _run_constants(p, seed, threads):
    reps = specfun.constants_report(p["beta"], k=p.get("k"), s=p.get("s"), m=p.get("m"), N=p.get("n"),
                                    z=p.get("z"))
    return ExperimentRecord("constants", p, None, [], {r.name: r.to_dict() for r in reps})


def _run_oracle(p, seed, threads):
    thetas = [float(t) for t in _as_list(p.get("thetas", [0.0]))]
    ss = [float(s) for s in _as_list(p.get("s", 1.0))]
    if len(ss) == 1 and len(thetas) > 1:
        ss = ss * len(thetas)
    val = brute_force_joint_moment(p["beta"], p["n"], thetas, ss, p.get("nodes"))
    derived = {"value": val}
    if len(thetas) == 1:
        m = math.exp(specfun.morris_moment(p["beta"], p["n"], ss[0]))
        derived.update(morris=m, rel_err=abs(val / m - 1.0))
    return ExperimentRecord("oracle", {**p, "thetas": thetas, "s": ss}, None, [], derived)


def _run_phase_tail(p, seed, threads):
    r = phase_tail_check(p["beta"], int(p.get("j", 64)), int(p.get("ell", 64)), p.get("theta", 0.0),
                         p["replicas"], seed, p.get("ts"), threads=threads)
    return r.to_record(p)


def _run_mom_direct(p, seed, threads):
    e = mom_direct(p["beta"], p["k"], p["s"], p["n"], p.get("quad_nodes"), p["replicas"], seed,
                   proposal=p.get("proposal", "tilted"), threads=threads)
    return ExperimentRecord("mom-direct", p, seed, [_est_dict(e)], {}, status=_status_of([e]))


def _run_mom_scaling(p, seed, threads):
    r = mom_scaling(p["beta"], p["k"], p["s"], p["ns"], p["replicas"], seed, tol=p.get("tol", 0.15),
                    threads=threads)
    return r.to_record(p)


def _run_mom_limit(p, seed, threads):
    r = mom_limit_compare(p["beta"], p["k"], p["s"], p["n"], p.get("R"), p["replicas"], seed,
                          rhs_replicas=p.get("rhs_replicas"), momrep_check=bool(p.get("momrep_check", False)),
                          tail_correction=bool(p.get("tail_correction", True)), threads=threads)
    return r.to_record(p)


def _run_corr(p, seed, threads):
    sp = {k: p[k] for k in ("paths", "window", "spacing", "bin_width", "dt", "policy") if k in p}
    r = corr_compare(p["beta"], p["m"], p["xs"], sp, p["replicas"], seed, N=p.get("n", 512), threads=threads)
    return r.to_record(p)


def _run_bound(p, seed, threads):
    r = bound_verify(p["beta"], p["delta"], p["rs"], p["x_configs"], p["ns"], p["replicas"], seed,
                     spread_limit=p.get("spread_limit", 3.0), threads=threads)
    return r.to_record(p)


def _run_qu_valko(p, seed, threads):
    r = qu_valko_check(p["beta"], p["x"], p["replicas"], seed, N=p.get("n", 512),
                       cj_replicas=p.get("cj_replicas"), kmax=p.get("kmax"), dt=p.get("dt"),
                       policy=p.get("policy", "geometric"), threads=threads)
    return r.to_record(p)


def _run_sine_sim(p, seed, threads):
    W = float(p.get("window", 20.0))
    lam = sinebeta.lambda_grid(W, p.get("spacing", 0.5))
    t0 = p.get("t0")
    if t0 is None and p.get("t0_factor"):
        t0 = p["t0_factor"] * sinebeta.default_t0(p["beta"], W)
    batch = sinebeta.simulate_endpoints(p["beta"], p.get("delta", 0.0), lam, p["replicas"], seed,
                                        dt=p.get("dt"), t0=t0, policy=p.get("policy", "geometric"),
                                        threads=threads)
    samples, discarded = sinebeta.sample_points(batch, (-W, W), interp=p.get("interp", "pchip"))
    inten = sinebeta.estimate_intensity(samples)
    bw = float(p.get("bin_width", 0.1))
    xmax = float(p.get("xmax", min(10.0, W)))
    pc = sinebeta.estimate_pair_correlation(samples, np.arange(0.0, xmax + 0.5 * bw, bw))
    derived = {"intensity": inten.mean, "intensity_stderr": inten.stderr, "discarded": discarded,
               "jump_violations": batch.jump_violations,
               "monotone_violation_rate": batch.monotone_violation_rate(),
               "steps": batch.grid.steps, "t0": batch.grid.t0,
               "pair_correlation": {"edges": pc.edges.tolist(), "rho": pc.rho.tolist(),
                                    "stderr": [float(x) if math.isfinite(x) else None for x in pc.stderr],
                                    "counts": pc.counts.tolist()}}
    if p.get("emit_points"):
        derived["points"] = [{"theta": s.theta, "points": s.points.tolist()} for s in samples]
    return ExperimentRecord("sine-sim", p, seed, [_est_dict(inten, "intensity")], derived)


def _run_zeta_eval(p, seed, threads):
    R = float(p.get("R", 80.0))
    zs = [float(z) for z in _as_list(p.get("zs", [1.0]))]
    rs = [float(r) for r in _as_list(p.get("rs", []))]
    tail = p.get("tail", "none")
    beta, delta = p["beta"], p.get("delta", 0.0)
    if rs:
        cc = zeta.xi_moment_cross_check(beta, delta, zs, rs,
                                        {"paths": p["replicas"], "R": R, "tail": tail, "seed": seed,
                                         "threads": threads},
                                        {"N": p.get("n", 512), "replicas": p.get("cj_replicas", 4000),
                                         "seed": seed, "threads": threads})
        return ExperimentRecord("zeta-eval", p, seed, [_est_dict(cc.route_a, "sde"), _est_dict(cc.route_b, "cje")],
                                {"z_score": cc.z_score, "flags": cc.flags},
                                status="ok" if not cc.flags else "unreliable")
    batch = sinebeta.simulate_endpoints(beta, delta, sinebeta.lambda_grid(R, p.get("spacing", 0.5)),
                                        p["replicas"], seed, threads=threads, purpose="zeta-eval")
    samples, discarded = sinebeta.sample_points(batch, (-R, R))
    la = zeta.xi_abs_batch(samples, zs, R, tail)
    ests = [weighted_estimate(np.exp(la[:, j]), None, seed=seed, params={"z": z, "R": R, "tail": tail})
            for j, z in enumerate(zs)]
    derived = {"discarded": discarded, "values": [
        [zeta.xi_pv(s, z, R, tail).real for z in zs] for s in samples[: int(p.get("dump", 5))]]}
    return ExperimentRecord("zeta-eval", p, seed, [_est_dict(e, f"E|xi({z})|") for e, z in zip(ests, zs)],
                            derived)


EXPERIMENTS: dict[str, Callable[[dict, int | None, int | None], ExperimentRecord]] = {
    "constants": _run_constants,
    "oracle": _run_oracle,
    "phase-tail": _run_phase_tail,
    "mom-direct": _run_mom_direct,
    "mom-scaling": _run_mom_scaling,
    "mom-limit": _run_mom_limit,
    "corr-compare": _run_corr,
    "bound-verify": _run_bound,
    "qu-valko": _run_qu_valko,
    "sine-sim": _run_sine_sim,
    "zeta-eval": _run_zeta_eval,
}

_SEEDLESS = {"constants", "oracle"}


def run_experiment(name: str, params: dict[str, Any], seed: int | None = None,
                   threads: int | None = None) -> ExperimentRecord:
    """Run a registered experiment and return its record (seed generated if absent)."""
    if name not in EXPERIMENTS:
        raise DomainError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    from . import __version__
    if name not in _SEEDLESS and seed is None:
        seed = rngmod.new_seed()
    t = time.perf_counter()
    rec = EXPERIMENTS[name](dict(params), seed, threads)
    rec.seed = seed if name not in _SEEDLESS else None
    rec.wall_time = time.perf_counter() - t
    rec.version = __version__
    return rec


def _comparable(rec: ExperimentRecord) -> dict[str, Any]:
    import json
    d = rec.to_dict()
    d.pop("wall_time", None)
    d.pop("version", None)
    return json.loads(json.dumps(d, default=_json_default))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)!r}")


def replay(record: ExperimentRecord | dict, threads: int | None = None) -> tuple[ExperimentRecord, bool]:
    """Re-run a stored record; returns the new record and whether it matches bit for bit."""
    if isinstance(record, dict):
        record = ExperimentRecord.from_dict(record)
    new = run_experiment(record.experiment, record.params, record.seed, threads)
    return new, _comparable(new) == _comparable(record)
