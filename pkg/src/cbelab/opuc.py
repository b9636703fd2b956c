"""Random orthogonal polynomials on the unit circle.

A chain of size ``N`` stores ``N - 1`` Verblunsky coefficients ``α_0..α_{N-2}``
plus a unit-modulus ``η`` that plays the role of ``α_{N-1}``. With that
convention the characteristic-polynomial representative is ``Φ*_N`` from the
Szegő recursion

    Φ_{k+1}(z)  = z Φ_k(z) - conj(α_k) Φ*_k(z)
    Φ*_{k+1}(z) = Φ*_k(z) - z α_k Φ_k(z)

and ``|X_N(e^{iθ})| = prod_{j<N} |1 - α_j e^{iΨ_j(θ)}|`` with Prüfer phases
``Ψ_j(θ) = (j+1)θ - 2 sum_{r<j} arg(1 - α_r e^{iΨ_r(θ)})``.

Tilted sampling
---------------
``sample_chains(..., tilt=δ)`` draws chains whose law is the CβE law weighted
by ``|X_N(1)|^{2δ}``, i.e. the circular-Jacobi law. The rotated coefficients
``α̃_j = α_j e^{iΨ_j(0)}`` are independent with the untilted law, and
``|X_N(1)| = prod_j |1 - α̃_j|``; tilting each ``α̃_j`` by ``|1 - α̃_j|^{2δ}``
and mapping back is therefore exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numba import njit
from scipy import special

from .errors import DomainError
from . import rng as rngmod

__all__ = [
    "VerblunskyChain",
    "ChainBatch",
    "SzegoEval",
    "sample_verblunsky",
    "sample_chains",
    "chains_for_block",
    "szego_eval",
    "prufer_phases",
    "prufer_product",
    "char_poly_abs",
    "log_abs_batch",
    "log_abs_circle_batch",
    "prufer_batch",
    "phase_increments",
    "phase_tail_bound",
    "tilted_unit_sample",
    "log_tilt_mean",
]

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class VerblunskyChain:
    """Immutable coefficient chain of size ``N = len(alphas) + 1``.

    Attributes
    ----------
    beta : float
    alphas : ndarray of complex, shape (N-1,)
    eta : complex, ``|eta| = 1``
    seed : dict or None
        Provenance of the draw.
    tilt : float
        ``δ`` of the circular-Jacobi law the chain was drawn from (0 for CβE).
    """

    beta: float
    alphas: np.ndarray
    eta: complex
    seed: dict | None = None
    tilt: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=complex).reshape(-1)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "eta", complex(self.eta))
        if a.size and not np.all(np.abs(a) < 1.0):
            raise DomainError("Verblunsky coefficients must satisfy |alpha| < 1")
        if abs(abs(self.eta) - 1.0) > 1e-12:
            raise DomainError(f"eta must have unit modulus, got |eta|={abs(self.eta)!r}")

    @property
    def size(self) -> int:
        return self.alphas.size + 1

    def coefficients(self) -> np.ndarray:
        """All ``N`` recursion coefficients, ``η`` last."""
        return np.append(self.alphas, self.eta)


@dataclass
class ChainBatch:
    """``R`` chains of equal size stored as an ``(R, N)`` coefficient matrix (η in the last column)."""

    beta: float
    coeffs: np.ndarray
    tilt: float = 0.0

    @property
    def size(self) -> int:
        return self.coeffs.shape[1]

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def chain(self, i: int) -> VerblunskyChain:
        c = self.coeffs[i]
        return VerblunskyChain(self.beta, c[:-1].copy(), complex(c[-1]), tilt=self.tilt)


@dataclass
class SzegoEval:
    """Log-scaled ``Φ_N`` and ``Φ*_N`` at a set of angles (optionally with Prüfer phases)."""

    angles: np.ndarray
    log_mag_phi_star: np.ndarray
    phase_phi_star: np.ndarray
    log_mag_phi: np.ndarray
    phase_phi: np.ndarray
    prufer: np.ndarray | None = None
    extra: dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# sampling


def _check_sizes(beta: float, N: int) -> tuple[float, int]:
    beta = float(beta)
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta!r}")
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    return beta, int(N)


def log_tilt_mean(b: float, delta: float) -> float:
    """``log E|1 - α|^{2δ}`` for ``|α|² ~ Beta(1, b)`` with uniform phase."""
    return (special.gammaln(1.0 + b) + special.gammaln(1.0 + 2.0 * delta + b)
            - 2.0 * special.gammaln(1.0 + delta + b))


def tilted_unit_sample(rng: np.random.Generator, delta: float, size: int) -> np.ndarray:
    """Angles on ``[0, 2π)`` with density ∝ ``|1 - e^{iθ}|^{2δ}`` by rejection from uniform."""
    out = np.empty(size)
    if delta == 0.0:
        out[:] = _TWO_PI * rng.random(size)
        return out
    pending = np.arange(size)
    while pending.size:
        th = _TWO_PI * rng.random(pending.size)
        acc = rng.random(pending.size) <= np.abs(np.sin(0.5 * th)) ** (2.0 * delta)
        out[pending[acc]] = th[acc]
        pending = pending[~acc]
    return out


def _untilted_column(rng: np.random.Generator, b: float, size: int) -> np.ndarray:
    u = -np.expm1(np.log(rng.random(size)) / b)
    phase = _TWO_PI * rng.random(size)
    return np.sqrt(u) * np.exp(1j * phase)


def _tilted_column(rng: np.random.Generator, b: float, delta: float, size: int) -> np.ndarray:
    """Draw ``α`` with density ∝ ``|1-α|^{2δ}`` times the ``(b, uniform-phase)`` law."""
    # radial: (1-u)^{b-1} g(u), g(u) = 2F1(-δ,-δ;1;u) convex with g(0)=1, g(1)=Γ(1+2δ)/Γ(1+δ)²
    c = math.exp(special.gammaln(1.0 + 2.0 * delta) - 2.0 * special.gammaln(1.0 + delta)) - 1.0
    p1 = (b + 1.0) / (b + 1.0 + c)
    u = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        m = pending.size
        first = rng.random(m) < p1
        v = rng.random(m)
        cand = np.where(first, -np.expm1(np.log(v) / b), rng.beta(2.0, b, size=m))
        acc = rng.random(m) * (1.0 + c * cand) <= special.hyp2f1(-delta, -delta, 1.0, cand)
        u[pending[acc]] = cand[acc]
        pending = pending[~acc]
    rho = np.sqrt(u)
    # angular: density ∝ |1 - ρ e^{iφ}|^{2δ}, envelope (1+ρ)^{2δ}
    phase = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        m = pending.size
        r = rho[pending]
        ph = _TWO_PI * rng.random(m)
        ratio = np.abs(1.0 - r * np.exp(1j * ph)) / (1.0 + r)
        acc = rng.random(m) <= ratio ** (2.0 * delta)
        phase[pending[acc]] = ph[acc]
        pending = pending[~acc]
    return rho * np.exp(1j * phase)


def sample_chains(beta: float, N: int, size: int, rng: np.random.Generator,
                  tilt: float = 0.0, eta_rng: np.random.Generator | None = None) -> ChainBatch:
    """Sample ``size`` chains of size ``N``.

    Parameters
    ----------
    beta, N : float, int
    size : int
    rng : numpy.random.Generator
        Stream for the Verblunsky coefficients. Coefficients are drawn column
        by column, so the first ``N - 1`` columns of a size-``N'`` batch
        (``N' > N``) coincide with a size-``N`` batch from the same stream.
    tilt : float, default 0
        Circular-Jacobi exponent ``δ``; 0 gives the CβE.
    eta_rng : numpy.random.Generator, optional
        Separate stream for ``η`` (defaults to ``rng``).

    Returns
    -------
    ChainBatch
    """
    beta, N = _check_sizes(beta, N)
    delta = float(tilt)
    if delta < 0:
        raise DomainError(f"tilt must be nonnegative, got {delta!r}")
    eta_rng = rng if eta_rng is None else eta_rng
    coeffs = np.empty((size, N), dtype=complex)
    if delta == 0.0:
        for j in range(N - 1):
            coeffs[:, j] = _untilted_column(rng, 0.5 * beta * (j + 1), size)
        coeffs[:, N - 1] = np.exp(1j * _TWO_PI * eta_rng.random(size))
        return ChainBatch(beta, coeffs, 0.0)
    half_rot = np.zeros(size)  # sum_{r<j} arg(1 - α̃_r) = -Ψ_j(0)/2
    for j in range(N - 1):
        at = _tilted_column(rng, 0.5 * beta * (j + 1), delta, size)
        coeffs[:, j] = at * np.exp(2j * half_rot)
        half_rot += np.angle(1.0 - at)
    eta_t = np.exp(1j * tilted_unit_sample(eta_rng, delta, size))
    coeffs[:, N - 1] = eta_t * np.exp(2j * half_rot)
    return ChainBatch(beta, coeffs, delta)


def sample_verblunsky(beta: float, N: int, rng: np.random.Generator, tilt: float = 0.0) -> VerblunskyChain:
    """One chain of size ``N``; ``|α_j|² = 1 - U^{1/((β/2)(j+1))}``, uniform phases, uniform ``η``."""
    batch = sample_chains(beta, N, 1, rng, tilt=tilt)
    c = batch.coeffs[0]
    return VerblunskyChain(batch.beta, c[:-1].copy(), complex(c[-1]), tilt=batch.tilt)


def chains_for_block(beta: float, N: int, seed: int, purpose: str, block: int, size: int,
                     tilt: float = 0.0) -> ChainBatch:
    """Chains for replica block ``block`` using the package's counter-derived streams."""
    return sample_chains(beta, N, size, rngmod.stream(seed, purpose, block, 0), tilt=tilt,
                         eta_rng=rngmod.stream(seed, purpose, block, 1))


# ---------------------------------------------------------------------------
# evaluation


def szego_eval(chain: VerblunskyChain, angles: Sequence[float], with_prufer: bool = False) -> SzegoEval:
    """Run the Szegő recursion through all ``N`` coefficients at each angle.

    A common positive rescaling is applied at every step and its log is
    accumulated, so the result is overflow-safe for any ``N``.
    """
    th = np.atleast_1d(np.asarray(angles, dtype=float))
    z = np.exp(1j * th)
    phi = np.ones_like(z)
    phis = np.ones_like(z)
    acc = np.zeros(th.shape)
    coeffs = chain.coefficients()
    for a in coeffs:
        zphi = z * phi
        phi, phis = zphi - np.conj(a) * phis, phis - a * zphi
        scale = np.maximum(np.abs(phis), np.abs(phi))
        scale = np.where(scale > 0, scale, 1.0)
        phi = phi / scale
        phis = phis / scale
        acc += np.log(scale)
    with np.errstate(divide="ignore"):
        lm_star = acc + np.log(np.abs(phis))
        lm = acc + np.log(np.abs(phi))
    ev = SzegoEval(th, lm_star, np.angle(phis), lm, np.angle(phi))
    if with_prufer:
        ev.prufer = np.stack([prufer_phases(chain, t) for t in th])
    return ev


def prufer_phases(chain: VerblunskyChain, theta: float) -> np.ndarray:
    """Prüfer phases ``Ψ_0..Ψ_{N-1}`` at angle ``theta`` (principal-branch arguments)."""
    coeffs = chain.coefficients()
    out = prufer_batch(coeffs[None, :], float(theta))
    return out[0]


def prufer_product(chain: VerblunskyChain, theta: float) -> float:
    """``log prod_j |1 - α_j e^{iΨ_j(θ)}|``, the product-formula value of ``log|Φ*_N|``."""
    psi = prufer_phases(chain, theta)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(np.abs(1.0 - chain.coefficients() * np.exp(1j * psi)))))


def char_poly_abs(chain: VerblunskyChain, theta: float) -> float:
    """``log |X_N(e^{iθ})|`` for the chain's characteristic-polynomial representative.

    Returns ``-inf`` when the value is exactly zero.
    """
    out = np.empty((1, 1))
    _logabs_kernel(chain.coefficients()[None, :], np.array([float(theta)]), out)
    return float(out[0, 0])


def log_abs_batch(coeffs: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """``log|Φ*_N(e^{iθ_m})|`` for each row of ``coeffs``; shape ``(R, M)``."""
    coeffs = np.ascontiguousarray(coeffs, dtype=complex)
    thetas = np.ascontiguousarray(np.atleast_1d(thetas), dtype=float)
    out = np.empty((coeffs.shape[0], thetas.size))
    _logabs_kernel(coeffs, thetas, out)
    return out


def log_abs_circle_batch(coeffs: np.ndarray, nodes: int) -> np.ndarray:
    """``log|X_N|`` on ``nodes`` equispaced angles ``2πm/nodes`` via polynomial coefficients and FFT.

    Cheaper than :func:`log_abs_batch` on full-circle grids; requires
    ``nodes > N``.
    """
    coeffs = np.ascontiguousarray(coeffs, dtype=complex)
    R, N = coeffs.shape
    if nodes <= N:
        raise DomainError(f"nodes must exceed N={N}, got {nodes}")
    poly = np.zeros((R, N + 1), dtype=complex)
    _phi_coeff_kernel(coeffs, poly)
    vals = np.fft.ifft(poly, n=nodes, axis=1) * nodes
    with np.errstate(divide="ignore"):
        return np.log(np.abs(vals))


def prufer_batch(coeffs: np.ndarray, theta: float) -> np.ndarray:
    """Prüfer phases for each row of ``coeffs`` at one angle; shape ``(R, N)``."""
    coeffs = np.ascontiguousarray(coeffs, dtype=complex)
    out = np.empty(coeffs.shape)
    _prufer_kernel(coeffs, float(theta), out)
    return out


@njit(cache=True, nogil=True)
def _logabs_kernel(coeffs, thetas, out):
    R, N = coeffs.shape
    M = thetas.shape[0]
    for m in range(M):
        z = complex(math.cos(thetas[m]), math.sin(thetas[m]))
        for r in range(R):
            phi = 1.0 + 0.0j
            ps = 1.0 + 0.0j
            acc = 0.0
            for k in range(N):
                a = coeffs[r, k]
                zphi = z * phi
                phi = zphi - a.conjugate() * ps
                ps = ps - a * zphi
                s = ps.real * ps.real + ps.imag * ps.imag
                if s > 1e200 or (s < 1e-200 and s > 0.0):
                    sc = math.sqrt(s)
                    phi = phi / sc
                    ps = ps / sc
                    acc += math.log(sc)
            s = ps.real * ps.real + ps.imag * ps.imag
            if s > 0.0:
                out[r, m] = acc + 0.5 * math.log(s)
            else:
                out[r, m] = -np.inf


@njit(cache=True, nogil=True)
def _phi_coeff_kernel(coeffs, out):
    # out[r] <- monomial coefficients of Φ_N (|Φ_N| = |Φ*_N| on the circle)
    R, N = coeffs.shape
    cur = np.empty(N + 1, dtype=np.complex128)
    for r in range(R):
        p = out[r]
        p[:] = 0.0
        p[0] = 1.0
        for k in range(N):
            ac = coeffs[r, k].conjugate()
            for i in range(k + 1):
                cur[i] = p[i]
            p[0] = -ac * cur[k].conjugate()
            for i in range(1, k + 1):
                p[i] = cur[i - 1] - ac * cur[k - i].conjugate()
            p[k + 1] = cur[k]


def phase_increments(coeffs: np.ndarray, theta: float, j: int, ell: int) -> np.ndarray:
    """``Ψ_{j+ℓ}(θ) - Ψ_j(θ) - ℓθ`` for each row of ``coeffs`` (needs ``j + ℓ < N``)."""
    if j < 0 or ell < 0 or j + ell >= coeffs.shape[1]:
        raise DomainError(f"indices j={j}, ell={ell} out of range for N={coeffs.shape[1]}")
    psi = prufer_batch(coeffs[:, : j + ell + 1], theta)
    return psi[:, j + ell] - psi[:, j] - ell * theta


def phase_tail_bound(beta: float, j: int, ell: int, t) -> np.ndarray:
    """Sub-Gaussian bound ``2 exp(-t²β / (8 log(1 + βℓ/(1 + βj))))`` on the phase-increment tail."""
    v = math.log1p(beta * ell / (1.0 + beta * j))
    t = np.asarray(t, dtype=float)
    return np.minimum(1.0, 2.0 * np.exp(-t * t * beta / (8.0 * v)))


@njit(cache=True, nogil=True)
def _prufer_kernel(coeffs, theta, out):
    R, N = coeffs.shape
    for r in range(R):
        s = 0.0
        for j in range(N):
            psi = (j + 1) * theta - 2.0 * s
            out[r, j] = psi
            a = coeffs[r, j]
            w = 1.0 - a * complex(math.cos(psi), math.sin(psi))
            s += math.atan2(w.imag, w.real)
