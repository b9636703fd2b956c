"""Special functions and limit constants.

Everything moment-sized is returned on the log scale. The functions here are
pure and safe to call from any thread.

Notes
-----
``log_barnes_g`` uses the large-argument expansion of ``log G(1+z)`` after
shifting the argument with ``G(x+1) = Gamma(x) G(x)``. ``y_beta`` evaluates
its exponential integral with adaptive quadrature split at ``x = 1``; both
pieces use a cancellation-free form of the integrand.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericalError

__all__ = [
    "ConstantReport",
    "log_gamma",
    "log_barnes_g",
    "y_beta",
    "f_const",
    "c_const",
    "z_const",
    "morris_moment",
    "partition_const",
    "log_cj_normalizer",
    "mom_exponent",
    "constants_report",
]

# zeta'(-1) = 1/12 - log(Glaisher's constant)
_ZETA_PRIME_M1 = -0.16542114370045092
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# B_{2k+2} / (4 k (k+1)) for k = 1..6
_BG_COEFFS = tuple(
    b / (4.0 * k * (k + 1))
    for k, b in enumerate(
        (-1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730, 7.0 / 6), start=1
    )
)
_BG_SHIFT = 20.0


@dataclass
class ConstantReport:
    """A named constant together with the inputs and method that produced it."""

    name: str
    value: float
    inputs: dict[str, Any] = field(default_factory=dict)
    method: str = ""

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise NumericalError(f"{self.name} is not finite: {self.value!r}", inputs=self.inputs)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta!r}")
    return beta


def log_gamma(x: float) -> float:
    """Natural log of the Gamma function for positive real ``x``."""
    x = float(x)
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    return float(special.gammaln(x))


def _log_g1p_asym(z: float) -> float:
    """log G(1+z) from the asymptotic series, accurate for z >= 20."""
    lz = math.log(z)
    s = 0.5 * z * z * lz - 0.75 * z * z + z * _HALF_LOG_2PI - lz / 12.0 + _ZETA_PRIME_M1
    zm2 = 1.0 / (z * z)
    p = zm2
    for c in _BG_COEFFS:
        s += c * p
        p *= zm2
    return s


def log_barnes_g(x: float) -> float:
    """Natural log of the Barnes G-function for positive real ``x``.

    Parameters
    ----------
    x : float
        Positive argument.

    Returns
    -------
    float
        ``log G(x)``. The argument is shifted up by ``n`` with
        ``log G(x) = log G(x+n) - sum_{j<n} log Gamma(x+j)`` until the
        asymptotic expansion is accurate to double precision.
    """
    x = float(x)
    if not x > 0:
        raise DomainError(f"log_barnes_g requires x > 0, got {x!r}")
    if x == 1.0 or x == 2.0:
        return 0.0
    n = max(0, int(math.ceil(_BG_SHIFT + 1.0 - x)))
    shift = float(np.sum(special.gammaln(x + np.arange(n)))) if n else 0.0
    return _log_g1p_asym(x + n - 1.0) - shift


def _y_integrand(x: float, beta: float, z: float) -> float:
    # bracket: 1/(2x) - 1/x^2 + 1/(x(e^x-1))
    if x < 1e-3:
        br = 1.0 / 12.0 - x * x / 720.0
    elif x > 30.0:
        br = 1.0 / (2.0 * x) - 1.0 / (x * x) + math.exp(-x) / (x * (1.0 - math.exp(-x)))
    else:
        br = 1.0 / (2.0 * x) - 1.0 / (x * x) + 1.0 / (x * math.expm1(x))
    hb = 0.5 * beta * x
    if x < 1e-12:
        ratio = -2.0 * z / beta
    elif hb > 30.0 or x * abs(z) > 30.0:
        # (e^{-xz} - 1)/(e^{x beta/2} - 1) = (e^{-x(z+beta/2)} - e^{-x beta/2})/(1 - e^{-x beta/2})
        ratio = (math.exp(-x * (z + 0.5 * beta)) - math.exp(-hb)) / (-math.expm1(-hb))
    else:
        ratio = math.expm1(-x * z) / math.expm1(hb)
    return br * ratio


def _y_integral(beta: float, z: float, epsabs: float = 1e-11) -> float:
    total = 0.0
    for a, b in ((0.0, 1.0), (1.0, math.inf)):
        val, err, info = integrate.quad(
            _y_integrand, a, b, args=(beta, z), epsabs=epsabs, epsrel=1e-12, limit=400,
            full_output=1,
        )[:3]
        if not (math.isfinite(val) and err <= 1e-9):
            raise NumericalError(
                "y_beta quadrature did not converge",
                inputs={"beta": beta, "z": z, "interval": (a, b), "estimate": val,
                        "abserr": err, "neval": info.get("neval")},
            )
        total += val
    return total


def y_beta(beta: float, z: float) -> float:
    """The function 𝒴_β(z) built from log G, log Γ and an exponential integral.

    Parameters
    ----------
    beta : float
        Inverse temperature, positive.
    z : float
        Real argument with ``1 + 2 z / beta > 0``.

    Returns
    -------
    float
        ``(β/2) log G(1+2z/β) - (z-1/2) log Γ(1+2z/β) + I(z) + z²/β + z/2``
        where ``I`` is the exponential integral, computed to an absolute
        error of 1e-9 or better.
    """
    beta = _check_beta(beta)
    z = float(z)
    a = 1.0 + 2.0 * z / beta
    if not a > 0:
        raise DomainError(f"y_beta requires 1 + 2z/beta > 0, got beta={beta!r}, z={z!r}")
    if z == 0.0:
        return 0.0
    return (
        0.5 * beta * log_barnes_g(a)
        - (z - 0.5) * log_gamma(a)
        + _y_integral(beta, z)
        + z * z / beta
        + 0.5 * z
    )


def partition_const(beta: float, r: float) -> float:
    """Limit of ``N^{-2r²/β} E|X_N(1)|^{2r}`` for the CβE.

    Equals ``exp(𝒴_β(1+2r-β/2) - 2𝒴_β(1+r-β/2) + 𝒴_β(1-β/2))``.
    """
    beta = _check_beta(beta)
    r = float(r)
    if r == 0.0:
        return 1.0
    h = 1.0 - 0.5 * beta
    return math.exp(y_beta(beta, h + 2.0 * r) - 2.0 * y_beta(beta, h + r) + y_beta(beta, h))


def f_const(beta: float, k: float, s: float) -> float:
    """Leading constant F in the moments-of-moments limit.

    ``(2π)^{1-k} exp(𝒴_β(1+2ks-β/2) - 2𝒴_β(1+ks-β/2) + 𝒴_β(1-β/2))``.
    """
    beta = _check_beta(beta)
    k, s = float(k), float(s)
    if k < 1 or not s > 0:
        raise DomainError(f"f_const requires k >= 1 and s > 0, got k={k!r}, s={s!r}")
    return (2.0 * math.pi) ** (1.0 - k) * partition_const(beta, k * s)


def c_const(beta: float, m: int) -> float:
    """Constant in the m-point correlation formula for Sine_β.

    The returned value includes the factor ``Γ(1+β/2)^m``, which makes the
    one-point function equal to the intensity ``1/(2π)`` for every β.
    """
    beta = _check_beta(beta)
    if int(m) != m or m < 1:
        raise DomainError(f"c_const requires an integer m >= 1, got {m!r}")
    m = int(m)
    h = 1.0 - 0.5 * beta
    log_c = (
        m * (0.5 * beta - 1.0) * math.log(2.0)
        - m * math.log(math.pi)
        - 0.5 * beta * m * math.log(beta)
        + m * log_gamma(1.0 + 0.5 * beta)
        + y_beta(beta, 1.0 + beta * (m - 0.5))
        - 2.0 * y_beta(beta, 1.0 + 0.5 * beta * (m - 1))
        + y_beta(beta, h)
    )
    return math.exp(log_c)


def z_const(beta: float, N: int) -> float:
    """``log Z_{N,β}`` for the CβE normalisation."""
    beta = _check_beta(beta)
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    return N * math.log(2.0 * math.pi) + log_gamma(0.5 * beta * N + 1.0) - N * log_gamma(0.5 * beta + 1.0)


def morris_moment(beta: float, N: int, r: float) -> float:
    """``log E_{CβE_N} |X_N(1)|^{2r}`` from the Morris product.

    ``sum_{j<N} lnΓ(1+2r+jβ/2) + lnΓ(1+jβ/2) - 2 lnΓ(1+r+jβ/2)``.
    """
    beta = _check_beta(beta)
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    r = float(r)
    if r < 0:
        raise DomainError(f"morris_moment requires r >= 0, got {r!r}")
    if r == 0.0:
        return 0.0
    a = 0.5 * beta * np.arange(int(N), dtype=float)
    terms = special.gammaln(1.0 + 2.0 * r + a) + special.gammaln(1.0 + a) - 2.0 * special.gammaln(1.0 + r + a)
    return float(math.fsum(terms))


def log_cj_normalizer(beta: float, N: int, delta: float) -> float:
    """``log`` of the circular-Jacobi normalisation, ``Z_{N,β} E|X_N(1)|^{2δ}``."""
    return z_const(beta, N) + morris_moment(beta, N, delta)


def mom_exponent(beta: float, k: float, s: float) -> float:
    """Growth exponent ``2k²s²/β - k + 1`` of the moments of moments."""
    return 2.0 * k * k * s * s / beta - k + 1.0


def constants_report(beta: float, *, k: float | None = None, s: float | None = None,
                     m: int | None = None, N: int | None = None,
                     z: float | None = None) -> list[ConstantReport]:
    """Collect whichever constants the given parameters determine."""
    beta = _check_beta(beta)
    out: list[ConstantReport] = []
    if z is not None:
        out.append(ConstantReport("y_beta", y_beta(beta, z), {"beta": beta, "z": z},
                                  "barnes-g asymptotic + adaptive quadrature"))
    if s is not None:
        kk = 1.0 if k is None else float(k)
        out.append(ConstantReport("f_const", f_const(beta, kk, s), {"beta": beta, "k": kk, "s": s},
                                  "y_beta combination"))
        out.append(ConstantReport("mom_exponent", mom_exponent(beta, kk, s),
                                  {"beta": beta, "k": kk, "s": s}, "closed form"))
    if m is not None:
        out.append(ConstantReport("c_const", c_const(beta, m), {"beta": beta, "m": m},
                                  "y_beta combination"))
    if N is not None:
        out.append(ConstantReport("log_z_const", z_const(beta, N), {"beta": beta, "N": N},
                                  "log-gamma closed form"))
        if s is not None:
            out.append(ConstantReport("log_morris_moment", morris_moment(beta, N, s),
                                      {"beta": beta, "N": N, "r": s}, "log-gamma product"))
    return out
