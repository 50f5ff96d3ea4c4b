"""Scalar special functions behind the Matérn family.

``bessel_k`` is a self-contained fractional-order modified Bessel function of
the second kind: Temme's series for ``x < 2`` and Steed's continued fraction
for ``x >= 2`` evaluate orders in [-1/2, 1/2], and forward recurrence lifts
them to the requested order.  Everything is vectorized over ``x`` for a fixed
order, which is the access pattern of covariance assembly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "BesselSaturation",
    "MaternParams",
    "bessel_k",
    "bessel_k_scaled",
    "log_bessel_k",
    "matern_corr",
    "matern_spectral_density",
    "gamma_factor",
]

_EPS = 1e-16
_MAXIT = 10000
_XMIN_CF = 2.0
# power series of 1/Gamma(z), Abramowitz & Stegun 6.1.34
_RGAMMA_COEF = np.array([
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
])


class BesselSaturation(RuntimeWarning):
    """K_nu(x) overflowed double precision and was clamped to the largest float."""


@dataclass(frozen=True)
class MaternParams:
    """Matérn correlation parameters: smoothness ``nu`` and inverse range ``phi``."""

    nu: float
    phi: float

    def __post_init__(self):
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise ValueError(f"Matérn smoothness must be positive, got {self.nu}")
        if not (self.phi > 0 and math.isfinite(self.phi)):
            raise ValueError(f"Matérn decay must be positive, got {self.phi}")


def _temme_gammas(mu):
    """gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu) for |mu| <= 1/2."""
    c = _RGAMMA_COEF
    # 1/Gamma(1+z) = sum_k c[k] z^k
    even = c[0::2]
    odd = c[1::2]
    m2 = mu * mu
    gam2 = np.polyval(even[::-1], m2)
    gam1 = -np.polyval(odd[::-1], m2)
    gampl = gam2 - mu * gam1
    gammi = gam2 + mu * gam1
    return gam1, gam2, gampl, gammi


def _k_pair_series(mu, x):
    """K_mu(x), K_{mu+1}(x) by Temme's series, valid for x < 2."""
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -np.log(x2)
    e = mu * d
    with np.errstate(invalid="ignore", divide="ignore"):
        fact2 = np.where(np.abs(e) < _EPS, 1.0, np.sinh(e) / np.where(e == 0, 1.0, e))
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    total = ff.copy()
    ee = np.exp(e)
    p = 0.5 * ee / gampl
    q = 0.5 / (ee * gammi)
    c = np.ones_like(x)
    dd = x2 * x2
    total1 = p.copy()
    for i in range(1, _MAXIT):
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c = c * dd / i
        p = p / (i - mu)
        q = q / (i + mu)
        delta = c * ff
        total += delta
        total1 += c * (p - i * ff)
        if np.all(np.abs(delta) < np.abs(total) * _EPS):
            break
    else:  # pragma: no cover - series converges in < 30 terms for x < 2
        raise RuntimeError("Temme series failed to converge")
    return total, total1 * 2.0 / x


def _k_pair_cf_scaled(mu, x):
    """exp(x) K_mu(x), exp(x) K_{mu+1}(x) by Steed's continued fraction, x >= 2."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25 - mu * mu
    q = np.full_like(x, a1)
    c = np.full_like(x, a1)
    a = np.full_like(x, -a1)
    s = 1.0 + q * delh
    active = np.ones(x.shape, dtype=bool)
    for i in range(2, _MAXIT):
        a_n = a - 2.0 * (i - 1)
        c_n = -a_n * c / i
        qnew = (q1 - b * q2) / a_n
        q_n = q + c_n * qnew
        b_n = b + 2.0
        d_n = 1.0 / (b_n + a_n * d)
        delh_n = (b_n * d_n - 1.0) * delh
        h_n = h + delh_n
        dels = q_n * delh_n
        s_n = s + dels
        # freeze converged entries so late iterations cannot underflow them
        a = np.where(active, a_n, a)
        c = np.where(active, c_n, c)
        q1, q2 = np.where(active, q2, q1), np.where(active, qnew, q2)
        q = np.where(active, q_n, q)
        b = np.where(active, b_n, b)
        d = np.where(active, d_n, d)
        delh = np.where(active, delh_n, delh)
        h = np.where(active, h_n, h)
        s = np.where(active, s_n, s)
        active &= np.abs(dels / s_n) >= _EPS
        if not active.any():
            break
    else:  # pragma: no cover
        raise RuntimeError("continued fraction failed to converge")
    h = a1 * h
    kmu = np.sqrt(math.pi / (2.0 * x)) / s
    k1 = kmu * (mu + x + 0.5 - h) / x
    return kmu, k1


def _bessel_k_core(nu, x):
    """exp(x) * K_nu(x) for nu >= 0, recurrence applied from the reduced order."""
    nl = int(nu + 0.5)
    mu = nu - nl
    out = np.empty_like(x)
    small = x < _XMIN_CF
    with np.errstate(over="ignore", invalid="ignore"):
        if small.any():
            xs = x[small]
            kmu, k1 = _k_pair_series(mu, xs)
            for i in range(1, nl + 1):
                kmu, k1 = k1, (mu + i) * (2.0 / xs) * k1 + kmu
            out[small] = kmu * np.exp(xs)
        if (~small).any():
            xl = x[~small]
            kmu, k1 = _k_pair_cf_scaled(mu, xl)
            for i in range(1, nl + 1):
                kmu, k1 = k1, (mu + i) * (2.0 / xl) * k1 + kmu
            out[~small] = kmu
    return out


def _check_args(nu, x):
    if not (nu >= 0 and math.isfinite(nu)):
        raise ValueError(f"order must be finite and >= 0, got {nu}")
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("bessel_k requires x > 0")
    return x


def _saturate(values):
    bad = ~np.isfinite(values)
    if bad.any():
        warnings.warn(
            f"K_nu overflowed at {int(bad.sum())} point(s); clamped to float max",
            BesselSaturation,
            stacklevel=3,
        )
        values = np.where(bad, np.finfo(float).max, values)
    return values


def bessel_k_scaled(nu, x):
    """exp(x) * K_nu(x), finite for all x > 0 that do not overflow at small x."""
    x = _check_args(nu, x)
    scalar = x.ndim == 0
    out = _saturate(_bessel_k_core(float(nu), np.atleast_1d(x)))
    return float(out[0]) if scalar else out.reshape(x.shape)


def bessel_k(nu, x):
    """Modified Bessel function of the second kind K_nu(x) for real nu >= 0.

    Parameters
    ----------
    nu : float
        Order, ``nu >= 0``.
    x : float or array_like
        Arguments, all strictly positive.

    Returns
    -------
    float or ndarray
        K_nu(x).  Values that overflow for tiny ``x`` are clamped to the
        largest finite double and a :class:`BesselSaturation` warning is issued.
    """
    x = _check_args(nu, x)
    scalar = x.ndim == 0
    xs = np.atleast_1d(x)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = _bessel_k_core(float(nu), xs) * np.exp(-xs)
    vals = _saturate(vals)
    return float(vals[0]) if scalar else vals.reshape(x.shape)


def log_bessel_k(nu, x):
    """log K_nu(x), avoiding underflow for large x."""
    x = _check_args(nu, x)
    with np.errstate(over="ignore", divide="ignore"):
        val = np.log(_bessel_k_core(float(nu), np.atleast_1d(x))) - np.atleast_1d(x)
    return float(val[0]) if x.ndim == 0 else val.reshape(x.shape)


def matern_corr(h, p: MaternParams):
    """Matérn correlation 2^{1-nu} / Gamma(nu) (phi h)^nu K_nu(phi h).

    Exactly 1 where ``phi * h < 1e-10``.  Accepts scalar or array distances.
    """
    h = np.asarray(h, dtype=float)
    if np.any(h < 0) or np.any(np.isnan(h)):
        raise ValueError("distances must be non-negative")
    x = np.atleast_1d(p.phi * h)
    out = np.ones_like(x)
    far = x >= 1e-10
    if far.any():
        xf = x[far]
        nu = p.nu
        with np.errstate(divide="ignore", over="ignore"):
            logk = np.log(_bessel_k_core(nu, xf)) - xf
            logm = (1.0 - nu) * math.log(2.0) - gammaln(nu) + nu * np.log(xf) + logk
        out[far] = np.minimum(np.exp(logm), 1.0)
    return float(out[0]) if h.ndim == 0 else out.reshape(h.shape)


def matern_spectral_density(omega_norm, p: MaternParams, d: int):
    """Spectral density of the Matérn correlation on R^d at frequency magnitude.

    m(w) = Gamma(nu + d/2) phi^{2 nu} / (Gamma(nu) pi^{d/2}) (phi^2 + |w|^2)^{-(nu + d/2)},
    normalized so that its integral over R^d is one.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    w = np.asarray(omega_norm, dtype=float)
    if np.any(w < 0):
        raise ValueError("frequency magnitude must be non-negative")
    nu, phi = p.nu, p.phi
    a = nu + 0.5 * d
    logc = gammaln(a) + 2.0 * nu * math.log(phi) - gammaln(nu) - 0.5 * d * math.log(math.pi)
    out = np.exp(logc - a * np.log(phi * phi + w * w))
    return float(out) if w.ndim == 0 else out


def gamma_factor(nu_i: float, nu_j: float, d: int) -> float:
    """Colocated normalization gamma_ij of the parsimonious multivariate Matérn.

    Computed in log space; the arguments are sorted first so the result is
    exactly symmetric.
    """
    if not (nu_i > 0 and nu_j > 0):
        raise ValueError("smoothness parameters must be positive")
    a, b = sorted((float(nu_i), float(nu_j)))
    if a == b:
        return 1.0
    half = 0.5 * d
    nbar = 0.5 * (a + b)
    lg = (
        0.5 * (gammaln(a + half) - gammaln(a) + gammaln(b + half) - gammaln(b))
        + gammaln(nbar)
        - gammaln(nbar + half)
    )
    return float(math.exp(lg))
