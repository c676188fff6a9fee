"""Truncated normal distribution TN(mu, sigma, a, b).

Scalar helpers take a :class:`TruncNormParams`; the ``*_arr`` variants work on
broadcastable numpy arrays and are what the fitter and the density engine use.
All times are minutes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

DEGENERATE_NORMALIZER = 1e-300
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class DegenerateDistributionError(ValueError):
    """Raised when the truncated mass Phi(beta) - Phi(alpha) underflows."""


@dataclass(frozen=True)
class TruncNormParams:
    mu: float
    sigma: float
    a: float
    b: float

    def __post_init__(self) -> None:
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if self.a < 0:
            raise ValueError(f"travel times are non-negative, got a={self.a}")

    @property
    def var(self) -> float:
        return self.sigma * self.sigma

    def mean(self) -> float:
        """Mean of the truncated distribution (not the location ``mu``)."""
        return float(truncated_mean_arr(self.mu, self.sigma, self.a, self.b))


def std_cdf(z):
    return special.ndtr(z)


def std_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z - _LOG_SQRT_2PI)


def log_mass_arr(mu, sigma, a, b):
    """log(Phi(beta) - Phi(alpha)), stable in both tails."""
    mu, sigma, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mu, sigma, a, b)))
    alpha = (a - mu) / sigma
    beta = (b - mu) / sigma
    # Reflect so the difference is taken in the lower tail where log_ndtr is accurate.
    flip = alpha > 0
    lo = np.where(flip, -beta, alpha)
    hi = np.where(flip, -alpha, beta)
    log_hi = special.log_ndtr(hi)
    log_lo = special.log_ndtr(lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = log_hi + np.log1p(-np.exp(log_lo - log_hi))
    return out


def mass_arr(mu, sigma, a, b):
    return np.exp(log_mass_arr(mu, sigma, a, b))


def _check_mass(log_mass) -> None:
    if np.any(~(log_mass > math.log(DEGENERATE_NORMALIZER))):
        raise DegenerateDistributionError("truncated normal normalizer below 1e-300")


def logpdf_arr(x, mu, sigma, a, b, check: bool = True):
    x, mu, sigma, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, mu, sigma, a, b)))
    lm = log_mass_arr(mu, sigma, a, b)
    if check:
        _check_mass(lm)
    z = (x - mu) / sigma
    out = -0.5 * z * z - _LOG_SQRT_2PI - np.log(sigma) - lm
    return np.where((x >= a) & (x <= b), out, -np.inf)


def pdf_arr(x, mu, sigma, a, b, check: bool = True):
    return np.exp(logpdf_arr(x, mu, sigma, a, b, check=check))


def cdf_arr(x, mu, sigma, a, b, check: bool = True):
    x, mu, sigma, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, mu, sigma, a, b)))
    lm = log_mass_arr(mu, sigma, a, b)
    if check:
        _check_mass(lm)
    xc = np.clip(x, a, b)
    # Mass of [a, xc] over mass of [a, b], both computed in log space.
    with np.errstate(divide="ignore", invalid="ignore"):
        part = np.exp(log_mass_arr(mu, sigma, a, xc) - lm)
    part = np.where(xc > a, part, 0.0)
    out = np.clip(part, 0.0, 1.0)
    out = np.where(x <= a, 0.0, out)
    return np.where(x >= b, 1.0, out)


def truncated_mean_arr(mu, sigma, a, b):
    alpha = (np.asarray(a, float) - mu) / sigma
    beta = (np.asarray(b, float) - mu) / sigma
    lm = log_mass_arr(mu, sigma, a, b)
    ratio = (std_pdf(alpha) - std_pdf(beta)) / np.exp(lm)
    return mu + sigma * ratio


def ppf_arr(u, mu, sigma, a, b):
    """Inverse CDF of the truncated normal, u in [0, 1]."""
    u, mu, sigma, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (u, mu, sigma, a, b)))
    alpha = (a - mu) / sigma
    beta = (b - mu) / sigma
    flip = alpha > 0
    # Sample the mirrored distribution when the support sits in the upper tail.
    lo = np.where(flip, -beta, alpha)
    hi = np.where(flip, -alpha, beta)
    uu = np.where(flip, 1.0 - u, u)
    plo = special.ndtr(lo)
    phi = special.ndtr(hi)
    z = special.ndtri(plo + uu * (phi - plo))
    z = np.where(flip, -z, z)
    return np.clip(mu + sigma * z, a, b)


def pdf(p: TruncNormParams, x: float) -> float:
    return float(pdf_arr(x, p.mu, p.sigma, p.a, p.b))


def cdf(p: TruncNormParams, x: float) -> float:
    return float(cdf_arr(x, p.mu, p.sigma, p.a, p.b))


def sample(p: TruncNormParams, rng: np.random.Generator, size=None):
    """Inverse-CDF draws in [a, b]. Returns a float when ``size`` is None."""
    _check_mass(log_mass_arr(p.mu, p.sigma, p.a, p.b))
    u = rng.random(size)
    out = ppf_arr(u, p.mu, p.sigma, p.a, p.b)
    return float(out) if size is None else out


def sum_approx(parts: Sequence[TruncNormParams] | Iterable[TruncNormParams]) -> TruncNormParams:
    """Approximate a sum of independent truncated normals by one truncated normal.

    Locations, variances and both truncation points add field-wise.
    """
    parts = list(parts)
    if not parts:
        raise ValueError("sum_approx needs at least one component")
    if len(parts) == 1:
        return parts[0]
    mu = math.fsum(p.mu for p in parts)
    var = math.fsum(p.sigma * p.sigma for p in parts)
    a = math.fsum(p.a for p in parts)
    b = math.fsum(p.b for p in parts)
    return TruncNormParams(mu, math.sqrt(var), a, b)


def loglik_grads_arr(x, mu, var, a, b):
    """Log-density of each observation and its partials w.r.t. ``mu`` and ``var``.

    Observations outside [a, b] get ``-inf`` log-density and zero gradients.
    """
    x, mu, var, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, mu, var, a, b)))
    sigma = np.sqrt(var)
    lm = log_mass_arr(mu, sigma, a, b)
    alpha = (a - mu) / sigma
    beta = (b - mu) / sigma
    z = (x - mu) / sigma
    inside = (x >= a) & (x <= b)
    ll = np.where(inside, -0.5 * z * z - _LOG_SQRT_2PI - 0.5 * np.log(var) - lm, -np.inf)
    # phi(.)/Z formed in log space so that far-tail supports do not overflow.
    with np.errstate(over="ignore", invalid="ignore"):
        r_beta = np.exp(-0.5 * beta * beta - _LOG_SQRT_2PI - lm)
        r_alpha = np.exp(-0.5 * alpha * alpha - _LOG_SQRT_2PI - lm)
        # (b - mu) * phi(beta): guard the infinite-bound 0 * inf case.
        tb = np.where(np.isfinite(beta), beta * r_beta, 0.0)
        ta = np.where(np.isfinite(alpha), alpha * r_alpha, 0.0)
    d_mu = (x - mu) / var + (r_beta - r_alpha) / sigma
    d_var = (x - mu) ** 2 / (2 * var * var) - 1.0 / (2 * var) + (tb - ta) / (2 * var)
    d_mu = np.where(inside, d_mu, 0.0)
    d_var = np.where(inside, d_var, 0.0)
    return ll, d_mu, d_var
