"""Standard-normal and upper-truncated-Gaussian primitives.

All entropies and mutual-information quantities in this package are in nats.
The functions here are numerically hardened so that downstream acquisition
code never sees a NaN or a spurious -inf from deep-tail cumulative values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .validation import check_finite

__all__ = [
    "std_pdf",
    "std_cdf",
    "log_std_cdf",
    "log_std_pdf",
    "pdf_cdf_ratio",
    "log_sum_exp",
    "UpperTruncatedGaussian",
    "trunc_gauss_pdf",
    "trunc_gauss_entropy",
    "gaussian_entropy",
]

_LOG_2PI = math.log(2.0 * math.pi)
_HALF_LOG_2PI_E = 0.5 * math.log(2.0 * math.pi * math.e)


def std_pdf(z):
    """Standard normal density at ``z`` (scalar or array)."""
    z = check_finite(z, "z")
    out = np.exp(-0.5 * z * z - 0.5 * _LOG_2PI)
    return out if out.ndim else float(out)


def log_std_pdf(z):
    z = np.asarray(z, dtype=float)
    out = -0.5 * z * z - 0.5 * _LOG_2PI
    return out if out.ndim else float(out)


def std_cdf(z):
    """Standard normal cumulative distribution at ``z``."""
    z = check_finite(z, "z")
    out = special.ndtr(z)
    return out if np.ndim(out) else float(out)


def log_std_cdf(z):
    """log of the standard normal CDF, finite for any finite ``z``.

    Far in the lower tail the plain CDF underflows to zero; this routine
    switches to an asymptotic evaluation there so the logarithm stays finite
    (e.g. log_std_cdf(-40) ~ -804.6).
    """
    z = check_finite(z, "z")
    out = special.log_ndtr(z)
    return out if np.ndim(out) else float(out)


def pdf_cdf_ratio(z):
    """psi(z)/Psi(z), evaluated in log space so the deep lower tail is exact.

    For z -> -inf the ratio grows like -z (inverse Mills ratio); the naive
    quotient would be 0/0 long before that.
    """
    z = np.asarray(z, dtype=float)
    out = np.exp(log_std_pdf(z) - special.log_ndtr(z))
    return out if out.ndim else float(out)


def log_sum_exp(values, axis=None):
    """Overflow-free log(sum(exp(values))); exact for a single element."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("log_sum_exp requires at least one value")
    out = special.logsumexp(values, axis=axis)
    return out if np.ndim(out) else float(out)


def gaussian_entropy(variance):
    """Differential entropy of a Gaussian with the given variance, in nats."""
    variance = np.asarray(variance, dtype=float)
    out = _HALF_LOG_2PI_E + 0.5 * np.log(variance)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class UpperTruncatedGaussian:
    """Gaussian restricted to (-inf, upper], renormalized by Psi(h).

    h = (upper - mean) / stddev is the standardized truncation point.
    """

    mean: float
    stddev: float
    upper: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.upper)):
            raise ValueError("mean and upper bound must be finite")
        if not (np.isfinite(self.stddev) and self.stddev > 0):
            raise ValueError(f"stddev must be positive, got {self.stddev!r}")

    @property
    def h(self) -> float:
        return (self.upper - self.mean) / self.stddev

    def pdf(self, y):
        return trunc_gauss_pdf(self, y)

    def entropy(self) -> float:
        return trunc_gauss_entropy(self)


def trunc_gauss_pdf(tg: UpperTruncatedGaussian, y):
    """Density of the upper-truncated Gaussian; zero above the bound."""
    y = np.asarray(y, dtype=float)
    z = (y - tg.mean) / tg.stddev
    log_norm = math.log(tg.stddev) + special.log_ndtr(tg.h)
    out = np.where(y <= tg.upper, np.exp(log_std_pdf(z) - log_norm), 0.0)
    return out if out.ndim else float(out)


def trunc_gauss_entropy(tg: UpperTruncatedGaussian) -> float:
    """Closed-form differential entropy of the upper-truncated Gaussian.

    0.5 log(2 pi e s^2) + log Psi(h) - h psi(h) / (2 Psi(h)).  The pdf/cdf
    ratio is evaluated in log space so extreme truncations (h << -8) return a
    finite value instead of NaN.
    """
    h = tg.h
    ratio = pdf_cdf_ratio(h)
    return float(
        _HALF_LOG_2PI_E
        + math.log(tg.stddev)
        + special.log_ndtr(h)
        - 0.5 * h * ratio
    )
