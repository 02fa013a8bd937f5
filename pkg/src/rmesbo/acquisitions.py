"""Acquisition values and gradients: RMES, MES, EI, and UCB.

MES scores a point by the average entropy reduction of the *noiseless*
output conditioned on sampled max-values, which has a closed form in the
standardized gap h = (f_max - mu) / sigma_x.

RMES scores the mutual information between the max-value and the *noisy*
output.  The conditional density of the noisy output given a max-value is

    p(y | f_max) = N(y; mu, sigma_plus^2) * Psi(g(y)) / Psi(h)

with g(y) = (sigma_plus^2 f_max - sigma_n^2 mu - sigma_x^2 y)
            / (sigma_x sigma_n sigma_plus),

and the acquisition is a Monte-Carlo average over shared standard-normal
draws nu (y = mu + sigma_plus * nu) of importance-weighted log-density
ratios against the finite-mixture marginal.  The same finite max-value set
restricts both entropy terms, so the estimator is a consistent
mutual-information measure.  All tail quantities run in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from .gp import PosteriorModel, PredictiveStats, predict, predict_gradients
from .optimize import NuBlock
from .sampling import MaxValueSet
from .stats import log_std_pdf, pdf_cdf_ratio

__all__ = [
    "AcqContext",
    "RectifiedDensityParams",
    "mes_value",
    "cond_density",
    "log_cond_density",
    "weight",
    "rmes_value",
    "ei_value",
    "ucb_value",
    "AcquisitionFunction",
    "RectifiedMaxValueEntropy",
    "MaxValueEntropy",
    "ExpectedImprovement",
    "UpperConfidenceBound",
    "make_acquisition",
]

_LOG_2PI = math.log(2.0 * math.pi)

# Relative floor on sigma_x below which the analytic zero-information limit
# applies (g and h divide by sigma_x).
SIGMA_X_REL_FLOOR = 1e-6


@dataclass(frozen=True)
class AcqContext:
    """Shared per-iteration state consumed by the acquisition functions."""

    max_values: MaxValueSet | None = None
    nu_block: NuBlock | None = None
    incumbent_best: float | None = None
    ucb_beta: float = 3.0


@dataclass(frozen=True)
class RectifiedDensityParams:
    """Parameters of the noisy-output density conditioned on a max-value."""

    mean: float
    latent_variance: float
    noise_variance: float
    fstar: float

    def __post_init__(self):
        if self.latent_variance <= 0:
            raise ValueError("latent_variance must be positive (zero has its own analytic limit)")
        if self.noise_variance <= 0:
            raise ValueError("noise_variance must be positive for the rectified density")

    @property
    def observation_variance(self) -> float:
        return self.latent_variance + self.noise_variance


def _g_values(params: RectifiedDensityParams, y):
    sx = math.sqrt(params.latent_variance)
    sn = math.sqrt(params.noise_variance)
    sp = math.sqrt(params.observation_variance)
    return (
        params.observation_variance * params.fstar
        - params.noise_variance * params.mean
        - params.latent_variance * np.asarray(y, dtype=float)
    ) / (sx * sn * sp)


def _h_value(params: RectifiedDensityParams) -> float:
    return (params.fstar - params.mean) / math.sqrt(params.latent_variance)


def log_cond_density(params: RectifiedDensityParams, y):
    """log p(y | f_max); stable for arbitrarily deep truncations."""
    sp2 = params.observation_variance
    z = (np.asarray(y, dtype=float) - params.mean) / math.sqrt(sp2)
    log_gauss = log_std_pdf(z) - 0.5 * math.log(sp2)
    out = log_gauss + log_ndtr(_g_values(params, y)) - log_ndtr(_h_value(params))
    return out if np.ndim(out) else float(out)


def cond_density(params: RectifiedDensityParams, y):
    """Density of the noisy output given the max-value (Gaussian times weight)."""
    out = np.exp(log_cond_density(params, y))
    return out if np.ndim(out) else float(out)


def weight(params: RectifiedDensityParams, y):
    """Importance weight Psi(g(y)) / Psi(h) converting Gaussian draws of y
    into draws respecting the max-value condition."""
    out = np.exp(log_ndtr(_g_values(params, y)) - log_ndtr(_h_value(params)))
    return out if np.ndim(out) else float(out)


def _mes_per_sample(h):
    """h psi(h) / (2 Psi(h)) - log Psi(h), elementwise and tail-safe."""
    h = np.asarray(h, dtype=float)
    return 0.5 * h * pdf_cdf_ratio(h) - log_ndtr(h)


def mes_value(stats: PredictiveStats, max_values: MaxValueSet):
    """Average noiseless-output information gain over the max-value samples.

    Accepts scalar stats (returns a float) or array stats of shape (k,)
    (returns shape (k,)).  Zero latent variance carries no information and
    scores 0.
    """
    mu = np.atleast_1d(np.asarray(stats.mean, dtype=float))
    var = np.atleast_1d(np.asarray(stats.latent_variance, dtype=float))
    out = np.zeros(mu.shape)
    ok = var > 0
    if np.any(ok):
        sx = np.sqrt(var[ok])
        h = (max_values.values[None, :] - mu[ok, None]) / sx[:, None]
        out[ok] = np.mean(_mes_per_sample(h), axis=1)
    return out if np.ndim(stats.mean) else float(out[0])


def _logsumexp_axis1(values: np.ndarray) -> np.ndarray:
    """Stable log-sum-exp over axis 1 of a 3-D array, keepdims."""
    peak = np.max(values, axis=1, keepdims=True)
    return peak + np.log(np.sum(np.exp(values - peak), axis=1, keepdims=True))


def _log_ndtr_fast(z: np.ndarray) -> np.ndarray:
    """log Psi on large arrays: direct log of the CDF away from the lower
    tail (cheaper), the asymptotic-safe routine below z = -8.

    Both branches agree to ~1e-13 at the split, so downstream finite
    differences never see a seam.
    """
    tail = z < -8.0
    if np.any(tail):
        out = np.log(ndtr(np.where(tail, 0.0, z)))
        out[tail] = log_ndtr(z[tail])
        return out
    return np.log(ndtr(z))


def _rmes_terms(mu, var, noise_var, fstars, nu):
    """Per-point RMES Monte-Carlo values, vectorized over points.

    mu, var: (k,) arrays with var > 0; returns (k,) values.
    """
    sx = np.sqrt(var)[:, None, None]  # (k,1,1)
    sp2 = var + noise_var
    sp = np.sqrt(sp2)[:, None, None]
    sn = math.sqrt(noise_var)
    F = fstars[None, :, None]  # (1,|F|,1)
    nu = nu[None, None, :]  # (1,1,n)
    gap = F - mu[:, None, None]
    h = gap / sx
    g = (sp * gap - sx**2 * nu) / (sx * sn)
    log_w = _log_ndtr_fast(g) - _log_ndtr_fast(h)
    w = np.exp(log_w)
    log_gauss = -0.5 * nu**2 - np.log(sp) - 0.5 * _LOG_2PI
    log_p = log_gauss + log_w  # (k,|F|,n)
    log_mix = _logsumexp_axis1(log_p)  # log sum_f' p, (k,1,n)
    terms = w * (log_p - log_mix + math.log(fstars.size))
    return terms.mean(axis=(1, 2))


def rmes_value(stats: PredictiveStats, ctx: AcqContext):
    """Noisy-output information gain, Monte-Carlo averaged over shared nu draws.

    Deterministic given the context's NuBlock.  A single max-value sample
    gives exactly 0 (the log ratio vanishes termwise); vanishing latent
    variance returns 0 by the analytic independence limit.
    """
    if ctx.max_values is None or ctx.nu_block is None:
        raise ValueError("rmes_value requires max_values and nu_block in the context")
    mu = np.atleast_1d(np.asarray(stats.mean, dtype=float))
    var = np.atleast_1d(np.asarray(stats.latent_variance, dtype=float))
    noise_var = np.atleast_1d(np.asarray(stats.observation_variance, dtype=float)) - var
    out = np.zeros(mu.shape)
    if ctx.max_values.size > 1:
        nv = float(noise_var.reshape(-1)[0])
        if nv <= 0:
            raise ValueError("rmes_value requires positive noise variance")
        ok = var > (SIGMA_X_REL_FLOOR**2) * (var + nv)
        if np.any(ok):
            out[ok] = _rmes_terms(
                mu[ok], var[ok], nv, ctx.max_values.values, ctx.nu_block.samples
            )
    return out if np.ndim(stats.mean) else float(out[0])


def ei_value(stats: PredictiveStats, incumbent_best: float):
    """Expected improvement of the latent output over the incumbent best."""
    mu = np.atleast_1d(np.asarray(stats.mean, dtype=float))
    var = np.atleast_1d(np.asarray(stats.latent_variance, dtype=float))
    gap = mu - incumbent_best
    out = np.where(gap > 0, gap, 0.0)
    ok = var > 0
    if np.any(ok):
        sx = np.sqrt(var[ok])
        z = gap[ok] / sx
        out[ok] = gap[ok] * ndtr(z) + sx * np.exp(log_std_pdf(z))
    return out if np.ndim(stats.mean) else float(out[0])


def ucb_value(stats: PredictiveStats, beta: float):
    """Upper confidence bound mu + beta * sigma_x on the latent output."""
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    mu = np.asarray(stats.mean, dtype=float)
    out = mu + beta * np.sqrt(np.asarray(stats.latent_variance, dtype=float))
    return out if np.ndim(stats.mean) else float(out)


# ---------------------------------------------------------------------------
# Model-aware acquisition objects for the optimizer.
# ---------------------------------------------------------------------------


class AcquisitionFunction:
    """Common surface: batched values and analytic input gradients."""

    name = "acquisition"
    stochastic = False

    def __init__(self, model: PosteriorModel):
        self.model = model
        # Latent-sigma floor guarding h and g, relative to the prior scale.
        self._var_floor = (1e-8**2) * model.hyper.signal_variance

    def _stats(self, X):
        stats = predict(self.model, np.atleast_2d(X))
        var = np.maximum(stats.latent_variance, 0.0)
        return stats.mean, var

    def value(self, X, nu_block: NuBlock | None = None) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, X, nu_block: NuBlock | None = None) -> np.ndarray:
        """Chain the (d value / d mean, d value / d variance) partials through
        the GP posterior's input gradients."""
        X = np.atleast_2d(X)
        mu, var = self._stats(X)
        d_mu, d_var = self._partials(mu, var, nu_block)
        g_mu, g_var = predict_gradients(self.model, X)
        return d_mu[:, None] * g_mu + d_var[:, None] * g_var

    def _partials(self, mu, var, nu_block):
        raise NotImplementedError


class MaxValueEntropy(AcquisitionFunction):
    """Closed-form max-value entropy search on the noiseless output."""

    name = "mes"

    def __init__(self, model: PosteriorModel, max_values: MaxValueSet):
        super().__init__(model)
        self.max_values = max_values

    def value(self, X, nu_block: NuBlock | None = None) -> np.ndarray:
        mu, var = self._stats(X)
        stats = PredictiveStats(mu, var, var + self.model.hyper.noise_variance)
        return np.atleast_1d(mes_value(stats, self.max_values))

    def _partials(self, mu, var, nu_block):
        var = np.maximum(var, self._var_floor)
        sx = np.sqrt(var)
        h = (self.max_values.values[None, :] - mu[:, None]) / sx[:, None]
        r = pdf_cdf_ratio(h)
        da_dh = -0.5 * r * (1.0 + h * h + h * r)
        d_mu = np.mean(da_dh, axis=1) * (-1.0 / sx)
        d_var = np.mean(da_dh * (-h), axis=1) / (2.0 * var)
        return d_mu, d_var


class RectifiedMaxValueEntropy(AcquisitionFunction):
    """RMES under a fixed block of shared standard-normal draws."""

    name = "rmes"
    stochastic = True

    def __init__(self, model: PosteriorModel, max_values: MaxValueSet, nu_block: NuBlock):
        super().__init__(model)
        if model.hyper.noise_variance <= 0:
            # The rectified density divides by sigma_n; fall back to a tiny
            # synthetic noise floor matching the sigma_x floor policy.
            self._noise_var = self._var_floor
        else:
            self._noise_var = model.hyper.noise_variance
        self.max_values = max_values
        self.nu_block = nu_block

    def _context(self, nu_block):
        return AcqContext(max_values=self.max_values, nu_block=nu_block or self.nu_block)

    def value(self, X, nu_block: NuBlock | None = None) -> np.ndarray:
        ctx = self._context(nu_block)
        mu, var = self._stats(X)
        out = np.empty(mu.shape)
        # Keep each vectorized slab around 2M elements.
        chunk = max(1, 2_000_000 // max(ctx.nu_block.size * ctx.max_values.size, 1))
        for lo in range(0, mu.size, chunk):
            sl = slice(lo, lo + chunk)
            stats = PredictiveStats(mu[sl], var[sl], var[sl] + self._noise_var)
            out[sl] = rmes_value(stats, ctx)
        return out

    def _partials(self, mu, var, nu_block):
        ctx = self._context(nu_block)
        fstars = ctx.max_values.values
        nu = ctx.nu_block.samples
        nv = self._noise_var
        floor = max(self._var_floor, (SIGMA_X_REL_FLOOR**2) * nv)
        d_mu = np.zeros(mu.shape)
        d_var = np.zeros(mu.shape)
        if fstars.size <= 1:
            return d_mu, d_var
        ok = var > floor
        if not np.any(ok):
            return d_mu, d_var
        dm, ds = self._partials_core(mu[ok], var[ok], nv, fstars, nu)
        d_mu[ok] = dm
        d_var[ok] = ds
        return d_mu, d_var

    @staticmethod
    def _partials_core(mu, var, noise_var, fstars, nu):
        """Analytic (d/d mu, d/d var) of the fixed-nu Monte-Carlo objective."""
        k = mu.size
        s = np.sqrt(var)[:, None, None]
        sp2 = (var + noise_var)[:, None, None]
        sp = np.sqrt(sp2)
        sn = math.sqrt(noise_var)
        F = fstars[None, :, None]
        N = nu[None, None, :]
        gap = F - mu[:, None, None]

        h = gap / s
        g = (sp * gap - s**2 * N) / (s * sn)
        log_w = _log_ndtr_fast(g) - _log_ndtr_fast(h)
        w = np.exp(log_w)
        log_gauss = -0.5 * N**2 - np.log(sp) - 0.5 * _LOG_2PI
        log_p = log_gauss + log_w
        log_mix = _logsumexp_axis1(log_p)
        core = log_p - log_mix + math.log(fstars.size)

        r_g = pdf_cdf_ratio(g)
        r_h = pdf_cdf_ratio(h)

        dh_dmu = -1.0 / s
        dh_ds = -h / s
        dg_dmu = -sp / (s * sn)
        dnum_ds = (s / sp) * gap - 2.0 * s * N
        dg_ds = dnum_ds / (s * sn) - g / s
        dlogw_dmu = r_g * dg_dmu - r_h * dh_dmu
        dlogw_ds = r_g * dg_ds - r_h * dh_ds
        dlogp_dmu = dlogw_dmu
        dlogp_ds = dlogw_ds - s / sp2

        soft = np.exp(log_p - log_mix)  # softmax over the max-value axis
        dmix_dmu = np.sum(soft * dlogp_dmu, axis=1, keepdims=True)
        dmix_ds = np.sum(soft * dlogp_ds, axis=1, keepdims=True)

        d_mu = (w * (dlogw_dmu * core + dlogp_dmu - dmix_dmu)).mean(axis=(1, 2))
        d_s = (w * (dlogw_ds * core + dlogp_ds - dmix_ds)).mean(axis=(1, 2))
        d_var = d_s / (2.0 * np.sqrt(var))
        return d_mu.reshape(k), d_var.reshape(k)


class ExpectedImprovement(AcquisitionFunction):
    """Expected improvement over the best observed output."""

    name = "ei"

    def __init__(self, model: PosteriorModel, incumbent_best: float):
        super().__init__(model)
        self.incumbent_best = float(incumbent_best)

    def value(self, X, nu_block: NuBlock | None = None) -> np.ndarray:
        mu, var = self._stats(X)
        stats = PredictiveStats(mu, var, var + self.model.hyper.noise_variance)
        return np.atleast_1d(ei_value(stats, self.incumbent_best))

    def _partials(self, mu, var, nu_block):
        var = np.maximum(var, self._var_floor)
        sx = np.sqrt(var)
        z = (mu - self.incumbent_best) / sx
        d_mu = ndtr(z)
        d_var = np.exp(log_std_pdf(z)) / (2.0 * sx)
        return d_mu, d_var


class UpperConfidenceBound(AcquisitionFunction):
    """mu + beta * sigma_x with a fixed beta."""

    name = "ucb"

    def __init__(self, model: PosteriorModel, beta: float = 3.0):
        super().__init__(model)
        if beta < 0:
            raise ValueError(f"beta must be nonnegative, got {beta}")
        self.beta = float(beta)

    def value(self, X, nu_block: NuBlock | None = None) -> np.ndarray:
        mu, var = self._stats(X)
        return mu + self.beta * np.sqrt(var)

    def _partials(self, mu, var, nu_block):
        var = np.maximum(var, self._var_floor)
        d_mu = np.ones(mu.shape)
        d_var = np.full(mu.shape, self.beta) / (2.0 * np.sqrt(var))
        return d_mu, d_var


def make_acquisition(name: str, model: PosteriorModel, ctx: AcqContext) -> AcquisitionFunction:
    """Build an acquisition object by its CLI name: rmes, mes, ei, or ucb."""
    name = name.lower()
    if name == "rmes":
        if ctx.max_values is None or ctx.nu_block is None:
            raise ValueError("rmes requires max_values and nu_block")
        return RectifiedMaxValueEntropy(model, ctx.max_values, ctx.nu_block)
    if name == "mes":
        if ctx.max_values is None:
            raise ValueError("mes requires max_values")
        return MaxValueEntropy(model, ctx.max_values)
    if name == "ei":
        if ctx.incumbent_best is None:
            raise ValueError("ei requires an incumbent best")
        return ExpectedImprovement(model, ctx.incumbent_best)
    if name == "ucb":
        return UpperConfidenceBound(model, ctx.ucb_beta)
    raise ValueError(f"unknown acquisition {name!r}; expected one of rmes, mes, ei, ucb")
