"""Quadrature-backed conformance checks behind the ``check`` CLI command.

Each check verifies a closed-form quantity against an independent numerical
route (adaptive quadrature, convolution, or a direct density evaluation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .acquisitions import AcqContext, RectifiedDensityParams, cond_density, mes_value, rmes_value, weight
from .gp import PredictiveStats
from .optimize import draw_nu_block
from .sampling import MaxValueSet
from .stats import (
    UpperTruncatedGaussian,
    gaussian_entropy,
    log_std_cdf,
    std_cdf,
    trunc_gauss_entropy,
    trunc_gauss_pdf,
)

__all__ = ["CheckResult", "run_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_params(rng: np.random.Generator, count: int = 50):
    """Randomized density parameterizations, seeded with the extreme
    standardized gaps h in {-6, 0, 6}."""
    params = []
    forced_h = [-6.0, 0.0, 6.0]
    for i in range(count):
        mean = rng.uniform(-2, 2)
        latent = rng.uniform(0.05, 4.0)
        noise = rng.uniform(0.01, 2.0)
        h = forced_h[i] if i < len(forced_h) else rng.uniform(-4, 4)
        fstar = mean + h * math.sqrt(latent)
        params.append(RectifiedDensityParams(mean, latent, noise, fstar))
    return params


def _integration_window(p: RectifiedDensityParams):
    sp = math.sqrt(p.observation_variance)
    return p.mean - 12 * sp, max(p.fstar, p.mean) + 12 * sp


def check_cond_density_normalization(seed: int = 1234) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in _random_params(rng):
        lo, hi = _integration_window(p)
        total, _ = integrate.quad(lambda y: cond_density(p, y), lo, hi, limit=200)
        worst = max(worst, abs(total - 1.0))
    return CheckResult(
        "cond_density integrates to 1", worst < 1e-6, f"max |integral - 1| = {worst:.3e}"
    )


def check_cond_density_convolution() -> CheckResult:
    p = RectifiedDensityParams(mean=0.0, latent_variance=4.0, noise_variance=1.0, fstar=0.5)
    sx = math.sqrt(p.latent_variance)
    sn = math.sqrt(p.noise_variance)
    h = (p.fstar - p.mean) / sx

    def oracle(y: float) -> float:
        val, _ = integrate.quad(
            lambda f: norm.pdf(y - f, 0.0, sn) * norm.pdf(f, p.mean, sx) / std_cdf(h),
            p.mean - 12 * sx,
            p.fstar,
            limit=200,
        )
        return val

    ys = np.linspace(-6.0, 4.0, 20)
    worst = max(abs(cond_density(p, y) - oracle(y)) for y in ys)
    return CheckResult(
        "cond_density matches truncated+noise convolution", worst < 1e-8, f"max diff = {worst:.3e}"
    )


def check_weight_normalization(seed: int = 1234) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in _random_params(rng):
        sp = math.sqrt(p.observation_variance)
        lo, hi = _integration_window(p)
        total, _ = integrate.quad(
            lambda y: norm.pdf(y, p.mean, sp) * weight(p, y), lo, hi, limit=200
        )
        worst = max(worst, abs(total - 1.0))
    return CheckResult(
        "E[weight] under the Gaussian marginal is 1", worst < 1e-6, f"max |E[w] - 1| = {worst:.3e}"
    )


def check_mes_entropy_identity(seed: int = 99) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_identity = 0.0
    worst_quad = 0.0
    for _ in range(20):
        mean = rng.uniform(-2, 2)
        latent = rng.uniform(0.05, 4.0)
        fstar = mean + rng.uniform(-3, 3) * math.sqrt(latent)
        stats = PredictiveStats(mean, latent, latent + 0.1)
        mv = MaxValueSet(np.array([fstar]))
        tg = UpperTruncatedGaussian(mean, math.sqrt(latent), fstar)
        closed = trunc_gauss_entropy(tg)
        worst_identity = max(
            worst_identity,
            abs(mes_value(stats, mv) - (gaussian_entropy(latent) - closed)),
        )
        lo = mean - 14 * math.sqrt(latent)
        quad_entropy, _ = integrate.quad(
            lambda y: -tg.pdf(y) * math.log(tg.pdf(y)) if tg.pdf(y) > 0 else 0.0,
            lo,
            fstar,
            limit=300,
        )
        worst_quad = max(worst_quad, abs(closed - quad_entropy))
    ok = worst_identity < 1e-12 and worst_quad < 1e-7
    return CheckResult(
        "MES equals Gaussian minus truncated entropy",
        ok,
        f"identity diff = {worst_identity:.3e}, entropy vs quadrature = {worst_quad:.3e}",
    )


def check_trunc_pdf_normalization(seed: int = 7) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    hs = [-6.0, 0.0, 6.0] + list(rng.uniform(-4, 4, size=10))
    for h in hs:
        mean = rng.uniform(-1, 1)
        sd = rng.uniform(0.2, 3.0)
        tg = UpperTruncatedGaussian(mean, sd, mean + h * sd)
        total, _ = integrate.quad(lambda y: trunc_gauss_pdf(tg, y), mean - 14 * sd, tg.upper, limit=300)
        worst = max(worst, abs(total - 1.0))
    return CheckResult("truncated density integrates to 1", worst < 1e-8, f"max |1 - Z| = {worst:.3e}")


def check_log_cdf_branches() -> CheckResult:
    zs = np.linspace(-8.0, 8.0, 200)
    worst = max(abs(log_std_cdf(z) - math.log(std_cdf(z))) for z in zs)
    return CheckResult(
        "log CDF consistent with direct log for z >= -8", worst < 1e-12, f"max diff = {worst:.3e}"
    )


def check_rmes_degeneracies() -> CheckResult:
    nu = draw_nu_block(512, 5)
    stats = PredictiveStats(0.3, 1.2, 1.2 + 0.5)
    single = rmes_value(stats, AcqContext(MaxValueSet(np.array([1.0])), nu))
    tiny = rmes_value(
        PredictiveStats(0.3, 1e-12, 1e-12 + 1.0),
        AcqContext(MaxValueSet(np.array([0.5, 1.0, 2.0])), nu),
    )
    ok = single == 0.0 and abs(tiny) < 1e-6
    return CheckResult(
        "RMES degeneracies (single max-value, vanishing latent variance)",
        ok,
        f"single-set value = {single!r}, tiny-variance value = {tiny:.3e}",
    )


def run_checks() -> list[CheckResult]:
    return [
        check_cond_density_normalization(),
        check_cond_density_convolution(),
        check_weight_normalization(),
        check_mes_entropy_identity(),
        check_trunc_pdf_normalization(),
        check_log_cdf_branches(),
        check_rmes_degeneracies(),
    ]
