"""Gaussian-process regression with a squared-exponential ARD kernel.

Exact posterior inference via Cholesky factorization, marginal likelihood
with analytic gradients, and multi-start MLE hyperparameter fitting.  A thin
scikit-learn-compatible estimator (:class:`SEGaussianProcess`) wraps the
functional core so the model composes with the wider ecosystem.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize
from sklearn.base import BaseEstimator, RegressorMixin

from .validation import as_float_array, as_points, check_positive

__all__ = [
    "Domain",
    "Dataset",
    "KernelHyperparams",
    "PosteriorModel",
    "PredictiveStats",
    "CholeskyError",
    "MleConfig",
    "se_kernel",
    "se_kernel_matrix",
    "fit",
    "predict",
    "predict_gradients",
    "log_marginal_likelihood",
    "log_marginal_likelihood_grad",
    "mle_fit",
    "SEGaussianProcess",
]

logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
JITTER_FACTOR = 10.0


class CholeskyError(RuntimeError):
    """Raised when the kernel matrix stays indefinite after jitter escalation."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box of admissible inputs."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = as_float_array(self.lower, "lower").ravel()
        upper = as_float_array(self.upper, "upper").ravel()
        if lower.size == 0 or lower.shape != upper.shape:
            raise ValueError("lower and upper must be equal-length, nonempty vectors")
        if not np.all(lower < upper):
            raise ValueError("domain requires lower[i] < upper[i] for all i")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def clip(self, X) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + rng.uniform(size=(n, self.dim)) * self.width

    def to_unit(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / self.width

    def from_unit(self, U) -> np.ndarray:
        return self.lower + np.asarray(U, dtype=float) * self.width


@dataclass(frozen=True)
class Dataset:
    """Observed input/output pairs."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        inputs = as_float_array(self.inputs, "inputs")
        outputs = as_float_array(self.outputs, "outputs").ravel()
        if inputs.size == 0:
            inputs = inputs.reshape(0, max(1, inputs.shape[-1] if inputs.ndim > 1 else 1))
        elif inputs.ndim == 1:
            inputs = inputs[:, None]
        if inputs.shape[0] != outputs.shape[0]:
            raise ValueError(
                f"inputs and outputs must have equal length, got {inputs.shape[0]} != {outputs.shape[0]}"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.empty((0, dim)), np.empty(0))

    @property
    def n(self) -> int:
        return self.outputs.size

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def append(self, x, y: float) -> "Dataset":
        x = as_points(x, self.dim)
        return Dataset(np.vstack([self.inputs, x]), np.append(self.outputs, float(y)))


@dataclass(frozen=True)
class KernelHyperparams:
    """Squared-exponential ARD kernel parameters (original input/output units)."""

    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(as_float_array(self.lengthscales, "lengthscales")).ravel()
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError(f"lengthscales must be positive, got {ls!r}")
        check_positive(self.signal_variance, "signal_variance")
        if not np.isfinite(self.noise_variance) or self.noise_variance < 0:
            raise ValueError(f"noise_variance must be nonnegative, got {self.noise_variance!r}")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def dim(self) -> int:
        return self.lengthscales.size


@dataclass(frozen=True)
class PosteriorModel:
    """Fitted GP state: data, hyperparameters, Cholesky factor, dual weights."""

    dataset: Dataset
    hyper: KernelHyperparams
    cholesky_factor: np.ndarray
    dual_weights: np.ndarray
    jitter: float

    @property
    def dim(self) -> int:
        return self.hyper.dim


@dataclass(frozen=True)
class PredictiveStats:
    """Per-point posterior statistics: latent mean/variance plus noisy-output variance.

    Fields may be scalars or equally-shaped arrays for batched queries.
    observation_variance is latent_variance + noise_variance by construction.
    """

    mean: np.ndarray
    latent_variance: np.ndarray
    observation_variance: np.ndarray


def se_kernel(x1, x2, hyper: KernelHyperparams) -> float:
    """Squared-exponential covariance between two points."""
    x1 = as_float_array(x1, "x1").ravel()
    x2 = as_float_array(x2, "x2").ravel()
    if x1.shape != x2.shape or x1.size != hyper.dim:
        raise ValueError(
            f"points must both have dimension {hyper.dim}, got {x1.shape} and {x2.shape}"
        )
    z = (x1 - x2) / hyper.lengthscales
    return float(hyper.signal_variance * math.exp(-0.5 * float(z @ z)))


def se_kernel_matrix(A, B, hyper: KernelHyperparams) -> np.ndarray:
    """Cross-covariance matrix between two point stacks, shape (nA, nB)."""
    A = as_points(A, hyper.dim, "A")
    B = as_points(B, hyper.dim, "B")
    As = A / hyper.lengthscales
    Bs = B / hyper.lengthscales
    sq = (
        np.sum(As * As, axis=1)[:, None]
        - 2.0 * As @ Bs.T
        + np.sum(Bs * Bs, axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    return hyper.signal_variance * np.exp(-0.5 * sq)


def _chol_with_jitter(K: np.ndarray, scale: float):
    """Cholesky of K with escalating diagonal jitter; returns (L, applied_jitter)."""
    jitter = 0.0
    level = JITTER_START * scale
    while True:
        try:
            L = linalg.cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
            return L, jitter
        except linalg.LinAlgError:
            if jitter >= JITTER_MAX * scale:
                cond = np.linalg.cond(K)
                raise CholeskyError(
                    f"Cholesky failed after jitter escalation to {jitter:.3e} "
                    f"(condition estimate {cond:.3e})"
                ) from None
            jitter = level
            level *= JITTER_FACTOR


def fit(dataset: Dataset, hyper: KernelHyperparams) -> PosteriorModel:
    """Build the exact posterior; an empty dataset yields the prior."""
    if dataset.n == 0:
        return PosteriorModel(dataset, hyper, np.empty((0, 0)), np.empty(0), 0.0)
    if dataset.dim != hyper.dim:
        raise ValueError(f"dataset dimension {dataset.dim} != kernel dimension {hyper.dim}")
    K = se_kernel_matrix(dataset.inputs, dataset.inputs, hyper)
    K[np.diag_indices_from(K)] += hyper.noise_variance
    L, jitter = _chol_with_jitter(K, hyper.signal_variance)
    alpha = linalg.cho_solve((L, True), dataset.outputs)
    return PosteriorModel(dataset, hyper, L, alpha, jitter)


def predict(model: PosteriorModel, X) -> PredictiveStats:
    """Posterior mean and variances at one point (scalars) or a stack (arrays)."""
    single = np.ndim(X) == 1
    X = as_points(X, model.dim)
    hyper = model.hyper
    if model.dataset.n == 0:
        mean = np.zeros(X.shape[0])
        var = np.full(X.shape[0], hyper.signal_variance)
    else:
        Kx = se_kernel_matrix(X, model.dataset.inputs, hyper)
        mean = Kx @ model.dual_weights
        V = linalg.solve_triangular(model.cholesky_factor, Kx.T, lower=True)
        var = hyper.signal_variance - np.sum(V * V, axis=0)
        neg = var < 0.0
        if np.any(neg):
            logger.debug(
                "clamped %d negative predictive variances (min %.3e)", neg.sum(), var.min()
            )
            var = np.where(neg, 0.0, var)
    obs_var = var + hyper.noise_variance
    if single:
        return PredictiveStats(float(mean[0]), float(var[0]), float(obs_var[0]))
    return PredictiveStats(mean, var, obs_var)


def predict_gradients(model: PosteriorModel, X):
    """Gradients of the posterior mean and latent variance w.r.t. the inputs.

    Returns (dmean, dvar), each of shape (n, d) for X of shape (n, d).
    """
    X = as_points(X, model.dim)
    n = X.shape[0]
    d = model.dim
    if model.dataset.n == 0:
        return np.zeros((n, d)), np.zeros((n, d))
    hyper = model.hyper
    Kx = se_kernel_matrix(X, model.dataset.inputs, hyper)  # (n, m)
    diff = model.dataset.inputs[None, :, :] - X[:, None, :]  # (n, m, d)
    J = Kx[:, :, None] * diff / (hyper.lengthscales**2)  # d k(x, x_i) / d x
    dmean = np.einsum("nmd,m->nd", J, model.dual_weights)
    V = linalg.cho_solve((model.cholesky_factor, True), Kx.T)  # (m, n)
    dvar = -2.0 * np.einsum("nmd,mn->nd", J, V)
    return dmean, dvar


def log_marginal_likelihood(dataset: Dataset, hyper: KernelHyperparams) -> float:
    """Gaussian log evidence of the data under the kernel hyperparameters."""
    if dataset.n == 0:
        raise ValueError("log marginal likelihood requires a nonempty dataset")
    model = fit(dataset, hyper)
    L = model.cholesky_factor
    y = dataset.outputs
    return float(
        -0.5 * y @ model.dual_weights
        - np.sum(np.log(np.diag(L)))
        - 0.5 * dataset.n * math.log(2.0 * math.pi)
    )


def log_marginal_likelihood_grad(dataset: Dataset, hyper: KernelHyperparams):
    """Log marginal likelihood and its gradient w.r.t. the log-hyperparameters.

    Gradient order: log lengthscales (d entries), log signal variance,
    log noise variance.
    """
    model = fit(dataset, hyper)
    L = model.cholesky_factor
    alpha = model.dual_weights
    y = dataset.outputs
    n = dataset.n
    lml = float(
        -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2.0 * math.pi)
    )
    Kinv = linalg.cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv  # d lml / d K = 0.5 * W
    Kse = se_kernel_matrix(dataset.inputs, dataset.inputs, hyper)
    grad = np.empty(hyper.dim + 2)
    for i in range(hyper.dim):
        D2 = (dataset.inputs[:, i][:, None] - dataset.inputs[:, i][None, :]) ** 2
        dK = Kse * D2 / hyper.lengthscales[i] ** 2
        grad[i] = 0.5 * np.sum(W * dK)
    grad[hyper.dim] = 0.5 * np.sum(W * Kse)
    grad[hyper.dim + 1] = 0.5 * hyper.noise_variance * np.trace(W)
    return lml, grad


@dataclass
class MleConfig:
    """Multi-start MLE search configuration.

    fixed_noise pins the noise variance (benchmarks with known noise);
    bounds are relative to the domain width (lengthscales) and output
    variance (signal), so defaults transfer across problem scales.
    """

    n_starts: int = 8
    seed: int = 0
    domain: Domain | None = None
    fixed_noise: float | None = None
    maxiter: int = 80
    lengthscale_bounds: tuple[float, float] = (1e-3, 10.0)
    signal_bounds: tuple[float, float] = (1e-4, 1e2)
    noise_bounds: tuple[float, float] = (1e-10, 1e2)


def _mle_bounds(dataset: Dataset, config: MleConfig):
    if config.domain is not None:
        width = config.domain.width
    else:
        span = dataset.inputs.max(axis=0) - dataset.inputs.min(axis=0)
        width = np.where(span > 0, span, 1.0)
    y_scale = float(np.var(dataset.outputs)) if dataset.n > 1 else 1.0
    y_scale = max(y_scale, 1e-8)
    lo = np.log(np.concatenate([config.lengthscale_bounds[0] * width, [config.signal_bounds[0] * y_scale]]))
    hi = np.log(np.concatenate([config.lengthscale_bounds[1] * width, [config.signal_bounds[1] * y_scale]]))
    if config.fixed_noise is None:
        lo = np.append(lo, math.log(config.noise_bounds[0] * y_scale))
        hi = np.append(hi, math.log(config.noise_bounds[1] * y_scale))
    return lo, hi


def _theta_to_hyper(theta: np.ndarray, dim: int, fixed_noise: float | None) -> KernelHyperparams:
    ls = np.exp(theta[:dim])
    sig = math.exp(theta[dim])
    noise = fixed_noise if fixed_noise is not None else math.exp(theta[dim + 1])
    return KernelHyperparams(ls, sig, noise)


def mle_fit(dataset: Dataset, init: KernelHyperparams, config: MleConfig | None = None) -> KernelHyperparams:
    """Maximize the log marginal likelihood over the hyperparameters.

    Multi-start L-BFGS in log-hyperparameter space with analytic gradients.
    The returned hyperparameters never score below ``init``.
    """
    if dataset.n == 0:
        raise ValueError("mle_fit requires a nonempty dataset")
    config = config or MleConfig()
    dim = init.dim
    fixed = config.fixed_noise
    lo, hi = _mle_bounds(dataset, config)
    n_params = lo.size

    def objective(theta):
        hyper = _theta_to_hyper(theta, dim, fixed)
        try:
            lml, grad = log_marginal_likelihood_grad(dataset, hyper)
        except CholeskyError:
            return 1e25, np.zeros(n_params)
        if not np.isfinite(lml) or not np.all(np.isfinite(grad)):
            return 1e25, np.zeros(n_params)
        g = grad[:dim + 1] if fixed is not None else grad
        return -lml, -g

    theta_init = np.log(np.concatenate([init.lengthscales, [init.signal_variance]]))
    if fixed is None:
        theta_init = np.append(theta_init, math.log(max(init.noise_variance, 1e-12)))
    starts = [np.clip(theta_init, lo, hi)]
    rng = np.random.default_rng(config.seed)
    for _ in range(config.n_starts - 1):
        starts.append(lo + rng.uniform(size=n_params) * (hi - lo))

    best_theta, best_val = starts[0], np.inf
    for theta0 in starts:
        res = optimize.minimize(
            objective,
            theta0,
            jac=True,
            method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": config.maxiter},
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_theta = res.fun, res.x

    fitted = _theta_to_hyper(best_theta, dim, fixed)
    # Ascent guarantee relative to the (unclipped) initial hyperparameters.
    init_cmp = init if fixed is None else replace(init, noise_variance=fixed)
    try:
        if log_marginal_likelihood(dataset, fitted) < log_marginal_likelihood(dataset, init_cmp):
            return init_cmp
    except CholeskyError:
        pass
    return fitted


class SEGaussianProcess(RegressorMixin, BaseEstimator):
    """scikit-learn estimator facade over the functional GP core.

    Parameters
    ----------
    lengthscales : float or array-like
        Initial (or fixed) ARD lengthscales.
    signal_variance : float
        Initial (or fixed) kernel signal variance.
    noise_variance : float
        Observation noise variance; fixed during MLE when ``fix_noise``.
    optimize_hypers : bool
        Refit hyperparameters by multi-start MLE during ``fit``.
    fix_noise : bool
        Keep ``noise_variance`` fixed during MLE.
    n_starts, random_state : MLE search controls.
    """

    def __init__(
        self,
        lengthscales=1.0,
        signal_variance=1.0,
        noise_variance=1e-6,
        optimize_hypers=True,
        fix_noise=False,
        n_starts=8,
        random_state=0,
    ):
        self.lengthscales = lengthscales
        self.signal_variance = signal_variance
        self.noise_variance = noise_variance
        self.optimize_hypers = optimize_hypers
        self.fix_noise = fix_noise
        self.n_starts = n_starts
        self.random_state = random_state

    def _initial_hyper(self, dim: int) -> KernelHyperparams:
        ls = np.broadcast_to(np.atleast_1d(np.asarray(self.lengthscales, dtype=float)), (dim,))
        return KernelHyperparams(ls.copy(), self.signal_variance, self.noise_variance)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        dataset = Dataset(X, y)
        hyper = self._initial_hyper(dataset.dim)
        if self.optimize_hypers and dataset.n > 0:
            config = MleConfig(
                n_starts=self.n_starts,
                seed=self.random_state,
                fixed_noise=self.noise_variance if self.fix_noise else None,
            )
            hyper = mle_fit(dataset, hyper, config)
        self.hyper_ = hyper
        self.model_ = fit(dataset, hyper)
        return self

    def predict(self, X, return_std=False):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        stats = predict(self.model_, X)
        if return_std:
            return stats.mean, np.sqrt(stats.latent_variance)
        return stats.mean

    def predict_stats(self, X) -> PredictiveStats:
        return predict(self.model_, X)

    def log_marginal_likelihood(self) -> float:
        return log_marginal_likelihood(self.model_.dataset, self.hyper_)
