"""Stochastic-gradient maximization of acquisition functions over box domains.

Acquisitions are optimized with multi-start Adam on reparameterized
Monte-Carlo objectives: one block of shared standard-normal draws (the
``NuBlock``) is held fixed for every restart and step, which makes the
objective a deterministic, differentiable function of the candidate point.
Candidates are re-ranked under a larger block before the final pick.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .gp import Domain, PosteriorModel, predict, predict_gradients

__all__ = [
    "NuBlock",
    "AdamState",
    "OptimConfig",
    "draw_nu_block",
    "adam_step",
    "optimize_acquisition",
    "gradient_of",
    "argmax_posterior_mean",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NuBlock:
    """Shared standard-normal samples realizing y = mu + sigma_plus * nu."""

    samples: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float).ravel()
        if samples.size == 0:
            raise ValueError("NuBlock requires at least one sample")
        object.__setattr__(self, "samples", samples)

    @property
    def size(self) -> int:
        return self.samples.size


def draw_nu_block(count: int, rng) -> NuBlock:
    """Draw ``count`` i.i.d. standard-normal samples.

    ``rng`` may be an integer seed (recorded on the block) or a Generator.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    seed = None
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    return NuBlock(rng.standard_normal(count), seed)


@dataclass(frozen=True)
class AdamState:
    """Bias-corrected Adam moments; works elementwise on batched points."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    step_size: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    rejected: int = 0

    @classmethod
    def fresh(cls, shape, step_size: float = 0.05, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), 0, step_size, beta1, beta2, epsilon)


def adam_step(state: AdamState, x, gradient):
    """One Adam ascent update; returns (new_state, new_x).

    A non-finite gradient rejects the step: x and the moments are returned
    unchanged and the rejection counter is incremented.
    """
    x = np.asarray(x, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != x.shape:
        raise ValueError(f"gradient shape {gradient.shape} != point shape {x.shape}")
    if not np.all(np.isfinite(gradient)):
        logger.warning("adam_step rejected a non-finite gradient")
        return (
            AdamState(
                state.first_moment,
                state.second_moment,
                state.step_count,
                state.step_size,
                state.beta1,
                state.beta2,
                state.epsilon,
                state.rejected + 1,
            ),
            x,
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    x_new = x + state.step_size * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(
        m, v, t, state.step_size, state.beta1, state.beta2, state.epsilon, state.rejected
    )
    return new_state, x_new


@dataclass
class OptimConfig:
    """Budgets for acquisition maximization (step size in unit-box coordinates)."""

    restarts: int = 10
    steps: int = 150
    step_size: float = 0.05
    nu_samples: int = 64
    rerank_nu_samples: int = 10_000
    scan_points: int = 1000
    rerank_top_k: int = 16
    fd_step: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        for name in ("restarts", "steps", "step_size", "nu_samples", "rerank_nu_samples", "scan_points", "rerank_top_k", "fd_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"OptimConfig.{name} must be positive")


def _batched_adam_ascent(value_grad_fn, domain: Domain, starts_unit: np.ndarray, config: OptimConfig):
    """Run config.steps Adam updates on all restarts at once.

    value_grad_fn maps a (k, d) stack of original-coordinate points to a
    (k, d) gradient stack.  Returns every iterate, shape (steps + 1, r, d),
    in original coordinates.
    """
    r, d = starts_unit.shape
    width = domain.width
    trajectory = np.empty((config.steps + 1, r, d))
    u = starts_unit.copy()
    trajectory[0] = domain.from_unit(u)
    state = AdamState.fresh((r, d), step_size=config.step_size)
    for step in range(config.steps):
        grad_x = value_grad_fn(trajectory[step])
        grad_u = grad_x * width  # chain rule through the affine unit-box map
        bad = ~np.all(np.isfinite(grad_u), axis=1)
        if np.any(bad):
            grad_u = np.where(bad[:, None], 0.0, grad_u)
        state, u = adam_step(state, u, grad_u)
        np.clip(u, 0.0, 1.0, out=u)
        trajectory[step + 1] = domain.from_unit(u)
    return trajectory


def optimize_acquisition(acq, domain: Domain, config: OptimConfig, rng: np.random.Generator) -> np.ndarray:
    """Maximize an acquisition over the domain box.

    Multi-start Adam from the best random-scan points, one shared NuBlock for
    all restarts and steps, projection onto the box after every step.  The
    returned point is the candidate with the highest value after re-ranking
    under a larger NuBlock (stochastic acquisitions only; deterministic ones
    are ranked exactly).  Ties resolve to the lowest restart index.
    """
    name = getattr(acq, "name", type(acq).__name__)
    scan = domain.from_unit(rng.uniform(size=(config.scan_points, domain.dim)))
    scan_vals = np.asarray(acq.value(scan))
    if not np.any(np.isfinite(scan_vals)):
        raise RuntimeError(f"acquisition {name!r} returned no finite values on the domain")
    ranked = np.argsort(np.where(np.isfinite(scan_vals), scan_vals, -np.inf))[::-1]
    starts = scan[ranked[: config.restarts]]

    trajectory = _batched_adam_ascent(
        lambda X: np.asarray(acq.gradient(X)), domain, domain.to_unit(starts), config
    )
    stochastic = bool(getattr(acq, "stochastic", False))
    if stochastic:
        # Monte-Carlo evaluations are the budget hog; screen a thinned
        # trajectory (consecutive Adam iterates are nearly collinear).
        keep = np.unique(np.r_[0 : config.steps + 1 : 8, config.steps])
        trajectory = trajectory[keep]
    # Candidate order fixes the tie-break: restart trajectories first (by
    # restart index, then step), then the random scan.
    iterates = trajectory.transpose(1, 0, 2).reshape(-1, domain.dim)
    candidates = np.vstack([iterates, scan])
    values = np.asarray(acq.value(candidates))
    values = np.where(np.isfinite(values), values, -np.inf)

    if not stochastic:
        return candidates[int(np.argmax(values))].copy()

    steps_per = iterates.shape[0] // config.restarts
    per_restart_best = [
        i * steps_per + int(np.argmax(values[i * steps_per : (i + 1) * steps_per]))
        for i in range(config.restarts)
    ]
    top = np.argsort(values)[::-1][: config.rerank_top_k]
    best_scan = iterates.shape[0] + int(np.argmax(values[iterates.shape[0] :]))
    rerank_idx = []
    seen = set()
    for i in [*per_restart_best, int(np.argmax(values)), best_scan, *top.tolist()]:
        if i not in seen:
            seen.add(i)
            rerank_idx.append(i)
    rerank_idx = np.asarray(rerank_idx)
    big_block = draw_nu_block(config.rerank_nu_samples, int(rng.integers(2**63)))
    rerank_vals = np.asarray(acq.value(candidates[rerank_idx], nu_block=big_block))
    rerank_vals = np.where(np.isfinite(rerank_vals), rerank_vals, -np.inf)
    # Restore candidate order among re-ranked points so ties keep the
    # lowest-restart-index rule.
    order = np.argsort(rerank_idx, kind="stable")
    chosen = rerank_idx[order][int(np.argmax(rerank_vals[order]))]
    return candidates[int(chosen)].copy()


def gradient_of(acq, x, nu_block: NuBlock | None = None) -> np.ndarray:
    """Gradient of the acquisition's fixed-nu Monte-Carlo objective at x."""
    x = np.asarray(x, dtype=float)
    grad = np.asarray(acq.gradient(x[None, :], nu_block=nu_block))[0]
    if not np.all(np.isfinite(grad)):
        logger.warning("non-finite acquisition gradient at %s", x)
    return grad


def argmax_posterior_mean(model: PosteriorModel, domain: Domain, config: OptimConfig | None = None) -> np.ndarray:
    """Deterministic multi-start ascent on the posterior mean.

    Candidate starts include the training inputs, so the returned point's
    mean is never below the mean at any observed input.
    """
    config = config or OptimConfig()
    if model.dataset.n == 0:
        return (domain.lower + domain.upper) / 2.0
    rng = np.random.default_rng(config.seed)
    scan = domain.from_unit(rng.uniform(size=(config.scan_points, domain.dim)))
    base = np.vstack([scan, domain.clip(model.dataset.inputs)])
    mu = predict(model, base).mean
    starts = base[np.argsort(mu)[::-1][: config.restarts]]
    trajectory = _batched_adam_ascent(
        lambda X: predict_gradients(model, X)[0], domain, domain.to_unit(starts), config
    )
    candidates = np.vstack([trajectory.reshape(-1, domain.dim), base])
    mu_all = predict(model, candidates).mean
    return candidates[int(np.argmax(mu_all))].copy()
