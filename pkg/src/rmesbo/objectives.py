"""Benchmark objective functions, noise model, and ground-truth metadata.

All objectives are maximization problems.  The classic minimization
benchmarks (Branin-Hoo, eggholder, Michalewicz) are negated, and every
analytic objective is shifted to zero mean over a dense grid.  The true
maximum and maximizer are located once per objective by a grid scan with
local refinement; they exist only for regret metrics and are never visible
to the acquisition side.
"""

from __future__ import annotations

import math
import shlex
import subprocess
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .gp import Dataset, Domain, KernelHyperparams, MleConfig, fit, mle_fit, predict

__all__ = [
    "ObjectiveSpec",
    "ExternalObjective",
    "branin",
    "eggholder",
    "michalewicz2",
    "make_objective",
    "eval_objective",
    "observe",
    "load_dataset_objective",
    "parse_grid_file",
]

MEAN_GRID = 256
TRUTH_GRID = 512


def branin(X) -> np.ndarray:
    """Branin-Hoo on [-5, 10] x [0, 15] (minimization form)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x1, x2 = X[:, 0], X[:, 1]
    a, b, c = 1.0, 5.1 / (4 * math.pi**2), 5.0 / math.pi
    r, s, t = 6.0, 10.0, 1.0 / (8 * math.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s


def eggholder(X) -> np.ndarray:
    """Eggholder on [-512, 512]^2 (minimization form)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x1, x2 = X[:, 0], X[:, 1]
    return -(x2 + 47.0) * np.sin(np.sqrt(np.abs(x2 + x1 / 2.0 + 47.0))) - x1 * np.sin(
        np.sqrt(np.abs(x1 - x2 - 47.0))
    )


def michalewicz2(X, m: int = 10) -> np.ndarray:
    """Two-dimensional Michalewicz (steepness m) on [0, pi]^2 (minimization form)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    i = np.arange(1, X.shape[1] + 1)
    return -np.sum(np.sin(X) * np.sin(i * X**2 / math.pi) ** (2 * m), axis=1)


_ANALYTIC = {
    "branin": (branin, Domain(np.array([-5.0, 0.0]), np.array([10.0, 15.0])), True),
    "eggholder": (eggholder, Domain(np.array([-512.0, -512.0]), np.array([512.0, 512.0])), True),
    "michalewicz2": (michalewicz2, Domain(np.array([0.0, 0.0]), np.array([math.pi, math.pi])), True),
}


def _grid_points(domain: Domain, per_axis: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(domain.lower, domain.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class ObjectiveSpec:
    """A maximization objective with cached regret metadata.

    ``raw`` maps a (n, d) stack to raw values; evaluation applies the
    negation flag and the mean shift.  true_max / maximizer are computed
    lazily (grid scan plus local refinement) and cached.
    """

    kind: str
    domain: Domain
    raw: "callable"
    negate: bool = False
    mean_shift: float = 0.0
    _truth: tuple[float, np.ndarray] | None = field(default=None, repr=False)

    def value(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.asarray(self.raw(X), dtype=float)
        if self.negate:
            out = -out
        return out - self.mean_shift

    def _compute_truth(self) -> tuple[float, np.ndarray]:
        grid = _grid_points(self.domain, TRUTH_GRID if self.domain.dim <= 2 else 32)
        vals = self.value(grid)
        x0 = grid[int(np.argmax(vals))]
        res = optimize.minimize(
            lambda x: -float(self.value(x[None, :])[0]),
            x0,
            method="L-BFGS-B",
            bounds=list(zip(self.domain.lower, self.domain.upper)),
        )
        if np.isfinite(res.fun) and -res.fun >= vals.max():
            return float(-res.fun), np.asarray(res.x, dtype=float)
        return float(vals.max()), x0

    @property
    def true_max(self) -> float:
        if self._truth is None:
            self._truth = self._compute_truth()
        return self._truth[0]

    @property
    def maximizer(self) -> np.ndarray:
        if self._truth is None:
            self._truth = self._compute_truth()
        return self._truth[1]

    def set_truth(self, true_max: float, maximizer) -> None:
        """Pin ground truth externally (e.g. for expensive external objectives)."""
        self._truth = (float(true_max), np.asarray(maximizer, dtype=float))


def eval_objective(spec: ObjectiveSpec, x) -> float:
    """Shifted (and, for minimization benchmarks, negated) objective value."""
    x = np.asarray(x, dtype=float)
    if not np.all(spec.domain.contains(np.atleast_2d(x))):
        raise ValueError(f"query {x!r} lies outside the objective domain")
    return float(spec.value(np.atleast_2d(x))[0])


def observe(spec: ObjectiveSpec, x, sigma_n: float, rng: np.random.Generator) -> float:
    """Noisy observation f(x) + sigma_n * eps with standard-normal eps."""
    if sigma_n < 0:
        raise ValueError(f"sigma_n must be nonnegative, got {sigma_n}")
    value = eval_objective(spec, x)
    if sigma_n == 0:
        return value
    return value + sigma_n * float(rng.standard_normal())


def _shift_to_zero_mean(spec: ObjectiveSpec) -> ObjectiveSpec:
    per_axis = MEAN_GRID if spec.domain.dim <= 2 else 16
    grid = _grid_points(spec.domain, per_axis)
    spec.mean_shift = float(np.mean(spec.value(grid)))
    spec._truth = None
    return spec


def _gp_sample_objective(domain: Domain, seed: int, lengthscale, signal_variance: float, feature_count: int = 2048) -> ObjectiveSpec:
    """A fixed approximate GP-prior draw as a deterministic objective."""
    rng = np.random.default_rng(seed)
    ls = np.broadcast_to(np.atleast_1d(np.asarray(lengthscale, dtype=float)), (domain.dim,))
    freqs = (rng.standard_normal((feature_count, domain.dim)) / ls).astype(np.float32)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=feature_count).astype(np.float32)
    weights = rng.standard_normal(feature_count).astype(np.float32)
    amplitude = math.sqrt(2.0 * signal_variance / feature_count)

    def raw(X):
        X32 = np.asarray(np.atleast_2d(X), dtype=np.float32)
        return np.asarray(amplitude * np.cos(X32 @ freqs.T + phases) @ weights, dtype=float)

    return ObjectiveSpec(kind=f"gp_sample(seed={seed})", domain=domain, raw=raw)


class ExternalObjective:
    """Line protocol to a user-supplied black-box process.

    The command is spawned once.  Each query writes one line of d
    space-separated coordinates to its stdin and reads one real from its
    stdout.  Any protocol failure aborts with the captured stderr.
    """

    def __init__(self, command: str):
        self.command = command
        self._proc: subprocess.Popen | None = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                shlex.split(self.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def _fail(self, reason: str):
        diag = ""
        if self._proc is not None:
            self._proc.kill()
            diag = (self._proc.stderr.read() or "").strip()
            self._proc = None
        raise RuntimeError(f"external objective {self.command!r} failed: {reason}; stderr: {diag!r}")

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        proc = self._ensure()
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            try:
                proc.stdin.write(" ".join(repr(float(v)) for v in row) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                self._fail(str(exc))
            if not line:
                self._fail("no response line")
            try:
                out[i] = float(line.strip())
            except ValueError:
                self._fail(f"unparsable response {line!r}")
        return out

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.wait(timeout=5)
            self._proc = None


def parse_grid_file(path) -> tuple[np.ndarray, np.ndarray, Domain]:
    """Read a gridded dataset file.

    First line: ``rows cols x_min x_max y_min y_max``; then rows*cols
    whitespace-separated values in row-major order (rows sweep the first
    axis).  Returns (points (rows*cols, 2), values, domain).
    """
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.readlines()
    header = lines[0].split() if lines else []
    if len(header) != 6:
        raise ValueError(f"{path}: line 1: expected 'rows cols x_min x_max y_min y_max'")
    try:
        rows, cols = int(header[0]), int(header[1])
        x_min, x_max, y_min, y_max = map(float, header[2:])
    except ValueError as exc:
        raise ValueError(f"{path}: line 1: {exc}") from None
    values: list[float] = []
    for lineno, line in enumerate(lines[1:], start=2):
        body = line.split("#", 1)[0].split()
        for tok in body:
            try:
                values.append(float(tok))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: unparsable value {tok!r}") from None
    if len(values) != rows * cols:
        raise ValueError(
            f"{path}: expected {rows * cols} grid values ({rows}x{cols}), got {len(values)}"
        )
    domain = Domain(np.array([x_min, y_min]), np.array([x_max, y_max]))
    xs = np.linspace(x_min, x_max, rows)
    ys = np.linspace(y_min, y_max, cols)
    mesh = np.meshgrid(xs, ys, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return points, np.asarray(values), domain


def load_dataset_objective(path, seed: int = 0) -> ObjectiveSpec:
    """Fit a GP to a gridded dataset and use its posterior mean as the objective."""
    points, values, domain = parse_grid_file(path)
    centered = values - values.mean()
    dataset = Dataset(points, centered)
    init = KernelHyperparams(domain.width / 4.0, max(float(np.var(centered)), 1e-6), 1e-4)
    hyper = mle_fit(dataset, init, MleConfig(domain=domain, seed=seed))
    model = fit(dataset, hyper)

    def raw(X):
        return predict(model, np.atleast_2d(X)).mean

    spec = ObjectiveSpec(kind=f"dataset({path})", domain=domain, raw=raw)
    return _shift_to_zero_mean(spec)


def make_objective(name: str, domain: Domain | None = None, **params) -> ObjectiveSpec:
    """Build an objective by kind.

    Kinds: branin | eggholder | michalewicz2 | gp_sample (seed, lengthscale,
    signal_variance) | dataset (path) | external (command).
    """
    key = name.lower()
    if key in _ANALYTIC:
        fn, default_domain, negate = _ANALYTIC[key]
        spec = ObjectiveSpec(kind=key, domain=domain or default_domain, raw=fn, negate=negate)
        return _shift_to_zero_mean(spec)
    if key == "gp_sample":
        dom = domain or Domain(np.zeros(2), np.ones(2))
        spec = _gp_sample_objective(
            dom,
            seed=int(params.get("seed", 0)),
            lengthscale=params.get("lengthscale", 0.33),
            signal_variance=float(params.get("signal_variance", 1.0)),
        )
        return _shift_to_zero_mean(spec)
    if key == "dataset":
        return load_dataset_objective(params["path"], seed=int(params.get("seed", 0)))
    if key == "external":
        if domain is None:
            raise ValueError("external objectives require an explicit domain")
        spec = ObjectiveSpec(kind="external", domain=domain, raw=ExternalObjective(params["command"]))
        # No automatic mean shift: probing a user black box on a dense grid
        # is not acceptable by default.
        spec.mean_shift = float(params.get("mean_shift", 0.0))
        return spec
    raise ValueError(f"unknown objective {name!r}")
