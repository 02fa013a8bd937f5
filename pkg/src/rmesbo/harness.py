"""Benchmark orchestration: the BO loop, regret metrics, and result tables.

A benchmark run is fully determined by its config and master seed: every
random draw flows from per-(acquisition, repetition) generators derived via
``SeedSequence``, so repeated runs produce byte-identical CSV output.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .acquisitions import AcqContext, make_acquisition
from .gp import Dataset, Domain, KernelHyperparams, MleConfig, PosteriorModel, fit, mle_fit
from .objectives import ObjectiveSpec, eval_objective, make_objective, observe
from .optimize import OptimConfig, argmax_posterior_mean, draw_nu_block, optimize_acquisition
from .sampling import sample_max_values

__all__ = [
    "BenchmarkConfig",
    "RunRecord",
    "ResultTable",
    "AcquisitionTable",
    "run_bo_loop",
    "simple_regret",
    "inference_regret",
    "aggregate",
    "write_csv",
    "parse_config",
]

logger = logging.getLogger(__name__)

ACQUISITION_NAMES = ("rmes", "mes", "ei", "ucb")
REGRET_CLIP = 1e-12
HISTOGRAM_BINS = 20


@dataclass
class BenchmarkConfig:
    """Everything needed to reproduce one benchmark run."""

    objective: ObjectiveSpec
    acquisitions: tuple[str, ...] = ("rmes",)
    sigma_n: float = 0.01
    iterations: int = 50
    repetitions: int = 15
    init_points: int = 2
    max_value_count: int = 5
    nu_samples: int = 64
    rerank_nu_samples: int = 10_000
    seed: int = 0
    output: str | None = None
    hyper_policy: str = "mle"  # 'mle' refits every iteration, 'mle_once' only at the first
    ucb_beta: float = 3.0
    feature_count: int = 1024
    record_walltime: bool = False
    optim: OptimConfig = field(default_factory=OptimConfig)

    def __post_init__(self):
        if self.iterations < 0 or self.repetitions < 1:
            raise ValueError("iterations must be >= 0 and repetitions >= 1")
        if self.sigma_n < 0:
            raise ValueError("sigma_n must be nonnegative")
        for name in self.acquisitions:
            if name not in ACQUISITION_NAMES:
                raise ValueError(f"unknown acquisition {name!r}")
        if self.hyper_policy not in ("mle", "mle_once"):
            raise ValueError(f"unknown hyperparameter policy {self.hyper_policy!r}")


@dataclass(frozen=True)
class RunRecord:
    """One recorded query (initial design rows carry iteration 0)."""

    acquisition: str
    repetition: int
    iteration: int
    x: np.ndarray
    y: float
    simple_regret: float
    inference_regret: float
    distance_to_maximizer: float
    wall_time_ms: float = 0.0


def simple_regret(spec: ObjectiveSpec, dataset: Dataset) -> float:
    """True-max gap of the best queried input, measured on noiseless values."""
    if dataset.n == 0:
        raise ValueError("simple_regret requires at least one queried input")
    best = float(np.max(spec.value(dataset.inputs)))
    return spec.true_max - best


def inference_regret(
    spec: ObjectiveSpec,
    model: PosteriorModel,
    domain: Domain,
    optim: OptimConfig | None = None,
) -> float:
    """True-max gap of the posterior-mean maximizer."""
    x_hat = argmax_posterior_mean(model, domain, optim)
    return spec.true_max - eval_objective(spec, x_hat)


def _initial_hyper(domain: Domain, outputs: np.ndarray, sigma_n: float) -> KernelHyperparams:
    signal = float(np.var(outputs)) if outputs.size > 1 else 1.0
    return KernelHyperparams(domain.width / 4.0, max(signal, 1e-6), max(sigma_n**2, 1e-12))


def _run_single(
    config: BenchmarkConfig, acquisition: str, repetition: int, acq_index: int
) -> list[RunRecord]:
    spec = config.objective
    domain = spec.domain
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(config.seed, acq_index, repetition))
    )
    fstar = spec.true_max
    x_star = spec.maximizer
    mle_config = MleConfig(domain=domain, fixed_noise=config.sigma_n**2, seed=config.seed)
    optim = replace(config.optim, nu_samples=config.nu_samples, rerank_nu_samples=config.rerank_nu_samples)

    records: list[RunRecord] = []
    t0 = time.perf_counter()

    X0 = domain.sample(rng, config.init_points)
    y0 = np.array([observe(spec, x, config.sigma_n, rng) for x in X0])
    dataset = Dataset(X0, y0)
    best_true = float(np.max(spec.value(X0)))

    hyper = mle_fit(dataset, _initial_hyper(domain, y0, config.sigma_n), mle_config)
    model = fit(dataset, hyper)
    ir = fstar - eval_objective(spec, argmax_posterior_mean(model, domain, optim))
    elapsed = (time.perf_counter() - t0) * 1e3 if config.record_walltime else 0.0
    for i, (x, y) in enumerate(zip(X0, y0)):
        sr = fstar - float(np.max(spec.value(X0[: i + 1])))
        records.append(
            RunRecord(
                acquisition,
                repetition,
                0,
                x.copy(),
                float(y),
                sr,
                ir,
                float(np.linalg.norm(x - x_star)),
                elapsed / config.init_points,
            )
        )

    for iteration in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        if config.hyper_policy == "mle" or iteration == 1:
            hyper = mle_fit(dataset, hyper, mle_config)
        model = fit(dataset, hyper)

        ctx_kwargs = {"incumbent_best": float(np.max(dataset.outputs)), "ucb_beta": config.ucb_beta}
        if acquisition in ("rmes", "mes"):
            ctx_kwargs["max_values"] = sample_max_values(
                model,
                domain,
                config.max_value_count,
                rng,
                feature_count=config.feature_count,
            )
        if acquisition == "rmes":
            ctx_kwargs["nu_block"] = draw_nu_block(config.nu_samples, int(rng.integers(2**63)))
        ctx = AcqContext(**ctx_kwargs)
        acq = make_acquisition(acquisition, model, ctx)

        x_next = optimize_acquisition(acq, domain, optim, rng)
        y_next = observe(spec, x_next, config.sigma_n, rng)
        dataset = dataset.append(x_next, y_next)
        best_true = max(best_true, eval_objective(spec, x_next))

        model_post = fit(dataset, hyper)
        x_hat = argmax_posterior_mean(model_post, domain, optim)
        elapsed = (time.perf_counter() - t0) * 1e3 if config.record_walltime else 0.0
        records.append(
            RunRecord(
                acquisition,
                repetition,
                iteration,
                np.asarray(x_next, dtype=float),
                float(y_next),
                fstar - best_true,
                fstar - eval_objective(spec, x_hat),
                float(np.linalg.norm(x_next - x_star)),
                elapsed,
            )
        )
    return records


def run_bo_loop(config: BenchmarkConfig) -> list[RunRecord]:
    """Execute every (acquisition, repetition) cell of the benchmark.

    A failed repetition is recorded as a NaN row and does not stop the rest.
    """
    records: list[RunRecord] = []
    dim = config.objective.domain.dim
    for acq_index, acquisition in enumerate(config.acquisitions):
        for repetition in range(config.repetitions):
            try:
                records.extend(_run_single(config, acquisition, repetition, acq_index))
            except Exception:  # noqa: BLE001 - isolate repetitions from each other
                logger.exception(
                    "repetition %d of %s aborted", repetition, acquisition
                )
                records.append(
                    RunRecord(
                        acquisition,
                        repetition,
                        -1,
                        np.full(dim, np.nan),
                        np.nan,
                        np.nan,
                        np.nan,
                        np.nan,
                    )
                )
    return records


@dataclass(frozen=True)
class AcquisitionTable:
    """Per-iteration means across repetitions for one acquisition."""

    iterations: np.ndarray
    mean_simple_regret: np.ndarray
    log10_simple_regret: np.ndarray
    mean_inference_regret: np.ndarray
    log10_inference_regret: np.ndarray
    distance_counts: np.ndarray
    distance_bin_edges: np.ndarray
    row_count: int


@dataclass(frozen=True)
class ResultTable:
    per_acquisition: dict[str, AcquisitionTable]


def aggregate(records: list[RunRecord]) -> ResultTable:
    """Per-iteration mean regrets (then log10, clipped at 1e-12) and the
    distance-to-maximizer histograms, keyed by acquisition."""
    if not records:
        raise ValueError("aggregate requires at least one record")
    by_acq: dict[str, list[RunRecord]] = {}
    for rec in records:
        by_acq.setdefault(rec.acquisition, []).append(rec)
    all_dist = np.array([r.distance_to_maximizer for r in records if r.iteration >= 1])
    hist_hi = float(np.nanmax(all_dist)) if all_dist.size else 1.0
    edges = np.linspace(0.0, max(hist_hi, 1e-12), HISTOGRAM_BINS + 1)

    tables = {}
    for name, recs in by_acq.items():
        bo_rows = [r for r in recs if r.iteration >= 1]
        iterations = np.array(sorted({r.iteration for r in bo_rows}), dtype=int)
        mean_sr = np.empty(iterations.size)
        mean_ir = np.empty(iterations.size)
        for j, it in enumerate(iterations):
            rows = [r for r in bo_rows if r.iteration == it]
            mean_sr[j] = float(np.mean([r.simple_regret for r in rows]))
            mean_ir[j] = float(np.mean([r.inference_regret for r in rows]))
        dist = np.array([r.distance_to_maximizer for r in bo_rows])
        counts, _ = np.histogram(dist, bins=edges)
        tables[name] = AcquisitionTable(
            iterations=iterations,
            mean_simple_regret=mean_sr,
            log10_simple_regret=np.log10(np.maximum(mean_sr, REGRET_CLIP)),
            mean_inference_regret=mean_ir,
            log10_inference_regret=np.log10(np.maximum(mean_ir, REGRET_CLIP)),
            distance_counts=counts,
            distance_bin_edges=edges,
            row_count=len(bo_rows),
        )
    return ResultTable(tables)


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_csv(records: list[RunRecord], path) -> None:
    """Write records in the canonical column order with 17-significant-digit
    decimals; the byte stream is a pure function of the records."""
    if not records:
        raise ValueError("write_csv requires at least one record")
    dim = records[0].x.size
    header = (
        ["acquisition", "repetition", "iteration"]
        + [f"x_{i + 1}" for i in range(dim)]
        + ["y", "simple_regret", "inference_regret", "distance_to_maximizer", "wall_time_ms"]
    )
    lines = [",".join(header)]
    for rec in records:
        row = [rec.acquisition, str(rec.repetition), str(rec.iteration)]
        row += [_fmt(v) for v in rec.x]
        row += [
            _fmt(rec.y),
            _fmt(rec.simple_regret),
            _fmt(rec.inference_regret),
            _fmt(rec.distance_to_maximizer),
            _fmt(rec.wall_time_ms),
        ]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def _parse_domain(text: str) -> Domain:
    lows, highs = [], []
    for part in text.split(","):
        lo, _, hi = part.strip().partition(":")
        lows.append(float(lo))
        highs.append(float(hi))
    return Domain(np.array(lows), np.array(highs))


def _parse_objective(text: str, domain: Domain | None) -> ObjectiveSpec:
    name, _, rest = text.partition(":")
    name = name.strip().lower()
    rest = rest.strip()
    params: dict = {}
    if name == "dataset":
        params["path"] = rest
    elif name == "external":
        params["command"] = rest
    elif rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            params[key.strip()] = value.strip()
    return make_objective(name, domain=domain, **params)


def parse_config(path) -> BenchmarkConfig:
    """Parse the flat key = value benchmark config format."""
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            key, sep, value = body.partition("=")
            if not sep:
                raise ValueError(f"{path}: line {lineno}: expected 'key = value'")
            raw[key.strip().lower()] = value.strip()
    if "objective" not in raw:
        raise ValueError(f"{path}: missing required key 'objective'")

    domain = _parse_domain(raw["domain"]) if "domain" in raw else None
    objective = _parse_objective(raw["objective"], domain)
    if "true_max" in raw and "maximizer" in raw:
        objective.set_truth(
            float(raw["true_max"]),
            np.array([float(v) for v in raw["maximizer"].split(",")]),
        )

    kwargs: dict = {"objective": objective}
    if "acquisitions" in raw:
        kwargs["acquisitions"] = tuple(a.strip().lower() for a in raw["acquisitions"].split(","))
    for key, cast in (
        ("sigma_n", float),
        ("iterations", int),
        ("repetitions", int),
        ("init_points", int),
        ("max_value_count", int),
        ("nu_samples", int),
        ("rerank_nu_samples", int),
        ("seed", int),
        ("ucb_beta", float),
        ("feature_count", int),
    ):
        if key in raw:
            kwargs[key] = cast(raw[key])
    if "hyper_policy" in raw:
        kwargs["hyper_policy"] = raw["hyper_policy"]
    if "record_walltime" in raw:
        kwargs["record_walltime"] = raw["record_walltime"].lower() in ("1", "true", "yes")
    if "output" in raw:
        kwargs["output"] = raw["output"]
    optim_kwargs = {}
    for key, cast in (("restarts", int), ("steps", int), ("scan_points", int)):
        if key in raw:
            optim_kwargs[key] = cast(raw[key])
    if optim_kwargs:
        kwargs["optim"] = OptimConfig(**optim_kwargs)
    return BenchmarkConfig(**kwargs)
