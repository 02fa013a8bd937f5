"""Bayesian optimization with rectified max-value entropy search.

Provides an exact squared-exponential GP surrogate, max-value sampling via
random Fourier features, the RMES/MES/EI/UCB acquisition functions with
analytic gradients, a multi-start Adam acquisition optimizer, and a seeded
benchmark harness with a CSV-writing CLI.
"""

from .acquisitions import (
    AcqContext,
    ExpectedImprovement,
    MaxValueEntropy,
    RectifiedDensityParams,
    RectifiedMaxValueEntropy,
    UpperConfidenceBound,
    cond_density,
    ei_value,
    make_acquisition,
    mes_value,
    rmes_value,
    ucb_value,
    weight,
)
from .gp import (
    Dataset,
    Domain,
    KernelHyperparams,
    MleConfig,
    PosteriorModel,
    PredictiveStats,
    SEGaussianProcess,
    fit,
    log_marginal_likelihood,
    mle_fit,
    predict,
    se_kernel,
)
from .harness import (
    BenchmarkConfig,
    ResultTable,
    RunRecord,
    aggregate,
    inference_regret,
    parse_config,
    run_bo_loop,
    simple_regret,
    write_csv,
)
from .objectives import ObjectiveSpec, eval_objective, load_dataset_objective, make_objective, observe
from .optimize import (
    AdamState,
    NuBlock,
    OptimConfig,
    adam_step,
    argmax_posterior_mean,
    draw_nu_block,
    gradient_of,
    optimize_acquisition,
)
from .sampling import (
    MaxValueSet,
    PosteriorFunctionSample,
    draw_posterior_function,
    gumbel_sample_max_values,
    maximize_function_sample,
    sample_max_values,
)
from .stats import (
    UpperTruncatedGaussian,
    gaussian_entropy,
    log_std_cdf,
    log_sum_exp,
    std_cdf,
    std_pdf,
    trunc_gauss_entropy,
    trunc_gauss_pdf,
)

__version__ = "0.1.0"
