"""Shrinkage likelihood ratio test for treatment-effect subgroups.

A two-component Gaussian regression mixture whose mixing probability is a
logistic function of classification covariates; the test asks whether an
enhanced-effect subgroup exists (lam > 0) without resampling, using an
L1-penalized EM fit and a half-chi-square null law.
"""

from ._version import __version__
from .datagen import (
    DgpSpec,
    Setting,
    child_seed,
    gen_dataset,
    gen_sigma_cholesky,
    sample_skewnormal_std,
)
from .dataio import (
    CsvSchema,
    IngestResult,
    ingest_csv,
    parse_config,
    standardize_columns,
    write_dataset_csv,
    write_result_csv,
)
from .em import (
    EmConfig,
    FitResult,
    e_step,
    fit_gamma_zero,
    fit_penalized,
    m_step_logistic,
    m_step_regression,
)
from .errors import (
    DataError,
    DegenerateDesignError,
    FitFailureError,
    SlrtError,
    UsageError,
)
from .experiments import (
    CalibrationResult,
    CellResult,
    ExperimentResult,
    ExperimentSpec,
    PenRule,
    calibrate_formula,
    fit_pen_formula,
    run_power,
    run_size,
    worker_count,
)
from .inference import (
    NullFit,
    TestOutcome,
    compute_benchmark_lrt,
    compute_slrt,
    half_chisq_critical,
    half_chisq_pvalue,
    tuning_pen,
)
from .model import (
    Dataset,
    MixtureParams,
    NullParams,
    logistic,
    loglik,
    mixture_logdensity,
    penalized_loglik,
)
from .nullmodel import fit_null
from .special import chi2_cdf, chi2_quantile, chi2_sf

__all__ = [
    "__version__",
    "CalibrationResult",
    "CellResult",
    "CsvSchema",
    "DataError",
    "Dataset",
    "DegenerateDesignError",
    "DgpSpec",
    "EmConfig",
    "ExperimentResult",
    "ExperimentSpec",
    "FitFailureError",
    "FitResult",
    "IngestResult",
    "MixtureParams",
    "NullFit",
    "NullParams",
    "PenRule",
    "Setting",
    "SlrtError",
    "TestOutcome",
    "UsageError",
    "calibrate_formula",
    "chi2_cdf",
    "chi2_quantile",
    "chi2_sf",
    "child_seed",
    "compute_benchmark_lrt",
    "compute_slrt",
    "e_step",
    "fit_gamma_zero",
    "fit_null",
    "fit_pen_formula",
    "fit_penalized",
    "gen_dataset",
    "gen_sigma_cholesky",
    "half_chisq_critical",
    "half_chisq_pvalue",
    "ingest_csv",
    "logistic",
    "loglik",
    "m_step_logistic",
    "m_step_regression",
    "mixture_logdensity",
    "parse_config",
    "penalized_loglik",
    "run_power",
    "run_size",
    "sample_skewnormal_std",
    "standardize_columns",
    "tuning_pen",
    "worker_count",
    "write_dataset_csv",
    "write_result_csv",
]
