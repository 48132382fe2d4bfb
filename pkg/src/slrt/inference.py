"""Shrinkage likelihood ratio test for a treatment-effect subgroup.

The statistic is twice the gap between the unpenalized log-likelihood of the
penalized mixture fit and the no-subgroup Gaussian fit.  Because the extra
effect lam is tested on the boundary of [0, inf), the statistic is
asymptotically a half-half mixture of a point mass at zero and chi-square
with one degree of freedom, so p-values and critical values come from that
mixture rather than the plain chi-square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .em import EmConfig, FitResult, fit_gamma_zero, fit_penalized
from .model import Dataset, NullParams
from .nullmodel import fit_null
from .special import chi2_quantile, chi2_sf

# Penalty rule fitted to the size-calibration surface: intercept plus a
# power-of-n, sqrt-log-dimension ramp.
PEN_INTERCEPT = 6.3383
PEN_SLOPE = 0.0086
PEN_N_EXPONENT = 7.0 / 8.0


@dataclass(frozen=True)
class NullFit:
    """No-subgroup Gaussian MLE and its log-likelihood."""

    params: NullParams
    loglik: float


@dataclass(frozen=True)
class TestOutcome:
    """Everything a test run produces, enough to reproduce the decision.

    slrt is nonnegative: the EM start list ends with the exact null model, so
    the penalized fit never falls below it, and any start that beats it
    strictly also beats it on the unpenalized likelihood.  Replications where
    no start escapes the null give an exact zero, the point mass the p-value
    maps to 0.5.
    """

    slrt: float
    p_value: float
    pen_used: float
    alt_fit: FitResult
    null_fit: NullFit

    def reject_at(self, level: float) -> bool:
        """Decision at a significance level in (0, 0.5)."""
        return self.slrt > half_chisq_critical(level)


def tuning_pen(n: int, d: int, log_base: float = math.e) -> float:
    """Penalty level for n observations and d classification columns.

    pen = 6.3383 + 0.0086 * n**(7/8) * sqrt(log d), natural log by default;
    d counts every column of z including the intercept and must be >= 2 so
    the log term is positive.  log_base switches the logarithm used for the
    dimension term.
    """
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if d < 2:
        raise ValueError(f"d must be >= 2 for the penalty rule, got {d}")
    if log_base <= 1.0:
        raise ValueError(f"log_base must exceed 1, got {log_base}")
    return PEN_INTERCEPT + PEN_SLOPE * n ** PEN_N_EXPONENT * math.sqrt(
        math.log(d) / math.log(log_base)
    )


def half_chisq_pvalue(t: float) -> float:
    """P-value under the 0.5*chi2_0 + 0.5*chi2_1 boundary null.

    P(T > t) = 0.5 * Survival_chi2_1(t) for t > 0 and 0.5 at t <= 0 (the
    point mass at zero absorbs the other half).
    """
    if not math.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    if t <= 0.0:
        return 0.5
    return 0.5 * chi2_sf(t, df=1)


def half_chisq_critical(level: float) -> float:
    """Critical value c with P(T > c) = level under the boundary null.

    Solves 0.5 * Survival_chi2_1(c) = level, i.e. the chi2_1 quantile at
    1 - 2*level.  Levels at or above one half are rejected: the point mass
    at zero makes them unattainable by a positive threshold.
    """
    if not 0.0 < level < 0.5:
        raise ValueError(f"level must be in (0, 0.5), got {level}")
    return chi2_quantile(1.0 - 2.0 * level, df=1)


def compute_slrt(
    ds: Dataset,
    pen: float | None = None,
    cfg: EmConfig | None = None,
    log_base: float = math.e,
) -> TestOutcome:
    """Run the shrinkage test on a dataset.

    pen of None applies the tuning rule at (n, dz).  The statistic compares
    unpenalized log-likelihoods even though the alternative was fitted with
    the penalty; the penalty only steers the estimate, it is not part of the
    evidence.
    """
    if pen is None:
        pen = tuning_pen(ds.n, ds.dz, log_base=log_base)
    cfg = cfg or EmConfig()
    null_params, null_ll = fit_null(ds, cfg.sigma2_floor)
    alt = fit_penalized(ds, pen, cfg)
    slrt = 2.0 * (alt.loglik - null_ll)
    return TestOutcome(
        slrt=slrt,
        p_value=half_chisq_pvalue(slrt),
        pen_used=pen,
        alt_fit=alt,
        null_fit=NullFit(params=null_params, loglik=null_ll),
    )


def compute_benchmark_lrt(ds: Dataset, cfg: EmConfig | None = None) -> TestOutcome:
    """Likelihood ratio test with the mixing weight frozen at one half.

    Same boundary null law as the shrinkage test; the alternative is the
    gamma = 0 mixture, so no penalty is involved (pen_used reported as 0).
    """
    cfg = cfg or EmConfig()
    null_params, null_ll = fit_null(ds, cfg.sigma2_floor)
    alt = fit_gamma_zero(ds, cfg)
    slrt = 2.0 * (alt.loglik - null_ll)
    return TestOutcome(
        slrt=slrt,
        p_value=half_chisq_pvalue(slrt),
        pen_used=0.0,
        alt_fit=alt,
        null_fit=NullFit(params=null_params, loglik=null_ll),
    )
