"""Closed-form Gaussian MLE of the no-subgroup model (lam = 0)."""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateDesignError
from .model import LOG_2PI, Dataset, NullParams, stable_sum

RANK_RTOL = 1e-10


def fit_null(ds: Dataset, sigma2_floor: float = 1e-8) -> tuple[NullParams, float]:
    """Least-squares fit of y on [x, d] with the MLE variance divisor n.

    Returns the fitted parameters and the Gaussian log-likelihood at the fit.
    Rank deficiency of [x, d] (relative threshold 1e-10 on singular values)
    raises DegenerateDesignError.  A zero-residual fit lands on sigma2_floor.
    """
    u = np.column_stack((ds.x, ds.d))
    coef, _, rank, _ = np.linalg.lstsq(u, ds.y, rcond=RANK_RTOL)
    if rank < u.shape[1]:
        raise DegenerateDesignError(
            f"design [x, d] has rank {rank} < {u.shape[1]} columns"
        )
    resid = ds.y - u @ coef
    rss = stable_sum(resid * resid)
    n = ds.n
    sigma2 = max(rss / n, sigma2_floor)
    ll = -0.5 * n * (LOG_2PI + math.log(sigma2)) - 0.5 * rss / sigma2
    params = NullParams(alpha=coef[:-1], beta=float(coef[-1]), sigma2=sigma2)
    return params, ll
