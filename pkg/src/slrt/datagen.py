"""Seeded data generators for the simulation studies.

Four null designs for the classification covariates (independent normal,
correlated normal via a random correlation matrix, Rademacher, standardized
skew normal) share one outcome model: Y ~ N(1 + 2x + D, 1) under the null and
Y ~ N(1 + 2x + (1 + delta * lambda_true) D, 1) under the alternative, with
delta ~ Bernoulli(logistic(z'gamma_true)).

All randomness flows through counter-based Philox streams keyed by
(seed, purpose), so any dataset is bitwise reproducible from its spec alone
and replications can be generated in parallel in any order.  The covariate,
treatment, and noise streams do not depend on d: datasets at different z
dimensions share their (x, D, y | null) draws, which pairs the benchmark
statistic across d.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import Dataset, logistic

ALPHA_TRUE = (1.0, 2.0)
BETA_TRUE = 1.0
SIGMA2_TRUE = 1.0

# Substream purposes under one dataset seed.
_STREAM_X, _STREAM_D, _STREAM_EPS, _STREAM_Z, _STREAM_DELTA, _STREAM_SIGMA = range(6)

# Shape parameter 4 of the skew normal, as delta = shape / sqrt(1 + shape^2).
_SKEW_DELTA = 4.0 / math.sqrt(17.0)
_SKEW_MEAN = _SKEW_DELTA * math.sqrt(2.0 / math.pi)
_SKEW_SD = math.sqrt(1.0 - 2.0 * _SKEW_DELTA**2 / math.pi)


class Setting(enum.Enum):
    """Null designs for the non-intercept columns of z."""

    I = "I"
    II = "II"
    III = "III"
    IV = "IV"


def substream(seed: int, purpose: int) -> np.random.Generator:
    """Philox generator for one purpose under one seed."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(purpose,)))
    )


def child_seed(master: int, *key: int) -> int:
    """64-bit seed for a keyed child stream (replication, phase, cell...)."""
    ss = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class DgpSpec:
    """One simulated dataset, fully determined by these fields.

    d counts every column of z including the intercept, so z has d - 1
    random columns.  gamma_true of None means all ones (length d) when the
    alternative flag is set; it is ignored under the null.
    """

    setting: Setting
    n: int
    d: int
    seed: int
    alternative: bool = False
    lambda_true: float = 1.0
    gamma_true: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if self.setting is Setting.II and self.d < 3:
            raise ValueError("setting II needs d >= 3 to draw a correlation matrix")
        if self.lambda_true < 0.0:
            raise ValueError(f"lambda_true must be >= 0, got {self.lambda_true}")
        if self.gamma_true is not None and len(self.gamma_true) != self.d:
            raise ValueError(
                f"gamma_true must have length d={self.d}, got {len(self.gamma_true)}"
            )

    def resolved_gamma(self) -> np.ndarray:
        if self.gamma_true is None:
            return np.ones(self.d)
        return np.asarray(self.gamma_true, dtype=np.float64)


def gen_sigma_cholesky(d: int, seed: int) -> np.ndarray:
    """Random (d-1)x(d-1) correlation matrix built from a Cholesky factor.

    L is lower triangular with diagonal ~ U(0.5, 1.5) and strictly-lower
    entries ~ U(-1, 1); LL' is rescaled to unit diagonal.  Strictly positive
    diagonal makes LL' positive definite, and the rescale keeps it so.
    """
    if d < 3:
        raise ValueError(f"d must be >= 3 for a nontrivial correlation, got {d}")
    m = d - 1
    rng = substream(seed, _STREAM_SIGMA)
    lower = np.tril(rng.uniform(-1.0, 1.0, (m, m)), k=-1)
    np.fill_diagonal(lower, rng.uniform(0.5, 1.5, m))
    sigma = lower @ lower.T
    scale = np.sqrt(np.diag(sigma))
    sigma = sigma / np.outer(scale, scale)
    sigma = 0.5 * (sigma + sigma.T)
    np.fill_diagonal(sigma, 1.0)
    return sigma


def sample_skewnormal_std(rng: np.random.Generator, size: int | None = None):
    """Standardized skew-normal draw(s) with shape parameter 4.

    Uses the two-normal representation delta|Z0| + sqrt(1-delta^2) Z1 with
    delta = 4/sqrt(17), then centers and scales to mean 0, variance 1.
    Returns a float when size is None, else an array of that shape.
    """
    scalar = size is None
    m = 1 if scalar else size
    z0 = rng.standard_normal(m)
    z1 = rng.standard_normal(m)
    raw = _SKEW_DELTA * np.abs(z0) + math.sqrt(1.0 - _SKEW_DELTA**2) * z1
    out = (raw - _SKEW_MEAN) / _SKEW_SD
    return float(out[0]) if scalar else out


def _gen_z_body(spec: DgpSpec) -> np.ndarray:
    """The d-1 random columns of z, per the spec's setting."""
    m = spec.d - 1
    rng = substream(spec.seed, _STREAM_Z)
    if spec.setting is Setting.I:
        return rng.standard_normal((spec.n, m))
    if spec.setting is Setting.II:
        sigma = gen_sigma_cholesky(spec.d, spec.seed)
        chol = np.linalg.cholesky(sigma)
        return rng.standard_normal((spec.n, m)) @ chol.T
    if spec.setting is Setting.III:
        return rng.integers(0, 2, (spec.n, m)).astype(np.float64) * 2.0 - 1.0
    return sample_skewnormal_std(rng, size=spec.n * m).reshape(spec.n, m)


def gen_dataset(spec: DgpSpec) -> Dataset:
    """Simulate one dataset from the spec.

    x is [1, N(0,1)], D is fair Bernoulli in {0.0, 1.0}, z is [1, body] with
    the body drawn per the setting, and y follows the null or alternative
    outcome model.  Each ingredient has its own substream of spec.seed.
    """
    n = spec.n
    x_cov = substream(spec.seed, _STREAM_X).standard_normal(n)
    d_treat = substream(spec.seed, _STREAM_D).integers(0, 2, n).astype(np.float64)
    eps = substream(spec.seed, _STREAM_EPS).standard_normal(n)
    z = np.column_stack((np.ones(n), _gen_z_body(spec)))

    coef = BETA_TRUE
    if spec.alternative:
        pi = logistic(z @ spec.resolved_gamma())
        u = substream(spec.seed, _STREAM_DELTA).uniform(0.0, 1.0, n)
        delta = (u < pi).astype(np.float64)
        coef = BETA_TRUE + delta * spec.lambda_true
    y = ALPHA_TRUE[0] + ALPHA_TRUE[1] * x_cov + coef * d_treat + eps

    x = np.column_stack((np.ones(n), x_cov))
    return Dataset(y=y, x=x, d=d_treat, z=z)
