"""Two-component logistic-normal mixture model: data container and likelihoods.

The outcome model is

    y_i = x_i' alpha + d_i * (beta + delta_i * lam) + eps_i,   eps_i ~ N(0, sigma2),

where the latent subgroup indicator delta_i is Bernoulli with probability
``logistic(z_i' gamma)``.  Integrating delta out gives a two-component Gaussian
mixture whose mixing weight varies with the classification covariates z.  All
density work happens on the log scale; likelihood sums are accumulated in
extended precision so that EM monotonicity checks are meaningful at 1e-9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

LOG_2PI = math.log(2.0 * math.pi)


def logistic(t):
    """Logistic function exp(t)/(1+exp(t)), overflow-free for any finite t.

    Uses the branch-free identity 0.5*(1+tanh(t/2)); works on scalars and arrays.
    """
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def stable_sum(values) -> float:
    """Sum an array in extended precision (80-bit accumulator where available)."""
    return float(np.sum(values, dtype=np.longdouble))


def _as_float_array(value, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable observation table (y, x, d, z).

    x and z carry explicit intercepts: their first columns must be exactly 1.
    d is the treatment variable and must take at least two distinct values.
    """

    y: np.ndarray
    x: np.ndarray
    d: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = _as_float_array(self.y, "y", 1)
        x = _as_float_array(self.x, "x", 2)
        d = _as_float_array(self.d, "d", 1)
        z = _as_float_array(self.z, "z", 2)
        n = y.shape[0]
        if n < 2:
            raise DataError(f"need at least 2 observations, got {n}")
        for name, arr in (("x", x), ("d", d), ("z", z)):
            if arr.shape[0] != n:
                raise DataError(f"{name} has {arr.shape[0]} rows but y has {n}")
        for name, arr in (("y", y), ("x", x), ("d", d), ("z", z)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains NaN or infinite entries")
        if not np.all(x[:, 0] == 1.0):
            raise DataError("first column of x must be an all-ones intercept")
        if not np.all(z[:, 0] == 1.0):
            raise DataError("first column of z must be an all-ones intercept")
        if np.unique(d).size < 2:
            raise DataError("treatment d is constant; it must take two distinct values")
        for name, arr in (("y", y), ("x", x), ("d", d), ("z", z)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def q(self) -> int:
        return self.x.shape[1]

    @property
    def dz(self) -> int:
        return self.z.shape[1]


def _as_param_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DataError(f"{name} must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class MixtureParams:
    """Full parameter vector of the two-component model.

    alpha: confounder coefficients (length q, intercept first)
    beta:  treatment effect common to everyone
    lam:   extra treatment effect in the latent subgroup (>= 0)
    sigma2: error variance (> 0)
    gamma: classification coefficients (length dz, intercept first)
    """

    alpha: np.ndarray
    beta: float
    lam: float
    sigma2: float
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _as_param_vector(self.alpha, "alpha"))
        object.__setattr__(self, "gamma", _as_param_vector(self.gamma, "gamma"))
        for name in ("beta", "lam", "sigma2"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise DataError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if self.lam < 0.0:
            raise DataError(f"lam must be nonnegative, got {self.lam}")
        if self.sigma2 <= 0.0:
            raise DataError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class NullParams:
    """Parameters of the homogeneous-effect (no subgroup) model."""

    alpha: np.ndarray
    beta: float
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _as_param_vector(self.alpha, "alpha"))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if self.sigma2 <= 0.0:
            raise DataError(f"sigma2 must be positive, got {self.sigma2}")


def _check_dims(ds: Dataset, p: MixtureParams) -> None:
    if p.alpha.shape[0] != ds.q:
        raise DataError(f"alpha has length {p.alpha.shape[0]}, expected q={ds.q}")
    if p.gamma.shape[0] != ds.dz:
        raise DataError(f"gamma has length {p.gamma.shape[0]}, expected dz={ds.dz}")


def _mixture_logdensity_rows(y, xa, d, eta, beta, lam, sigma2):
    """Per-row log mixture density given precomputed x'alpha and z'gamma."""
    r0 = y - xa - d * beta
    r1 = r0 - d * lam
    log_norm = -0.5 * (LOG_2PI + math.log(sigma2))
    inv2s = 0.5 / sigma2
    lg0 = log_norm - r0 * r0 * inv2s
    lg1 = log_norm - r1 * r1 * inv2s
    # log pi and log(1-pi) without ever exponentiating the raw kernels
    lp1 = -np.logaddexp(0.0, -eta)
    lp0 = -np.logaddexp(0.0, eta)
    return np.logaddexp(lp1 + lg1, lp0 + lg0)


def logdensity_rows(ds: Dataset, p: MixtureParams) -> np.ndarray:
    """Vector of log f(y_i | w_i) for every row of the dataset."""
    _check_dims(ds, p)
    xa = ds.x @ p.alpha
    eta = ds.z @ p.gamma if np.any(p.gamma) else np.zeros(ds.n)
    return _mixture_logdensity_rows(ds.y, xa, ds.d, eta, p.beta, p.lam, p.sigma2)


def mixture_logdensity(y: float, x, d: float, z, p: MixtureParams) -> float:
    """Log of the two-component mixture density at a single observation."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape[0] != p.alpha.shape[0]:
        raise DataError(f"x has length {x.shape[0]}, expected {p.alpha.shape[0]}")
    if z.shape[0] != p.gamma.shape[0]:
        raise DataError(f"z has length {z.shape[0]}, expected {p.gamma.shape[0]}")
    out = _mixture_logdensity_rows(
        np.float64(y), float(x @ p.alpha), np.float64(d), float(z @ p.gamma),
        p.beta, p.lam, p.sigma2,
    )
    return float(out)


def loglik(ds: Dataset, p: MixtureParams) -> float:
    """Observed-data log-likelihood: sum of per-row log mixture densities."""
    return stable_sum(logdensity_rows(ds, p))


def penalized_loglik(ds: Dataset, p: MixtureParams, pen: float) -> float:
    """Log-likelihood minus pen * ||gamma||_1 (every coordinate, intercept included)."""
    if pen < 0.0:
        raise ValueError(f"pen must be nonnegative, got {pen}")
    return loglik(ds, p) - pen * float(np.sum(np.abs(p.gamma)))
