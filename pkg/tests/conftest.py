"""Shared fixtures and independent oracle helpers.

The oracles here deliberately avoid the package's own code paths: stacked
weighted least squares instead of block elimination, dense zoomed grids
instead of EM, textbook KS statistics.  scipy/mpmath are test-only
dependencies used as reference implementations.
"""

import numpy as np
import pytest

from slrt.model import Dataset, MixtureParams


def make_dataset(seed: int, n: int = 40, q: int = 2, dz: int = 3,
                 lam: float = 0.0, gamma_scale: float = 0.0) -> Dataset:
    """Small arbitrary-but-valid dataset, optionally with a planted split."""
    rng = np.random.default_rng(seed)
    x = np.column_stack((np.ones(n), rng.standard_normal((n, q - 1))))
    d = rng.integers(0, 2, n).astype(np.float64)
    if d.min() == d.max():  # force nondegeneracy
        d[0] = 1.0 - d[0]
    z = np.column_stack((np.ones(n), rng.standard_normal((n, dz - 1))))
    gamma = gamma_scale * rng.standard_normal(dz)
    pi = 1.0 / (1.0 + np.exp(-(z @ gamma)))
    delta = (rng.uniform(size=n) < pi).astype(np.float64)
    alpha = rng.standard_normal(q)
    y = x @ alpha + d * (1.0 + delta * lam) + rng.standard_normal(n)
    return Dataset(y=y, x=x, d=d, z=z)


@pytest.fixture
def dataset():
    return make_dataset(seed=7)


def stacked_wls(ds: Dataset, w: np.ndarray):
    """Independent solution of the regression M step's weighted problem.

    The two-block objective sum w(y - u'c - d l)^2 + (1-w)(y - u'c)^2 is an
    ordinary least squares on 2n sqrt-weighted pseudo-rows; lstsq on that
    stacked design gives (c, l) without any block elimination.
    """
    u = np.column_stack((ds.x, ds.d))
    n = ds.n
    top = np.sqrt(w)[:, None] * np.column_stack((u, ds.d))
    bottom = np.sqrt(1.0 - w)[:, None] * np.column_stack((u, np.zeros(n)))
    design = np.vstack((top, bottom))
    resp = np.concatenate((np.sqrt(w) * ds.y, np.sqrt(1.0 - w) * ds.y))
    coef, *_ = np.linalg.lstsq(design, resp, rcond=None)
    rss = float(np.sum((resp - design @ coef) ** 2))
    return coef[:-2], float(coef[-2]), float(coef[-1]), rss / n


def grid_oracle_best(ds: Dataset, pen: float, resolution: int = 20,
                     zoom_rounds: int = 2, profile_points: int = 11) -> float:
    """Best penalized log-likelihood on a dense grid (q = 1, dz = 1 only).

    Sweeps a resolution^3 lattice over (beta, lam, gamma) and, at each node,
    profiles (alpha, sigma2) with a zoomed inner grid.  Every evaluation is a
    direct density computation, so the returned value is a certified lower
    bound on the true maximum that fit_penalized has to beat.
    """
    assert ds.q == 1 and ds.dz == 1
    y, d = ds.y, ds.d
    sd = float(np.std(y))
    mean = float(np.mean(y))
    betas = np.linspace(-3.0 * sd, 3.0 * sd, resolution)
    lams = np.linspace(0.0, 3.0 * sd, resolution)
    gammas = np.linspace(-3.0, 3.0, resolution)
    if not np.any(gammas == 0.0):
        gammas = np.sort(np.append(gammas, 0.0))

    log_pi = -np.logaddexp(0.0, -gammas)          # log pi(gamma)
    log_1mpi = -np.logaddexp(0.0, gammas)

    best = -np.inf
    for beta in betas:
        r0_base = y - d * beta
        for lam in lams:
            r1_base = r0_base - d * lam
            a_center, a_half = mean, 3.0 * sd
            s_lo, s_hi = np.log(1e-3 * sd**2 + 1e-12), np.log(9.0 * sd**2)
            local_best = -np.inf
            for _ in range(zoom_rounds):
                alphas = np.linspace(a_center - a_half, a_center + a_half,
                                     profile_points)
                sig2s = np.exp(np.linspace(s_lo, s_hi, profile_points))
                # residuals: (n_alpha, n) then kernels over sigma2 grid
                r0 = r0_base[None, :] - alphas[:, None]
                r1 = r1_base[None, :] - alphas[:, None]
                inv = 1.0 / (2.0 * sig2s)
                lognorm = -0.5 * np.log(2.0 * np.pi * sig2s)
                # shapes: (n_alpha, n_sig, n)
                lg0 = lognorm[None, :, None] - r0[:, None, :] ** 2 * inv[None, :, None]
                lg1 = lognorm[None, :, None] - r1[:, None, :] ** 2 * inv[None, :, None]
                # add gamma axis -> (n_alpha, n_sig, n_gamma, n)
                rows = np.logaddexp(
                    lg1[:, :, None, :] + log_pi[None, None, :, None],
                    lg0[:, :, None, :] + log_1mpi[None, None, :, None],
                )
                vals = rows.sum(axis=-1) - pen * np.abs(gammas)[None, None, :]
                k = np.unravel_index(np.argmax(vals), vals.shape)
                local_best = max(local_best, float(vals[k]))
                a_center = float(alphas[k[0]])
                a_half = max(a_half * 2.0 / (profile_points - 1), 1e-6)
                s_mid = np.log(sig2s[k[1]])
                s_span = (s_hi - s_lo) * 2.0 / (profile_points - 1)
                s_lo, s_hi = s_mid - s_span / 2.0, s_mid + s_span / 2.0
            best = max(best, local_best)
    return best


def ks_distance(sample: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov sup distance between a sample and a CDF."""
    x = np.sort(np.asarray(sample, dtype=np.float64))
    m = x.size
    f = np.asarray([cdf(v) for v in x])
    upper = np.max(np.arange(1, m + 1) / m - f)
    lower = np.max(f - np.arange(0, m) / m)
    return float(max(upper, lower))


def params_for(ds: Dataset, alpha=None, beta=0.0, lam=0.0, sigma2=1.0,
               gamma=None) -> MixtureParams:
    alpha = np.zeros(ds.q) if alpha is None else np.asarray(alpha, dtype=float)
    gamma = np.zeros(ds.dz) if gamma is None else np.asarray(gamma, dtype=float)
    return MixtureParams(alpha=alpha, beta=beta, lam=lam, sigma2=sigma2,
                         gamma=gamma)
