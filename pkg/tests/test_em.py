import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid_oracle_best, make_dataset, params_for, stacked_wls
from slrt.em import (
    EmConfig,
    e_step,
    fit_gamma_zero,
    fit_penalized,
    m_step_logistic,
    m_step_regression,
)
from slrt.errors import DegenerateDesignError
from slrt.model import Dataset, MixtureParams, logistic, penalized_loglik
from slrt.nullmodel import fit_null

# make_dataset(seed=20, n=200) draws a null dataset whose benchmark fit stays
# in the null basin (statistic exactly at the point mass); frozen after a
# seed scan so the pen -> infinity comparison against the null MLE is sharp
NULL_BASIN_SEED = 20


class TestEStep:
    def test_symmetric_prior_equal_components(self, dataset):
        p = params_for(dataset, lam=0.0)
        w = e_step(dataset, p)
        assert np.all(w == 0.5)

    def test_prior_saturation(self, dataset):
        # z'gamma ~ +50 with equal likelihoods drives w to 1
        p = params_for(dataset, lam=0.0, gamma=[50.0, 0.0, 0.0])
        w = e_step(dataset, p)
        assert np.all(np.abs(w - 1.0) <= 1e-12)

    def test_hand_posterior(self):
        # row: z'g = 0, r1 = 0, r0 = 2, sigma2 = 1
        # w = phi(0) / (phi(0) + phi(2)) = logistic(2)
        ds = Dataset(
            y=np.array([2.0, 0.0]),
            x=np.ones((2, 1)),
            d=np.array([1.0, 0.0]),
            z=np.ones((2, 1)),
        )
        p = MixtureParams(np.array([0.0]), 0.0, 2.0, 1.0, np.array([0.0]))
        w = e_step(ds, p)
        assert w[0] == pytest.approx(logistic(2.0), abs=1e-12)
        assert w[0] == pytest.approx(0.8807970779778823, abs=1e-12)

    @given(st.integers(0, 1000), st.floats(0.0, 4.0), st.floats(0.1, 4.0))
    @settings(max_examples=50)
    def test_in_unit_interval(self, seed, lam, sigma2):
        ds = make_dataset(seed=seed)
        p = params_for(ds, beta=0.3, lam=lam, sigma2=sigma2,
                       gamma=[0.5, -1.0, 2.0])
        w = e_step(ds, p)
        assert w.shape == (ds.n,)
        assert np.all((w >= 0.0) & (w <= 1.0))


class TestMStepRegression:
    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_matches_stacked_wls(self, seed):
        ds = make_dataset(seed=seed, n=30)
        rng = np.random.default_rng(seed + 1)
        w = rng.uniform(0.02, 0.98, ds.n)
        alpha, beta, lam, sigma2 = m_step_regression(ds, w, u_lambda=1e6,
                                                     sigma2_floor=1e-12)
        o_alpha, o_beta, o_lam, o_sigma2 = stacked_wls(ds, w)
        if o_lam >= 0.0:  # constraint inactive: exact agreement expected
            assert alpha == pytest.approx(o_alpha, rel=1e-8, abs=1e-9)
            assert beta == pytest.approx(o_beta, rel=1e-8, abs=1e-9)
            assert lam == pytest.approx(o_lam, rel=1e-8, abs=1e-9)
            assert sigma2 == pytest.approx(o_sigma2, rel=1e-8)

    def test_all_weights_zero_is_ols(self, dataset):
        w = np.zeros(dataset.n)
        alpha, beta, lam, sigma2 = m_step_regression(dataset, w, u_lambda=10.0,
                                                     sigma2_floor=1e-8)
        assert lam == 0.0
        u = np.column_stack((dataset.x, dataset.d))
        coef, *_ = np.linalg.lstsq(u, dataset.y, rcond=None)
        assert alpha == pytest.approx(coef[:-1], abs=1e-9)
        assert beta == pytest.approx(coef[-1], abs=1e-9)

    def test_noiseless_data_reaches_zero_objective(self):
        rng = np.random.default_rng(8)
        n = 30
        xval = rng.standard_normal(n)
        d = rng.integers(0, 2, n).astype(float)
        y = 1.0 + 2.0 * xval + d
        ds = Dataset(y=y, x=np.column_stack((np.ones(n), xval)), d=d,
                     z=np.ones((n, 1)))
        w = np.full(n, 0.5)
        alpha, beta, lam, sigma2 = m_step_regression(ds, w, u_lambda=10.0,
                                                     sigma2_floor=1e-8)
        assert alpha == pytest.approx([1.0, 2.0], abs=1e-9)
        assert beta + lam * 0.5 == pytest.approx(1.0, abs=1e-6)
        assert sigma2 == 1e-8  # rss = 0 hits the floor
        r0 = y - ds.x @ alpha - d * beta
        r1 = r0 - d * lam
        objective = float(np.sum(w * r1**2 + (1 - w) * r0**2))
        assert objective == pytest.approx(0.0, abs=1e-16)

    def test_toy_matches_zoomed_grid(self):
        # q = 1 toy: parameters (alpha, beta, lam) found by direct search
        y = np.array([0.3, 1.9, -0.4, 2.6])
        d = np.array([0.0, 1.0, 0.0, 1.0])
        ds = Dataset(y=y, x=np.ones((4, 1)), d=d, z=np.ones((4, 1)))
        w = np.array([0.2, 0.7, 0.5, 0.9])
        alpha, beta, lam, _ = m_step_regression(ds, w, u_lambda=50.0,
                                                sigma2_floor=1e-8)

        def objective(a, b, l):
            r0 = y - a - d * b
            r1 = r0 - d * l
            return np.sum(w * r1**2 + (1 - w) * r0**2)

        center = np.array([alpha[0], beta, lam])
        span = np.array([2.0, 2.0, 2.0])
        best = (np.inf, None)
        for _ in range(6):
            grids = [np.linspace(c - s, c + s, 21) for c, s in zip(center, span)]
            vals = np.array([
                [a, b, l, objective(a, b, max(l, 0.0))]
                for a in grids[0] for b in grids[1] for l in grids[2]
            ])
            k = np.argmin(vals[:, 3])
            best = (vals[k, 3], vals[k, :3])
            center = vals[k, :3]
            span = span * 0.2
        assert objective(alpha[0], beta, lam) <= best[0] + 1e-10
        assert np.array([alpha[0], beta, lam]) == pytest.approx(
            np.where([True, True, best[1][2] > 0], best[1],
                     [best[1][0], best[1][1], 0.0]),
            abs=1e-6,
        )

    def test_lambda_clipped_at_zero_refits_ols(self):
        # weights concentrated where the interaction hurts: unconstrained
        # lam is negative, so the refit at lam = 0 is plain OLS
        y = np.array([0.0, -2.0, 0.1, -1.9, 0.05, -2.05])
        d = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
        ds = Dataset(y=y, x=np.ones((6, 1)), d=d, z=np.ones((6, 1)))
        w = np.array([0.1, 0.95, 0.1, 0.9, 0.1, 0.92])
        _, _, o_lam, _ = stacked_wls(ds, w)
        assert o_lam < 0.0  # fixture sanity: constraint is active
        alpha, beta, lam, _ = m_step_regression(ds, w, u_lambda=10.0,
                                                sigma2_floor=1e-8)
        assert lam == 0.0
        u = np.column_stack((ds.x, d))
        coef, *_ = np.linalg.lstsq(u, y, rcond=None)
        assert [*alpha, beta] == pytest.approx(list(coef), abs=1e-9)

    def test_lambda_clipped_at_upper_bound(self):
        # lam and beta separate only when w varies within the treated group:
        # high-w treated rows carry a +2 effect, low-w treated rows none, so
        # the unconstrained lam is ~2 and must be clipped at u_lambda
        y = np.array([0.0, 0.05, -0.05, 0.0, 2.0, 1.95, 0.0, 0.05])
        d = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0])
        w = np.array([0.5, 0.5, 0.5, 0.5, 0.95, 0.93, 0.05, 0.04])
        ds = Dataset(y=y, x=np.ones((8, 1)), d=d, z=np.ones((8, 1)))
        _, _, o_lam, _ = stacked_wls(ds, w)
        u_lambda = 0.5
        assert o_lam > u_lambda  # fixture sanity: bound is active
        alpha, beta, lam, _ = m_step_regression(ds, w, u_lambda=u_lambda,
                                                sigma2_floor=1e-8)
        assert lam == u_lambda
        # refit under fixed lam must match an offset least squares
        u = np.column_stack((ds.x, d))
        top = np.sqrt(w)[:, None] * u
        bottom = np.sqrt(1 - w)[:, None] * u
        design = np.vstack((top, bottom))
        resp = np.concatenate((np.sqrt(w) * (y - u_lambda * d),
                               np.sqrt(1 - w) * y))
        coef, *_ = np.linalg.lstsq(design, resp, rcond=None)
        assert [*alpha, beta] == pytest.approx(list(coef), abs=1e-8)

    def test_rejects_bad_weights(self, dataset):
        with pytest.raises(ValueError):
            m_step_regression(dataset, np.full(dataset.n, 1.5), 10.0, 1e-8)


class TestMStepLogistic:
    def kkt_holds(self, z, w, pen, gamma, tol=1e-6):
        prob = logistic(z @ gamma)
        grad = z.T @ (w - prob)
        zero = gamma == 0.0
        ok_zero = np.all(np.abs(grad[zero]) <= pen + tol)
        ok_active = np.all(
            np.abs(grad[~zero] - pen * np.sign(gamma[~zero])) <= tol
        )
        return bool(ok_zero and ok_active)

    def test_balanced_weights_give_zero(self):
        rng = np.random.default_rng(2)
        z = np.column_stack((np.ones(50), rng.standard_normal((50, 3))))
        gamma, converged = m_step_logistic(z, np.full(50, 0.5), pen=0.7)
        assert converged
        assert np.all(gamma == 0.0)

    def test_origin_kkt_shortcut(self):
        rng = np.random.default_rng(4)
        z = np.column_stack((np.ones(60), rng.standard_normal((60, 2))))
        w = rng.uniform(0.2, 0.8, 60)
        bound = np.max(np.abs(z.T @ (w - 0.5)))
        gamma, converged = m_step_logistic(z, w, pen=bound * 1.01)
        assert converged
        assert np.all(gamma == 0.0)

    def test_intercept_only_closed_form(self):
        z = np.ones((8, 1))
        w = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0])
        gamma, converged = m_step_logistic(z, w, pen=0.0)
        assert converged
        assert gamma[0] == pytest.approx(math.log(3.0), abs=1e-8)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_kkt_certificate_randomized(self, seed):
        rng = np.random.default_rng(seed)
        n, dz = 40, 4
        z = np.column_stack((np.ones(n), rng.standard_normal((n, dz - 1))))
        w = rng.uniform(0.0, 1.0, n)
        pen = float(rng.uniform(0.1, 6.0))
        gamma, converged = m_step_logistic(z, w, pen=pen)
        assert converged
        assert self.kkt_holds(z, w, pen, gamma)

    def test_objective_beats_perturbations(self):
        rng = np.random.default_rng(11)
        n = 80
        z = np.column_stack((np.ones(n), rng.standard_normal((n, 2))))
        w = rng.uniform(0.0, 1.0, n)
        pen = 1.5
        gamma, _ = m_step_logistic(z, w, pen=pen)

        def objective(g):
            eta = z @ g
            return float(
                np.sum(w * -np.logaddexp(0, -eta) + (1 - w) * -np.logaddexp(0, eta))
            ) - pen * np.abs(g).sum()

        base = objective(gamma)
        for _ in range(200):
            assert objective(gamma + rng.uniform(-0.05, 0.05, 3)) <= base + 1e-9

    def test_rejects_bad_inputs(self):
        z = np.ones((5, 1))
        with pytest.raises(ValueError):
            m_step_logistic(z, np.full(5, 0.5), pen=-1.0)
        with pytest.raises(ValueError):
            m_step_logistic(z, np.full(5, 1.2), pen=1.0)
        with pytest.raises(ValueError):
            m_step_logistic(z, np.full(4, 0.5), pen=1.0)


class TestFitPenalized:
    def test_huge_pen_recovers_null_mle(self):
        ds = make_dataset(seed=NULL_BASIN_SEED, n=200)
        null_params, _ = fit_null(ds)
        fit = fit_penalized(ds, pen=1e6)
        assert np.all(fit.params.gamma == 0.0)
        assert fit.params.lam == pytest.approx(0.0, abs=1e-4)
        assert fit.params.alpha == pytest.approx(null_params.alpha, abs=1e-4)
        assert fit.params.beta == pytest.approx(null_params.beta, abs=1e-4)
        assert fit.params.sigma2 == pytest.approx(null_params.sigma2, rel=1e-4)

    def test_beats_grid_oracle_small_instance(self):
        # q = 1, dz = 1, pen = 0: certified lower bound from a dense grid
        rng = np.random.default_rng(77)
        n = 50
        d = rng.integers(0, 2, n).astype(float)
        y = 0.4 + d * (1.0 + (rng.uniform(size=n) < 0.5) * 1.5) \
            + rng.standard_normal(n)
        ds = Dataset(y=y, x=np.ones((n, 1)), d=d, z=np.ones((n, 1)))
        fit = fit_penalized(ds, pen=0.0)
        oracle = grid_oracle_best(ds, pen=0.0)
        assert fit.penalized_loglik >= oracle - 1e-4

    def test_restart_is_stationary(self, dataset):
        cfg = EmConfig()
        fit = fit_penalized(dataset, pen=2.0, cfg=cfg)
        again = fit_penalized(dataset, pen=2.0, cfg=cfg, init=fit.params)
        assert abs(again.penalized_loglik - fit.penalized_loglik) < cfg.tol * dataset.n

    def test_penalized_identity(self, dataset):
        fit = fit_penalized(dataset, pen=1.3)
        expected = fit.loglik - 1.3 * np.abs(fit.params.gamma).sum()
        assert fit.penalized_loglik == pytest.approx(expected, abs=1e-9)

    def test_trace_monotone_and_result_consistent(self):
        ds = make_dataset(seed=101, n=120, dz=5, lam=1.5, gamma_scale=1.0)
        fit = fit_penalized(ds, pen=3.0)
        assert np.all(np.diff(fit.trace) >= -1e-9)
        assert fit.trace[-1] == pytest.approx(fit.penalized_loglik, abs=1e-12)
        assert penalized_loglik(ds, fit.params, 3.0) == pytest.approx(
            fit.penalized_loglik, abs=1e-9
        )
        assert 0 <= fit.start_index < len(fit.start_traces)
        assert fit.params.lam >= 0.0

    def test_shrinkage_direction(self):
        ds = make_dataset(seed=55, n=150, dz=4, lam=2.0, gamma_scale=1.2)
        cfg = EmConfig(n_starts=1)
        norms = []
        for pen in (0.5, 2.0, 6.0, 20.0, 1e6):
            fit = fit_penalized(ds, pen=pen, cfg=cfg)
            norms.append(float(np.abs(fit.params.gamma).sum()))
        for small, large in zip(norms, norms[1:]):
            assert small >= large - 1e-8
        assert norms[0] > 0.0  # signal strong enough to engage gamma
        assert norms[-1] == 0.0

    def test_rejects_negative_pen(self, dataset):
        with pytest.raises(ValueError):
            fit_penalized(dataset, pen=-1.0)

    def test_degenerate_design_raises(self):
        n = 10
        d = np.tile([0.0, 1.0], 5)
        ds = Dataset(
            y=np.arange(n, dtype=float),
            x=np.column_stack((np.ones(n), d)),
            d=d,
            z=np.ones((n, 1)),
        )
        from slrt.errors import FitFailureError

        with pytest.raises((DegenerateDesignError, FitFailureError)):
            fit_penalized(ds, pen=1.0)


class TestFitGammaZero:
    def test_nests_null_model(self):
        for seed in range(6):
            ds = make_dataset(seed=seed, n=60)
            _, null_ll = fit_null(ds)
            fit = fit_gamma_zero(ds)
            assert fit.loglik >= null_ll - 1e-9
            assert np.all(fit.params.gamma == 0.0)

    def test_finds_true_split(self):
        ds = make_dataset(seed=13, n=1000, lam=2.0, gamma_scale=0.0)
        fit = fit_gamma_zero(ds)
        assert fit.params.lam > 0.5

    def test_trace_monotone(self, dataset):
        fit = fit_gamma_zero(dataset)
        assert np.all(np.diff(fit.trace) >= -1e-9)


class TestEmConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EmConfig(max_iter=0)
        with pytest.raises(ValueError):
            EmConfig(tol=0.0)
        with pytest.raises(ValueError):
            EmConfig(n_starts=0)
