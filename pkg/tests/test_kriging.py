import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpsobol.design import optimize_lhs
from gpsobol.errors import InputError, RankDeficiencyError
from gpsobol.functions import ISHIGAMI, ishigami
from gpsobol.kernel import KernelSpec, corr_matrix, cross_corr_matrix
from gpsobol.kriging import (
    KrigingModel,
    efficiency,
    fit,
    loo_efficiency,
    nash_sutcliffe,
    theta_bounds,
    trend_basis,
)


def toy(X):
    return np.sin(5 * X[:, 0]) + X[:, 1] ** 2 - 0.5 * X[:, 0] * X[:, 1]


def dense_moments(model, X, Y):
    """Predictive mean and covariance from the bordered system, explicit inverses."""
    R = corr_matrix(model.kernel, model.design, model.nugget)
    F = model.F
    q = F.shape[1]
    M = np.block([[np.zeros((q, q)), F.T], [F, R]])
    Minv = np.linalg.inv(M)
    Ri = np.linalg.inv(R)
    A = F.T @ Ri @ F
    beta = np.linalg.solve(A, F.T @ Ri @ model.z)
    resid = model.z - F @ beta
    sigma2 = resid @ Ri @ resid / (model.n - q)
    rX = cross_corr_matrix(model.kernel, X, model.design, model.nugget)
    rY = cross_corr_matrix(model.kernel, Y, model.design, model.nugget)
    mean = trend_basis(model.trend, X) @ beta + rX @ Ri @ resid
    bX = np.hstack([trend_basis(model.trend, X), rX])
    bY = np.hstack([trend_basis(model.trend, Y), rY])
    K = cross_corr_matrix(model.kernel, X, Y, model.nugget)
    cov = sigma2 * (K - bX @ Minv @ bY.T)
    return beta, sigma2, mean, cov


@pytest.fixture(scope="module")
def model2d():
    D = optimize_lhs(15, 2, 3, 200)
    return KrigingModel(D, toy(D), KernelSpec("matern52", (0.4, 0.7)), trend="linear")


class TestPrediction:
    def test_against_dense_bordered_system(self, model2d, rng):
        X, Y = rng.random((6, 2)), rng.random((4, 2))
        beta, sigma2, mean, cov = dense_moments(model2d, X, Y)
        assert np.allclose(model2d.beta, beta, rtol=1e-8)
        assert model2d.sigma2 == pytest.approx(sigma2, rel=1e-8)
        assert np.allclose(model2d.predict_mean(X), mean, rtol=1e-8, atol=1e-10)
        assert np.allclose(model2d.predict_cov_matrix(X, Y), cov, rtol=1e-6, atol=1e-10 * sigma2)

    def test_interpolates_design(self, model2d):
        assert np.allclose(model2d.predict_mean(model2d.design), model2d.z, atol=1e-8)
        assert np.all(np.abs(model2d.predict_var(model2d.design)) < 1e-6 * model2d.sigma2)

    def test_scalar_forms(self, model2d, rng):
        x, y = rng.random(2), rng.random(2)
        assert isinstance(model2d.predict_mean(x), float)
        assert model2d.predict_cov(x, y) == pytest.approx(model2d.predict_cov_matrix(x[None], y[None])[0, 0])
        assert model2d.predict_cov(x, x) == pytest.approx(model2d.predict_var(x))

    @given(st.integers(0, 2**31))
    def test_covariance_symmetric_psd(self, seed):
        D = optimize_lhs(10, 2, 3, 50)
        model = KrigingModel(D, toy(D), KernelSpec("matern52", (0.5, 0.5)))
        X = np.random.default_rng(seed).random((8, 2))
        C = model.predict_cov_matrix(X, X)
        assert np.allclose(C, C.T, atol=1e-12 * model.sigma2)
        assert np.linalg.eigvalsh(C).min() > -1e-8 * model.sigma2

    def test_pairs_and_sums(self, model2d, rng):
        X, Y = rng.random((30, 2)), rng.random((30, 2))
        C = model2d.predict_cov_matrix(X, Y)
        assert np.allclose(model2d.cov_pairs(X, Y), np.diag(C), rtol=1e-10, atol=1e-14)
        assert model2d.cov_sum(X, Y) == pytest.approx(C.sum(), rel=1e-9)

    def test_custom_regressors_block_predict_mean(self):
        D = optimize_lhs(10, 1, 0, 0)
        m = KrigingModel(D, D[:, 0] ** 2, KernelSpec("matern52", (0.3,)), F=np.column_stack([D[:, 0], np.ones(10)]))
        with pytest.raises(InputError):
            m.predict_mean(D)


class TestLeaveOneOut:
    def test_matches_refits(self, model2d):
        loo = model2d.loo_predictions()
        for i in range(model2d.n):
            keep = np.arange(model2d.n) != i
            sub = KrigingModel(model2d.design[keep], model2d.z[keep], model2d.kernel,
                               model2d.nugget, model2d.trend)
            assert loo[i] == pytest.approx(sub.predict_mean(model2d.design[i]), rel=1e-7, abs=1e-9)

    def test_efficiency_bounded(self, model2d):
        assert loo_efficiency(model2d) <= 1.0


class TestFit:
    def test_likelihood_not_worse_than_box_points(self):
        D = optimize_lhs(25, 2, 1, 200)
        model = fit(D, toy(D), seed=0)
        box = np.log(theta_bounds(D))
        best = model.profile_nll()
        for log_theta in np.random.default_rng(2).uniform(box[:, 0], box[:, 1], size=(20, 2)):
            other = KrigingModel(D, toy(D), KernelSpec("matern52", tuple(np.exp(log_theta))))
            assert best <= other.profile_nll() + 1e-6

    def test_fixed_theta_skips_optimizer(self):
        D = optimize_lhs(12, 2, 1, 0)
        model = fit(D, toy(D), theta=[0.3, 0.4])
        assert np.allclose(model.theta, [0.3, 0.4])

    def test_ishigami_efficiency(self):
        D = optimize_lhs(200, 3, 1, 1000)
        model = fit(D, ishigami(ISHIGAMI.to_physical(D)), seed=1)
        X = np.random.default_rng(9).random((2000, 3))
        assert efficiency(model, X, ishigami(ISHIGAMI.to_physical(X))) > 0.95

    def test_duplicate_rows_rejected(self):
        D = np.array([[0.1, 0.2], [0.1, 0.2], [0.5, 0.5], [0.9, 0.1]])
        with pytest.raises(InputError):
            fit(D, np.arange(4.0))

    def test_too_few_points(self):
        with pytest.raises(InputError):
            fit(np.array([[0.1, 0.2], [0.3, 0.1], [0.6, 0.6]]), np.arange(3.0), trend="linear")

    def test_collinear_regressors(self):
        D = optimize_lhs(8, 1, 0, 0)
        F = np.column_stack([np.ones(8), 2 * np.ones(8)])
        with pytest.raises(RankDeficiencyError):
            KrigingModel(D, D[:, 0], KernelSpec("matern52", (0.3,)), F=F)

    def test_json_round_trip(self, model2d, rng):
        clone = KrigingModel.from_dict(json.loads(json.dumps(model2d.to_dict())))
        X = rng.random((5, 2))
        assert np.array_equal(clone.predict_mean(X), model2d.predict_mean(X))

    def test_json_version_checked(self, model2d):
        data = model2d.to_dict()
        data["version"] = 99
        with pytest.raises(InputError):
            KrigingModel.from_dict(data)


class TestNashSutcliffe:
    def test_perfect_and_mean_predictor(self):
        z = np.array([1.0, 2.0, 4.0])
        assert nash_sutcliffe(z, z) == 1.0
        assert nash_sutcliffe(np.full(3, z.mean()), z) == pytest.approx(0.0)

    def test_direct_formula(self, rng):
        pred, obs = rng.random(20), rng.random(20)
        expected = 1 - sum((p - o) ** 2 for p, o in zip(pred, obs)) / sum((o - obs.mean()) ** 2 for o in obs)
        assert nash_sutcliffe(pred, obs) == pytest.approx(expected, rel=1e-12)

    def test_constant_outputs(self):
        with pytest.raises(InputError):
            nash_sutcliffe(np.ones(3), np.ones(3))
