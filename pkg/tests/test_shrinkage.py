import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigshrink.elliptical import GeneratorSpec, ScatterSpec, build_scatter, sample
from eigshrink.errors import DegenerateInputError, DomainError, InsufficientSampleError, PreconditionError
from eigshrink.mest import ScatterEstimate, WeightSpec, fixed_point, scm
from eigshrink.numerics import elliptical_kurtosis
from eigshrink.shrinkage import (
    beta_from_moments,
    beta_general,
    beta_rscm,
    beta_tyler,
    cwh,
    estimate,
    estimate_dof,
    lemma_moments,
    mse_at_optimum,
    mse_c_beta,
    psi1_estimate,
    rscm_cv,
    shrink,
    sphericity,
    sphericity_ell1,
    sphericity_ell2,
    theta_unbiased,
    unbiasedness_constants,
)

gammas = st.floats(1.0, 60.0)
ns = st.integers(2, 10_000)
ps = st.integers(2, 60)
fields = st.sampled_from(["real", "complex"])


def _t_data(n, p, nu, seed, rho=0.6, tau=10.0, field="real"):
    return sample(n, ScatterSpec.ar1(p, rho, tau), GeneratorSpec("mvt", nu, field), seed).values


class TestSphericity:
    def test_ell1_orthogonal_pair(self):
        est = sphericity_ell1(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert est.raw == pytest.approx(0.0) and est.gamma_hat == 1.0

    def test_ell1_rank_one(self):
        est = sphericity_ell1(np.array([[1.0, 0.0], [1.0, 0.0]]))
        assert est.raw == pytest.approx(2.0) and est.gamma_hat == 2.0

    def test_ell1_spherical_large_n(self):
        X = sample(50_000, np.eye(6), GeneratorSpec("gaussian"), 1).values
        assert sphericity_ell1(X).gamma_hat == pytest.approx(1.0, abs=0.01)

    @given(seed=st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_ell1_ignores_radial_scaling(self, seed):
        # spatial signs discard each row's length, so the estimate is the
        # same for every elliptical law sharing the scatter matrix
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((40, 6))
        r = rng.exponential(size=(40, 1)) + 1e-3
        assert sphericity_ell1(r * X).raw == pytest.approx(sphericity_ell1(X).raw, rel=1e-10, abs=1e-12)

    def test_ell1_zero_row(self):
        X = np.ones((5, 2))
        X[3] = 0
        with pytest.raises(DegenerateInputError):
            sphericity_ell1(X)

    def test_ell2_hand_example(self):
        est = sphericity_ell2(np.eye(2), 1.0, 10, "real")
        assert est.raw == pytest.approx((10 / 9) * (10 / 12) * (1 - 0.2))
        assert est.raw == pytest.approx(0.7407, abs=1e-4)
        assert est.gamma_hat == 1.0

    def test_ell2_large_n_limit(self):
        S = np.diag([1.0, 2.0, 5.0])
        est = sphericity_ell2(S, 1.3, 10**9, "real")
        assert est.raw == pytest.approx(sphericity(S), rel=1e-7)

    def test_ell2_rejects_shrunk(self):
        est = ScatterEstimate(np.eye(3), WeightSpec.gaussian(), beta=0.5)
        with pytest.raises(DomainError):
            sphericity_ell2(est, 1.0, 10)

    @given(seed=st.integers(0, 10**6), n=st.integers(2, 30), p=st.integers(2, 8), field=fields)
    @settings(max_examples=60, deadline=None)
    def test_clipping(self, seed, n, p, field):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, p)) * rng.exponential(size=(n, 1))
        if field == "complex":
            X = X + 1j * rng.standard_normal((n, p))
        for est in (sphericity_ell1(X), sphericity_ell2(scm(X) + 1e-9 * np.eye(p), 1.5, n, field)):
            assert 1.0 <= est.gamma_hat <= p


class TestTheta:
    def test_hand_example(self):
        assert theta_unbiased(np.eye(2), 1.0, 10, "real") == pytest.approx(0.925925925 * 0.8, rel=1e-8)

    def test_constants_at_psi1_one(self):
        k = unbiasedness_constants(1.0, 10, "real")
        assert k.a_n == 1.0
        assert k.b_n == pytest.approx(10 / 9 * 10 / 12)

    @given(psi1=st.floats(0.1, 5.0), field=fields)
    def test_constants_tend_to_one(self, psi1, field):
        k = unbiasedness_constants(psi1, 10**9, field)
        assert k.a_n == pytest.approx(1.0, abs=1e-7) and k.b_n == pytest.approx(1.0, abs=1e-7)

    def test_unbiased_gaussian_mc(self):
        p, n, trials = 4, 15, 10_000
        Sigma = build_scatter(ScatterSpec.ar1(p, 0.6, 2.0))
        vals = np.array([
            theta_unbiased(scm(sample(n, Sigma, GeneratorSpec("gaussian"), 50 + k).values), 1.0, n, "real")
            for k in range(trials)
        ])
        target = np.linalg.norm(Sigma) ** 2 / p
        assert abs(vals.mean() - target) < 3 * vals.std(ddof=1) / math.sqrt(trials)


class TestPsi1:
    def test_tyler(self):
        X = np.random.default_rng(0).standard_normal((50, 40))
        assert psi1_estimate(WeightSpec.tyler(), X).psi1_hat == pytest.approx(40 / 42)
        assert psi1_estimate(WeightSpec.tyler(), X + 0j).psi1_hat == pytest.approx(40 / 41)

    def test_mvt(self):
        X = np.random.default_rng(0).standard_normal((50, 40))
        assert psi1_estimate(WeightSpec.mvt(5.0), X, nu_hat=5.0).psi1_hat == pytest.approx(45 / 47)
        with pytest.raises(PreconditionError):
            psi1_estimate(WeightSpec.mvt(5.0), X)

    def test_gaussian_at_mvn(self):
        X = sample(100_000, np.eye(5), GeneratorSpec("gaussian"), 3).values
        est = psi1_estimate(WeightSpec.gaussian(), X)
        assert est.psi1_hat == pytest.approx(1.0, abs=0.02)
        assert est.source == "gaussian_kurtosis"

    def test_huber_needs_fit(self):
        X = np.random.default_rng(0).standard_normal((50, 4))
        with pytest.raises(PreconditionError):
            psi1_estimate(WeightSpec.huber(4), X)

    def test_empirical(self):
        X = np.random.default_rng(0).standard_normal((200, 4))
        fit = fixed_point(X, WeightSpec.tyler())
        assert psi1_estimate(WeightSpec.tyler(), X, fit, empirical=True).psi1_hat == pytest.approx(16 / 24)


class TestBeta:
    def test_gamma_one(self):
        assert beta_general(1.0, 1.3, 50, 10) == 0.0
        assert beta_rscm(1.0, 0.2, 50, 10) == 0.0
        assert beta_tyler(1.0, 50, 10) == 0.0

    def test_general_example(self):
        assert beta_general(5.0, 1.0, 100, 40) == pytest.approx(400 / 444.75, rel=1e-14)

    def test_tyler_example(self):
        exact = 400 / (396 + (39 / 42) * 50)
        assert beta_tyler(5.0, 100, 40) == pytest.approx(exact, rel=1e-14)
        assert exact == pytest.approx(0.9041007, abs=1e-7)

    def test_large_n(self):
        assert beta_general(2.0, 1.0, 10**9, 40) > 0.999

    @given(g=gammas, k=st.floats(-0.03, 5.0), n=ns, p=ps, field=fields)
    @settings(max_examples=200)
    def test_identity_chain(self, g, k, n, p, field):
        assert beta_rscm(g, k, n, p, field) == pytest.approx(beta_general(g, 1 + k, n, p, field), rel=1e-12, abs=1e-15)
        psi = p / (p + 1) if field == "complex" else p / (p + 2)
        assert beta_tyler(g, n, p, field) == pytest.approx(beta_general(g, psi, n, p, field), rel=1e-12, abs=1e-15)

    @given(s=st.floats(0.0, 10.0), n=ns, p=ps, field=fields)
    @settings(max_examples=100)
    def test_range_and_monotone_in_gamma(self, s, n, p, field):
        psi1 = _psi1_floor(p, field) * (1 + 1e-6) + s
        grid = np.linspace(1.0, p, 50)
        b = np.array([beta_general(g, psi1, n, p, field) for g in grid])
        assert np.all((b >= 0) & (b < 1))
        assert np.all(np.diff(b) >= -1e-15)

    @given(frac=st.floats(0.01, 1.0), s=st.floats(1e-3, 5.0), p=ps)
    def test_increasing_in_n(self, frac, s, p):
        g = 1 + frac * (p - 1)
        psi1 = _psi1_floor(p, "real") + s
        b = [beta_general(g, psi1, n, p) for n in (10, 50, 200, 1000)]
        assert all(x < y for x, y in zip(b, b[1:]))

    @given(g=gammas, psi1=st.floats(0.1, 5.0), n=st.integers(2, 500), p=ps, field=fields)
    @settings(max_examples=100)
    def test_equals_minimizer_of_moment_mse(self, g, psi1, n, p, field):
        # a Sigma0 of prescribed sphericity: two-level spectrum
        ev = _spectrum_with_sphericity(p, g)
        S0 = np.diag(ev)
        e2, e1 = lemma_moments(S0, psi1, n, field)
        assert beta_from_moments(S0, e2, e1) == pytest.approx(beta_general(sphericity(S0), psi1, n, p, field), abs=1e-9)


def _psi1_floor(p, field):
    # Jensen: E[psi^2] >= E[psi]^2 = p^2, the smallest admissible psi1
    return p / (p + 1) if field == "complex" else p / (p + 2)


def _spectrum_with_sphericity(p, g):
    g = min(g, p * 0.999)
    # one spike of height h over ones: gamma = p (h^2 + p - 1) / (h + p - 1)^2
    lo, hi = 1.0, 1e8
    for _ in range(200):
        h = 0.5 * (lo + hi)
        if p * (h * h + p - 1) / (h + p - 1) ** 2 < g:
            lo = h
        else:
            hi = h
    return np.r_[h, np.ones(p - 1)]


class TestMse:
    def test_scaled_identity_target(self):
        S0 = 3.0 * np.eye(4)
        e2, e1 = lemma_moments(S0, 1.0, 20)
        assert mse_at_optimum(S0, e1, 0.0) == pytest.approx((e1 - np.trace(S0) ** 2) / 4)

    def test_optimum_matches_quadratic(self):
        S0 = build_scatter(ScatterSpec.ar1(6, 0.6, 2.0))
        e2, e1 = lemma_moments(S0, 1.2, 30)
        b = beta_from_moments(S0, e2, e1)
        assert mse_at_optimum(S0, e1, b) == pytest.approx(mse_c_beta(S0, e2, e1, b), rel=1e-12)
        assert 0 <= b < 1
        grid = np.linspace(0, 1, 1001)
        assert mse_c_beta(S0, e2, e1, b) <= min(mse_c_beta(S0, e2, e1, x) for x in grid) + 1e-12


class TestShrink:
    def test_endpoints(self):
        S = np.diag([1.0, 2.0, 6.0])
        np.testing.assert_array_equal(shrink(S, 1.0), S)
        np.testing.assert_allclose(shrink(S, 0.0), 3.0 * np.eye(3))
        with pytest.raises(DomainError):
            shrink(S, 1.5)

    @given(seed=st.integers(0, 10**6), beta=st.floats(0.0, 1.0))
    @settings(max_examples=60)
    def test_eigen_map_and_vectors(self, seed, beta):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((5, 5))
        S = A @ A.T + 0.1 * np.eye(5)
        d, U = np.linalg.eigh(S)
        out = shrink(S, beta)
        np.testing.assert_allclose(U.T @ out @ U, np.diag(beta * d + (1 - beta) * d.mean()), atol=1e-10 * d.max())

    def test_tyler_trace(self):
        X = _t_data(60, 5, 3.0, 0)
        fit = fixed_point(X, WeightSpec.tyler())
        assert shrink(fit, 0.3).trace() == pytest.approx(5.0, abs=1e-10)
        assert shrink(fit, 0.3).beta == 0.3


class TestDof:
    def test_eta_inversion(self):
        eta = 5 / 3
        assert 2 * eta / (eta - 1) == pytest.approx(5.0)

    def test_nu0_from_kurtosis(self):
        assert 2 / (0.5 + 1e-3) + 4 == pytest.approx(7.99, abs=0.01)
        X = _t_data(300, 5, 8.0, 1)
        d = estimate_dof(X, T_max=1)
        k = elliptical_kurtosis(X).kappa_hat
        assert d.nu0 == pytest.approx(min(1e3, 2 / (max(0, k) + 1e-3) + 4))

    @pytest.mark.parametrize("T", [1, 2, 5])
    def test_iterations_bounded(self, T):
        d = estimate_dof(_t_data(200, 10, 5.0, 2), T_max=T)
        assert 1 <= d.iterations <= T
        assert 2 < d.nu_hat <= d.nu_max
        assert len(d.eta_trace) == d.iterations

    def test_gaussian_data_caps(self):
        X = sample(2000, np.eye(5), GeneratorSpec("gaussian"), 3).values
        d = estimate_dof(X)
        assert d.nu_hat > 30

    def test_t5_large_n(self):
        d = estimate_dof(_t_data(1000, 40, 5.0, 4))
        assert 4 <= d.nu_hat <= 6


class TestEstimate:
    def test_rscm_equals_direct_formula(self):
        X = _t_data(80, 6, 6.0, 5)
        est, rep = estimate(X, "rscm-ell1")
        S = scm(X)
        gamma = sphericity_ell1(X).gamma_hat
        kappa = elliptical_kurtosis(X).kappa_hat
        b = beta_rscm(gamma, kappa, 80, 6)
        direct = b * S + (1 - b) * np.trace(S) / 6 * np.eye(6)
        np.testing.assert_allclose(est.matrix, direct, rtol=1e-14, atol=1e-14)
        assert rep.beta == b and rep.kappa_hat == kappa

    @pytest.mark.parametrize("method", ["rscm", "rhub", "rtyl", "rmvt", "rscm-ell2", "rhub-ell2", "rmvt-ell2"])
    @pytest.mark.parametrize("field", ["real", "complex"])
    def test_pipelines(self, method, field):
        X = _t_data(60, 8, 4.0, 6, field=field)
        est, rep = estimate(X, method)
        assert 0 <= rep.beta < 1
        assert 1 <= rep.gamma.gamma_hat <= 8
        assert np.isfinite([rep.kappa_hat, rep.eta_o_hat, rep.psi1.psi1_hat]).all()
        M = est.matrix
        assert np.abs(M - M.conj().T).max() < 1e-10 * np.abs(M).max()
        assert np.linalg.eigvalsh(M).min() > 0
        if method == "rtyl":
            assert est.trace() == pytest.approx(8, abs=1e-10)
        if method.startswith("rmvt"):
            assert rep.nu is not None and any("sigma = 1" in s for s in rep.notes)

    def test_rtyl_scale_invariant(self):
        X = _t_data(60, 8, 4.0, 7)
        a, ra = estimate(X, "rtyl")
        b, rb = estimate(13.0 * X, "rtyl")
        np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-9)
        assert ra.beta == pytest.approx(rb.beta, rel=1e-12)

    def test_rejections(self):
        X = _t_data(60, 8, 4.0, 7)
        with pytest.raises(DomainError):
            estimate(X, "rtyl-ell2")
        with pytest.raises(DomainError):
            estimate(X, "lw")
        with pytest.raises(DomainError):
            estimate(X, "rscm-ell2", sphericity_method="ell1")
        with pytest.raises(InsufficientSampleError):
            estimate(X[:5], "rhub")
        estimate(X[:5], "rscm")  # rscm works with n <= p

    def test_ell_option_equivalence(self):
        X = _t_data(60, 8, 4.0, 8)
        a, _ = estimate(X, "rhub-ell2")
        b, _ = estimate(X, "rhub", sphericity_method="ell2")
        np.testing.assert_array_equal(a.matrix, b.matrix)


class TestCwh:
    def test_domain(self):
        X = _t_data(50, 4, 3.0, 0)
        for b in (0.0, 1.0, -0.1):
            with pytest.raises(DomainError):
                cwh(X, b)

    def test_small_beta_limit(self):
        X = _t_data(50, 4, 3.0, 0)
        np.testing.assert_allclose(cwh(X, 1e-9).matrix, np.eye(4), atol=1e-7)

    def test_unique_fixed_point(self):
        X = _t_data(50, 6, 3.0, 1)
        rng = np.random.default_rng(0)
        inits = []
        for _ in range(2):
            A = rng.standard_normal((6, 6))
            inits.append(A @ A.T + np.eye(6))
        a = cwh(X, 0.6, tol=1e-13, max_iter=5000, init=inits[0])
        b = cwh(X, 0.6, tol=1e-13, max_iter=5000, init=inits[1])
        assert a.converged and b.converged
        np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-8)
        assert a.trace() == pytest.approx(6, abs=1e-10)

    def test_trace_every_iterate(self):
        X = _t_data(50, 6, 3.0, 2)
        for k in range(1, 6):
            est = cwh(X, 0.5, max_iter=k) if k < 5 else cwh(X, 0.5)
            assert est.trace() == pytest.approx(6, abs=1e-10)


class TestCv:
    def test_spherical_folds_select_zero(self):
        # every fold has SCM equal to a multiple of I, so beta = 0 fits best
        block = np.vstack([np.eye(3), -np.eye(3)])
        X = np.vstack([block] * 5)
        _, beta = rscm_cv(X, folds=5)
        assert beta == 0.0

    def test_grid_and_full_data(self):
        X = _t_data(100, 5, 5.0, 3)
        est, beta = rscm_cv(X)
        assert beta in np.round(np.linspace(0, 1, 21), 12)
        np.testing.assert_allclose(est.matrix, shrink(scm(X), beta))

    def test_seeded_shuffle_deterministic(self):
        X = _t_data(100, 5, 5.0, 3)
        assert rscm_cv(X, seed=5)[1] == rscm_cv(X, seed=5)[1]

    def test_folds_precondition(self):
        with pytest.raises(InsufficientSampleError):
            rscm_cv(np.ones((3, 2)), folds=5)

    def test_cv_beta_below_rscm_on_t_data(self):
        cv, rs = [], []
        for k in range(60):
            X = _t_data(100, 20, 5.0, 100 + k)
            cv.append(rscm_cv(X, seed=k)[1])
            rs.append(estimate(X, "rscm")[1].beta)
        assert np.mean(cv) < np.mean(rs)
