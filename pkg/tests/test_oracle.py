import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from emproc import ConfigError, ModelSpec, NumericalError, TimeGrid, make_weights, mclab, oracle
from emproc.bvn import bvn_cdf
from emproc.quadrature import TailIntegral, expect_normal_pair, integrate_normal
from emproc.weights import constant_weights

UNIFORM = ModelSpec("ComonotoneDriver", marginal="uniform")
OU = ModelSpec("StationaryOUGaussian", rho=1.0)
BM = ModelSpec("BrownianMotion")
INDEP = ModelSpec("IndependentField", marginal="uniform")
ONE = constant_weights(1.0)
ZERO = constant_weights(0.0)
PHI_W = make_weights({"q": {"name": "time_modulated_phi", "base": 1.0, "amplitude": 0.5}})


def lweights(c, q=None, z=None):
    block = {"q": q or {"name": "constant"}, "c": c, "q0": {"name": "constant"}}
    if z is not None:
        block["z"] = z
    return make_weights(block)


class TestQuadrature:
    @pytest.mark.parametrize("k,moment", [(0, 1.0), (2, 1.0), (4, 3.0), (6, 15.0)])
    def test_normal_moments(self, k, moment):
        val, err = integrate_normal(lambda z: z**k)
        assert val == pytest.approx(moment, abs=1e-11)

    def test_indicator_with_breakpoint(self):
        val, _ = integrate_normal(lambda z: (z <= 0.37).astype(float), breaks=(0.37,))
        assert val == pytest.approx(ndtr(0.37), abs=1e-13)

    def test_non_convergence_reports_achieved(self):
        with pytest.raises(NumericalError) as info:
            integrate_normal(lambda z: (z <= 0.3).astype(float), tol=1e-15, max_level=3)
        assert info.value.achieved > 0

    def test_tail_integral(self):
        a = TailIntegral(lambda z: np.ones_like(z))
        z = np.linspace(-8.5, 8.5, 1001)
        assert np.max(np.abs(a(z) - ndtr(-z))) < 1e-10

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-0.95, 0.95))
    def test_pair_indicator_matches_bvn(self, h, k, r):
        f = lambda x: (x <= h).astype(float)  # noqa: E731
        g = lambda y: (y <= k).astype(float)  # noqa: E731
        val, _ = expect_normal_pair(f, g, r, (h,), (k,))
        assert val == pytest.approx(bvn_cdf(h, k, r), abs=1e-9)


class TestFirstMoments:
    def test_mean_limit(self):
        for m in (UNIFORM, OU, BM):
            assert oracle.mean_limit(m, ONE, 0.7) == pytest.approx(0.5, abs=1e-9)
        assert oracle.mean_limit(OU, ZERO, 0.7) == 0.0

    def test_mean_limit_identity_weight(self):
        w = make_weights({"q": {"name": "polynomial", "coeffs": [0, 1], "lower": 0, "upper": 1}})
        assert oracle.mean_limit(UNIFORM, w, 0.4) == pytest.approx(1 / 6, abs=1e-9)

    def test_c2(self):
        assert oracle.c2(UNIFORM, ONE, 0.5) == pytest.approx(1 / 3, abs=1e-8)
        assert oracle.c2(UNIFORM, ZERO, 0.5) == 0.0
        assert oracle.c2(UNIFORM, constant_weights(2.0), 0.5) == pytest.approx(4 / 3, abs=1e-8)

    def test_j_limit(self):
        assert oracle.j_limit(OU, lweights({"name": "constant"}), 0.5) == pytest.approx(1.0, abs=1e-10)
        assert oracle.j_limit(OU, lweights({"name": "power", "k": 1}), 0.5) == pytest.approx(0.5, abs=1e-10)
        w = lweights({"name": "constant"}, z={"name": "constant", "value": 0.3})
        assert oracle.j_limit(UNIFORM, w, 0.5) == pytest.approx(0.3, abs=1e-10)

    def test_j_limit_requires_score(self):
        with pytest.raises(ConfigError):
            oracle.j_limit(OU, ONE, 0.5)


class TestCovariances:
    @pytest.mark.parametrize("model", [UNIFORM, OU, BM, INDEP], ids=lambda m: m.kind)
    def test_diagonal_cross_equals_c2(self, model):
        assert oracle.g_cross(model, PHI_W, PHI_W, 0.6, 0.6) == pytest.approx(oracle.c2(model, PHI_W, 0.6), abs=1e-8)

    def test_independent_factorizes(self):
        assert oracle.g_cross(INDEP, ONE, ONE, 0.2, 0.7) == pytest.approx(0.25, abs=1e-10)
        assert oracle.gamma1_cov(INDEP, ONE, 0.2, 0.7) == pytest.approx(0.0, abs=1e-10)
        assert oracle.increment_variance(INDEP, ONE, 0.2, 0.7) == pytest.approx(1 / 6, abs=1e-8)

    def test_comonotone_off_diagonal(self):
        assert oracle.g_cross(UNIFORM, ONE, ONE, 0.2, 0.7) == pytest.approx(1 / 3, abs=1e-10)
        w = make_weights({"q": {"name": "polynomial", "coeffs": [1, 2], "lower": 0, "upper": 1}})
        assert oracle.increment_variance(UNIFORM, w, 0.2, 0.7) == pytest.approx(0.0, abs=1e-12)

    def test_gamma1_diagonal(self):
        assert oracle.gamma1_cov(UNIFORM, ONE, 0.4, 0.4) == pytest.approx(1 / 12, abs=1e-8)
        assert oracle.gamma1_cov(OU, ZERO, 0.4, 0.9) == 0.0

    @pytest.mark.parametrize("t,s", [(0.5, 0.6), (0.2, 1.8), (1.0, 1.3)])
    def test_gaussian_copula_closed_form(self, t, s):
        # q = 1 under a Gaussian copula with correlation r: Gamma1 = arcsin(r/2)/(2 pi)
        r = np.exp(-abs(t - s))
        assert oracle.gamma1_cov(OU, ONE, t, s) == pytest.approx(np.arcsin(r / 2) / (2 * np.pi), abs=1e-10)
        rb = np.sqrt(min(t, s) / max(t, s))
        assert oracle.gamma1_cov(BM, ONE, t, s) == pytest.approx(np.arcsin(rb / 2) / (2 * np.pi), abs=1e-10)

    def test_gamma2(self):
        w = lweights({"name": "power", "k": 2})
        direct = oracle.expect(lambda z: (ndtr(z) ** 2 - 1 / 3) ** 2)
        assert oracle.gamma2_cov(OU, w, 0.5, 0.5) == pytest.approx(direct, abs=1e-8)
        assert oracle.gamma2_cov(OU, lweights({"name": "constant"}), 0.5, 0.9) == pytest.approx(0.0, abs=1e-12)
        assert oracle.gamma2_cov(INDEP, w, 0.5, 0.9) == pytest.approx(0.0, abs=1e-12)

    def test_cross_cov_trivial(self):
        w0 = lweights({"name": "power", "k": 2}, q={"name": "constant", "value": 0.0})
        assert oracle.cross_cov(OU, w0, 0.3, 0.8) == 0.0
        assert oracle.cross_cov(OU, lweights({"name": "constant"}), 0.3, 0.8) == pytest.approx(0.0, abs=1e-11)

    def test_cross_cov_closed_form_uniform(self):
        # g(u) = u, A(u) = 1 - u: E[(U - 1/2)(1 - U)] = -1/12
        w = lweights({"name": "power", "k": 1})
        assert oracle.cross_cov_one_sided(UNIFORM, w, 0.5, 0.5) == pytest.approx(-1 / 12, abs=1e-9)

    def test_cross_cov_against_brute_force_mc(self):
        w = lweights({"name": "power", "k": 1})
        g = TimeGrid((0.5, 1.0), 1.0)
        ens = mclab.run_replications(UNIFORM, w, g, 2000, 20_000, 123)
        c, se = mclab.cov_and_se(ens["alpha"][:, 0], ens["beta"][:, 0])
        ref = oracle.cross_cov_one_sided(UNIFORM, w, 0.5, 0.5)
        assert abs(c - ref) <= 4 * se

    def test_gamma3(self):
        assert oracle.gamma3_cov(UNIFORM, ONE, ONE, 0.5, 0.5) == pytest.approx(1 / 12, abs=1e-8)
        assert oracle.gamma3_cov(OU, PHI_W, ZERO, 0.3, 0.9) == pytest.approx(0.0, abs=1e-12)
        for lam in (2.0, -0.5):
            assert oracle.gamma3_cov(OU, PHI_W, PHI_W.scaled(lam), 0.3, 0.9) == pytest.approx(
                lam * oracle.gamma1_cov(OU, PHI_W, 0.3, 0.9), abs=1e-9)

    def test_gamma3_symmetrized(self):
        w2 = make_weights({"q": {"name": "indicator_threshold", "level": 0.2}})
        a = oracle.gamma3_symmetrized(OU, PHI_W, w2, 0.3, 0.9)
        b = oracle.gamma3_cov(OU, PHI_W, w2, 0.3, 0.9) + oracle.gamma3_cov(OU, PHI_W, w2, 0.9, 0.3)
        assert a == pytest.approx(b, abs=1e-14)


class TestSurfaces:
    GRID = TimeGrid((0.2, 0.6, 1.0, 1.4, 1.8), 2.0)

    @pytest.mark.parametrize("kind", ["Gamma1", "Gamma2", "GammaTotal"])
    def test_psd_and_symmetric(self, kind):
        w = make_weights({"q": {"name": "time_modulated_phi"}, "c": {"name": "power", "k": 2}})
        surf = oracle.covariance_surface(kind, OU, w, self.GRID)
        assert np.array_equal(surf.values, surf.values.T)
        assert surf.min_eigenvalue() >= -1e-8
        assert len(surf.rows()) == 25

    def test_gamma1_diagonal_formula(self):
        surf = oracle.covariance_surface("Gamma1", OU, PHI_W, self.GRID)
        for i, t in enumerate(self.GRID.points):
            expect = oracle.c2(OU, PHI_W, t) - oracle.e_gq(OU, PHI_W, t) ** 2
            assert surf.values[i, i] == pytest.approx(expect, abs=1e-9)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            oracle.covariance_surface("Gamma9", OU, ONE, self.GRID)


class TestHolderScan:
    def test_reproducible_and_resolution(self):
        g20 = TimeGrid.linspace(0.5, 1.5, 20, 2.0)
        a = oracle.holder_scan(OU, ONE, g20, 0.3)
        oracle._tails.clear()
        b = oracle.holder_scan(OU, ONE, g20, 0.3)
        assert abs(a.fitted_exponent - b.fitted_exponent) <= 1e-9
        fine = oracle.holder_scan(OU, ONE, TimeGrid.linspace(0.5, 1.5, 41, 2.0), 0.3)
        assert abs(a.fitted_exponent - fine.fitted_exponent) <= 0.05
        assert all(v >= -1e-8 for _, _, v in a.pairs)

    def test_degenerate_comonotone(self):
        rep = oracle.holder_scan(UNIFORM, ONE, TimeGrid.linspace(0.1, 1.0, 10, 1.0), 0.3)
        assert rep.degenerate and "degenerate" in rep.notice

    @pytest.mark.parametrize("model,grid,delta", [
        (INDEP, TimeGrid.linspace(0.1, 1.0, 10, 1.0), 0.3),
        (OU, TimeGrid.linspace(0.1, 1.0, 9, 1.0), 0.3),
        (OU, TimeGrid.linspace(0.1, 1.0, 10, 1.0), 0.05),
    ])
    def test_preconditions(self, model, grid, delta):
        with pytest.raises(ConfigError):
            oracle.holder_scan(model, ONE, grid, delta)

    def test_runtime(self):
        start = time.perf_counter()
        oracle.holder_scan(OU, PHI_W, TimeGrid.linspace(0.5, 1.5, 20, 2.0), 0.3)
        assert time.perf_counter() - start < 30
