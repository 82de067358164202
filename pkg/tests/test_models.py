import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from emproc import ConfigError, ModelSpec, TimeGrid, sample_paths
from emproc.bvn import bvn_cdf
from emproc.models import joint_cdf, marginal_cdf, marginal_quantile

ALL_MODELS = [
    ModelSpec("ComonotoneDriver", marginal="uniform"),
    ModelSpec("ComonotoneDriver", marginal="normal", scale_slope=0.5),
    ModelSpec("BrownianMotion"),
    ModelSpec("StationaryOUGaussian", rho=0.7),
    ModelSpec("IndependentField", marginal="uniform"),
    ModelSpec("IndependentField", marginal="normal"),
]


class TestTimeGrid:
    def test_valid(self):
        g = TimeGrid((0.1, 0.5, 1.0), 1.0)
        assert g.m == 3 and g.array.dtype == float

    @pytest.mark.parametrize("points,T", [((0.5,), 1.0), ((0.5, 0.5), 1.0), ((0.6, 0.2), 1.0),
                                          ((0.0, 0.5), 1.0), ((0.5, 1.5), 1.0), ((0.2, 0.4), -1.0)])
    def test_rejects(self, points, T):
        with pytest.raises(ConfigError):
            TimeGrid(points, T)

    def test_linspace(self):
        g = TimeGrid.linspace(0.5, 1.5, 20, 2.0)
        assert g.m == 20 and g.points[0] == 0.5 and g.points[-1] == 1.5


class TestSampling:
    def test_comonotone_rows_constant(self, grid2):
        s = sample_paths(ModelSpec("ComonotoneDriver", marginal="uniform"), 3, grid2, 1)
        assert s.values.shape == (3, 2)
        assert np.array_equal(s.values[:, 0], s.values[:, 1])

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: f"{m.kind}-{m.marginal}")
    def test_same_stream_bit_identical(self, model):
        g = TimeGrid((0.3, 0.7, 1.0), 1.0)
        a = sample_paths(model, 50, g, (4, 2))
        b = sample_paths(model, 50, g, (4, 2))
        assert np.array_equal(a.values, b.values)
        c = sample_paths(model, 50, g, (4, 3))
        assert not np.array_equal(a.values, c.values)

    def test_brownian_mean(self):
        s = sample_paths(ModelSpec("BrownianMotion"), 10_000, TimeGrid((0.5, 1.0), 1.0), 0)
        assert abs(s.values[:, 1].mean()) <= 4 / np.sqrt(10_000)

    def test_brownian_rejects_zero_time(self):
        with pytest.raises(ConfigError):
            TimeGrid((0.0, 1.0), 1.0)
        with pytest.raises(ConfigError):
            ModelSpec("BrownianMotion").marginal_cdf(0.0, 0.3)

    def test_brownian_increment_law(self):
        s = sample_paths(ModelSpec("BrownianMotion"), 20_000, TimeGrid((0.25, 1.0), 1.0), 3)
        c = np.corrcoef(s.values.T)[0, 1]
        assert abs(c - 0.5) < 0.03

    def test_ou_lag_correlation(self):
        s = sample_paths(ModelSpec("StationaryOUGaussian", rho=1.0), 20_000, TimeGrid((0.5, 1.0), 1.0), 3)
        assert abs(np.corrcoef(s.values.T)[0, 1] - np.exp(-0.5)) < 0.03

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: f"{m.kind}-{m.marginal}")
    def test_probability_integral_transform_uniform(self, model):
        n = 10_000
        s = sample_paths(model, n, TimeGrid((0.4, 1.0), 1.0), 17)
        u = model.marginal_cdf(1.0, s.values[:, 1])
        assert stats.kstest(u, "uniform").statistic <= 1.63 / np.sqrt(n)

    def test_comonotone_cdf_coupling(self):
        m = ModelSpec("ComonotoneDriver", marginal="normal", scale_slope=0.8)
        g = TimeGrid((0.1, 0.5, 0.9), 1.0)
        s = sample_paths(m, 200, g, 2)
        u = np.column_stack([m.marginal_cdf(t, s.values[:, i]) for i, t in enumerate(g.points)])
        assert np.max(np.ptp(u, axis=1)) <= 1e-12


class TestMarginals:
    def test_uniform_cdf(self):
        assert marginal_cdf(ModelSpec("ComonotoneDriver"), 0.3, 0.25) == pytest.approx(0.25)

    def test_brownian_cdf(self):
        bm = ModelSpec("BrownianMotion")
        assert marginal_cdf(bm, 4.0, 0.0) == pytest.approx(0.5)
        assert abs(marginal_cdf(bm, 1.0, 1.959964) - 0.975) <= 1e-6

    def test_quantiles(self):
        assert marginal_quantile(ModelSpec("ComonotoneDriver"), 0.5, 0.7) == pytest.approx(0.7)
        assert marginal_quantile(ModelSpec("StationaryOUGaussian"), 0.5, 0.5) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: f"{m.kind}-{m.marginal}")
    def test_quantile_round_trip(self, model):
        p = np.linspace(0.005, 0.995, 101)
        back = model.marginal_cdf(0.8, model.marginal_quantile(0.8, p))
        assert np.max(np.abs(back - p)) <= 1e-10

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_quantile_domain(self, p):
        with pytest.raises(ValueError):
            marginal_quantile(ModelSpec("ComonotoneDriver"), 0.5, p)


class TestJointCdf:
    def test_comonotone_min(self):
        assert joint_cdf(ModelSpec("ComonotoneDriver"), 0.2, 0.9, 0.3, 0.6) == pytest.approx(0.3)

    def test_independent_product(self):
        assert joint_cdf(ModelSpec("IndependentField"), 0.2, 0.9, 0.3, 0.6) == pytest.approx(0.18)

    def test_brownian_diagonal(self):
        bm = ModelSpec("BrownianMotion")
        for u in (-1.0, 0.0, 0.4, 2.0):
            assert joint_cdf(bm, 0.7, 0.7, u, u) == pytest.approx(marginal_cdf(bm, 0.7, u), abs=1e-14)

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: f"{m.kind}-{m.marginal}")
    def test_margin_recovered(self, model):
        for u in (-0.5, 0.2, 0.9):
            assert joint_cdf(model, 0.3, 0.9, u, np.inf) == pytest.approx(marginal_cdf(model, 0.3, u), abs=1e-12)

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: f"{m.kind}-{m.marginal}")
    def test_frechet_bounds_on_lattice(self, model):
        t, s = 0.35, 0.8
        pu = np.linspace(0.025, 0.975, 20)
        U, V = np.meshgrid(model.marginal_quantile(t, pu), model.marginal_quantile(s, pu), indexing="ij")
        H = joint_cdf(model, t, s, U, V)
        Gu, Gv = model.marginal_cdf(t, U), model.marginal_cdf(s, V)
        assert np.all(H >= np.maximum(Gu + Gv - 1, 0) - 1e-12)
        assert np.all(H <= np.minimum(Gu, Gv) + 1e-12)


class TestBivariateNormal:
    def test_sheppard_orthant(self):
        for r in (-0.9, -0.3, 0.0, 0.5, 0.99):
            assert bvn_cdf(0.0, 0.0, r) == pytest.approx(0.25 + np.arcsin(r) / (2 * np.pi), abs=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-4, 4), st.floats(-4, 4), st.floats(-0.95, 0.95))
    def test_against_scipy(self, h, k, r):
        ref = stats.multivariate_normal(mean=[0, 0], cov=[[1, r], [r, 1]]).cdf([h, k])
        assert bvn_cdf(h, k, r) == pytest.approx(ref, abs=2e-5)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-0.99, 0.99))
    def test_symmetry_and_bounds(self, h, k, r):
        a = bvn_cdf(h, k, r)
        assert a == pytest.approx(bvn_cdf(k, h, r), abs=1e-15)
        Ph, Pk = stats.norm.cdf(h), stats.norm.cdf(k)
        assert max(Ph + Pk - 1, 0) - 1e-14 <= a <= min(Ph, Pk) + 1e-14
