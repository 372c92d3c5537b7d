import math

import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import t as student_t
from scipy.integrate import quad

from flashlab.grid import CellState, VoltageGrid
from flashlab.channel import bin_cells, sample_page
from flashlab.models.cdf import (StateModel, enforce_constraints, gcdf,
                                 kl_divergence, model_density, ncdf,
                                 pooled_kl, state_cdf, tcdf)
from flashlab.models.fitting import (PowerLawParams, default_init, fit_dynamic,
                                     fit_power_law, fit_static,
                                     load_models_json, models_from_dict,
                                     models_to_dict, predict_static,
                                     save_models_json)
from flashlab.models.simplex import NanObjective, nelder_mead
from flashlab.models.tables import default_tables


TAB = default_tables()

_gcdf, _ncdf, _tcdf = gcdf, ncdf, tcdf


def gcdf(m, v, tables=None):
    return _gcdf(v, m.mu, m.sigma, tables)


def ncdf(m, v, tables=None):
    return _ncdf(v, m.mu, m.sigma, m.alpha, m.beta, tables)


def tcdf(m, v, tables=None):
    return _tcdf(v, m.mu, m.sigma, m.alpha, m.beta, tables)


class TestGcdf:
    def test_matches_scipy_normal_cdf(self):
        m = StateModel("gaussian", 12.0, 7.0)
        z = np.linspace(-40, 60, 300)
        expect = ndtr((z - 12.0) / 7.0)
        assert np.allclose(gcdf(m, z, TAB), expect, atol=2e-5)

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            StateModel("gaussian", 0.0, -1.0)


class TestNcdf:
    def nl_density(self, m):
        # oracle: normal-Laplace density = convolution of N(mu, sigma)
        # with an asymmetric Laplace, integrated numerically
        def f(x):
            a, b, mu, s = m.alpha, m.beta, m.mu, m.sigma
            w = a * b / (a + b)

            def integrand(y):
                lap = math.exp(-a * (x - y)) if y <= x else math.exp(-b * (y - x))
                return w * lap * math.exp(-0.5 * ((y - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))
            return quad(integrand, mu - 12 * s, mu + 12 * s, limit=200)[0]
        return f

    def test_matches_numeric_convolution(self):
        m = StateModel("normal_laplace", 0.0, 5.0, 0.4, 0.6)
        dens = self.nl_density(m)
        for lo, hi in [(-8.0, -2.0), (-2.0, 3.0), (3.0, 9.0)]:
            mass = quad(dens, lo, hi, limit=200)[0]
            got = float((ncdf(m, np.array([hi]), TAB) - ncdf(m, np.array([lo]), TAB))[0])
            assert got == pytest.approx(mass, abs=2e-3)

    def test_median_at_mu_when_symmetric(self):
        m = StateModel("normal_laplace", 3.0, 4.0, 0.5, 0.5)
        assert float(ncdf(m, np.array([3.0]), TAB)[0]) == pytest.approx(0.5, abs=1e-3)

    def test_gaussian_limit(self):
        m = StateModel("normal_laplace", 0.0, 5.0, 50.0, 50.0)
        z = np.linspace(-20, 20, 41)
        assert np.allclose(ncdf(m, z, TAB), ndtr(z / 5.0), atol=1e-4)

    def test_monotone_and_bounded(self):
        m = StateModel("normal_laplace", 0.0, 3.0, 0.2, 1.5)
        z = np.linspace(-60, 60, 500)
        c = ncdf(m, z, TAB)
        assert np.all(np.diff(c) >= -1e-12)
        assert np.all((c >= 0) & (c <= 1))


class TestTcdf:
    def test_matches_scipy_on_grid_nus(self):
        for nu in (0.5, 1.0, 2.0, 5.0, 12.0, 50.0):
            m = StateModel("student_t", 1.0, 4.0, nu, nu)
            z = np.linspace(-30, 32, 200)
            expect = student_t.cdf((z - 1.0) / 4.0, df=nu)
            assert np.allclose(tcdf(m, z, TAB), expect, atol=3e-4), nu

    def test_interpolates_between_grid_nus(self):
        m = StateModel("student_t", 0.0, 1.0, 4.0, 4.0)
        z = np.linspace(-6, 6, 50)
        expect = student_t.cdf(z, df=4.0)
        assert np.allclose(tcdf(m, z, TAB), expect, atol=5e-3)

    def test_asymmetric_tail_selection(self):
        # below mu the beta dof applies, above mu the alpha dof
        m = StateModel("student_t", 0.0, 1.0, 50.0, 1.0)
        left = float(tcdf(m, np.array([-4.0]))[0])
        right = float(tcdf(m, np.array([4.0]))[0])
        assert left == pytest.approx(student_t.cdf(-4.0, df=1.0), abs=1e-3)
        assert 1 - right == pytest.approx(student_t.sf(4.0, df=50.0), abs=1e-3)


class TestDensity:
    def models(self):
        return {
            CellState.ER: StateModel("student_t", -20.0, 17.0, 5.0, 5.0, 1e-3),
            CellState.P1: StateModel("student_t", 110.0, 11.0, 5.0, 5.0, 1e-3),
            CellState.P2: StateModel("student_t", 183.0, 11.0, 4.0, 4.0, 0.0),
            CellState.P3: StateModel("student_t", 260.0, 11.0, 4.0, 4.0, 0.0),
        }

    def test_rows_sum_to_one(self):
        dens = model_density(self.models(), VoltageGrid(), TAB)
        assert dens.shape == (4, 304)
        assert np.allclose(dens.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_sampled_histogram(self):
        st = sample_page(self.models(), 500_000, seed=21)
        hist = bin_cells(st)
        dens = model_density(self.models(), VoltageGrid(), TAB)
        assert pooled_kl(hist.densities(), dens) < 2e-3

    def test_kl_zero_iff_identical(self):
        dens = model_density(self.models(), VoltageGrid(), TAB)
        assert kl_divergence(dens[0], dens[0]) == pytest.approx(0.0, abs=1e-12)
        assert kl_divergence(dens[0], dens[1]) > 0.1

    def test_constraints_enforced(self):
        ms = enforce_constraints(self.models())
        assert ms[CellState.P2].lam == 0.0
        assert ms[CellState.P3].lam == 0.0
        assert ms[CellState.ER].beta == ms[CellState.ER].alpha
        assert ms[CellState.P3].alpha == ms[CellState.P3].beta


class TestNelderMead:
    def test_quadratic(self):
        x, f, it, conv = nelder_mead(lambda v: float((v[0] - 3) ** 2 + (v[1] + 1) ** 2),
                                     np.array([0.0, 0.0]))
        assert conv
        assert np.allclose(x, [3.0, -1.0], atol=1e-5)

    def test_rosenbrock(self):
        def rosen(v):
            return float(100 * (v[1] - v[0] ** 2) ** 2 + (1 - v[0]) ** 2)
        x, f, it, conv = nelder_mead(rosen, np.array([-1.2, 1.0]), max_iter=5000)
        assert np.allclose(x, [1.0, 1.0], atol=1e-3)

    def test_nan_objective_raises(self):
        with pytest.raises(NanObjective):
            nelder_mead(lambda v: float("nan"), np.array([1.0]))


class TestPowerLaw:
    def test_exact_recovery(self):
        true = PowerLawParams(3.2, 0.7, -4.0)
        xs = np.array([1e3, 3e3, 6e3, 1e4])
        pts = [(x, true.predict(x)) for x in xs]
        fit = fit_power_law(pts)
        for x in (2e4, 5e4):
            assert fit.predict(x) == pytest.approx(true.predict(x), rel=1e-6)

    def test_negative_exponent(self):
        true = PowerLawParams(500.0, -0.5, 2.0)
        pts = [(x, true.predict(x)) for x in (1e3, 2e3, 5e3, 1e4)]
        fit = fit_power_law(pts)
        assert fit.predict(2e4) == pytest.approx(true.predict(2e4), rel=1e-5)

    def test_constant_trajectory(self):
        fit = fit_power_law([(1e3, 5.0), (5e3, 5.0), (1e4, 5.0)])
        assert fit.predict(2e4) == pytest.approx(5.0)

    def test_zero_pec_points_dropped(self):
        true = PowerLawParams(2.0, 0.8, 1.0)
        pts = [(0.0, 123.0)] + [(x, true.predict(x)) for x in (1e3, 5e3, 1e4)]
        fit = fit_power_law(pts)
        assert fit.predict(2e4) == pytest.approx(true.predict(2e4), rel=1e-5)

    def test_requires_three_points(self):
        with pytest.raises(ValueError):
            fit_power_law([(1e3, 1.0), (2e3, 2.0)])


class TestStaticFit:
    def test_recovers_means_small(self):
        models = TestDensity().models()
        st = sample_page(models, 300_000, seed=30)
        fr = fit_static(bin_cells(st), "student_t")
        assert fr.kl_error < 0.01
        for s in CellState:
            assert fr.params[s].mu == pytest.approx(models[s].mu, abs=1.0)

    def test_gaussian_has_no_misprogram_weight(self):
        models = TestDensity().models()
        st = sample_page(models, 100_000, seed=31)
        init = default_init(bin_cells(st), "gaussian")
        assert all(m.lam == 0.0 for m in init.values())


class TestDynamic:
    def test_predict_static_clamps_bad_sigma(self):
        dyn = {}
        family = "gaussian"
        for st in CellState:
            dyn[(st.name, "mu")] = PowerLawParams(0.0, 1.0, 100.0 + 50 * st)
            dyn[(st.name, "sigma")] = PowerLawParams(-1.0, 0.5, 0.0)  # negative
        models, clamped = predict_static(dyn, 1e4, family)
        assert clamped
        assert all(m.sigma > 0 for m in models.values())


class TestSerialization:
    def test_json_round_trip(self, tmp_path):
        models = TestDensity().models()
        p = tmp_path / "m.json"
        save_models_json(models, p)
        back = load_models_json(p)
        for s in CellState:
            assert back[s] == models[s]

    def test_dict_round_trip(self):
        models = TestDensity().models()
        assert models_from_dict(models_to_dict(models)) == models
