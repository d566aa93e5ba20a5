import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from corisk.copulas import (ClaytonCopula, GaussianCopula, GumbelCopula, IndependenceCopula, MixtureCopula)
from corisk.errors import InputError, InsufficientDataError
from corisk.estimation import (TABLE_REGIONS, EmpiricalCopula, cube_region, fit_copula, fit_mixed_copula,
                               fitting_error, mixture_param_names, region_points)

TRUE_WEIGHTS = (0.3, 0.5)


def true_mixture():
    return MixtureCopula(TRUE_WEIGHTS, GaussianCopula.equicorrelated(0.08, 3), GumbelCopula(2.6, 3),
                         ClaytonCopula(9.4, 3))


@pytest.fixture(scope="module")
def mixture_data():
    return true_mixture().sample(3000, seed=2024)


@pytest.fixture(scope="module")
def mixed_fit(mixture_data):
    return fit_mixed_copula(mixture_data)


def brute_force_cdf(points, u):
    return np.mean(np.all(points[None, :, :] <= u[:, None, :], axis=2), axis=1)


class TestEmpiricalCopula:
    POINTS = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.1, 0.2], [0.9, 0.9, 0.9]])

    def test_hand_count(self):
        # dominates the first three rows, not the fourth
        assert EmpiricalCopula(self.POINTS).cdf([0.7, 0.5, 0.6]) == 0.75

    def test_corners(self):
        c = EmpiricalCopula(self.POINTS)
        assert c.cdf([1.0, 1.0, 1.0]) == 1.0
        assert c.cdf([0.05, 0.05, 0.05]) == 0.0

    def test_ties_count_as_dominated(self):
        assert EmpiricalCopula(self.POINTS).cdf([0.1, 0.2, 0.3]) == 0.25

    @settings(max_examples=60)
    @given(pts=arrays(np.float64, st.tuples(st.integers(1, 150), st.integers(2, 4)),
                      elements=st.floats(0.01, 0.99)),
           seed=st.integers(0, 1000))
    def test_matches_brute_force(self, pts, seed):
        u = np.random.default_rng(seed).uniform(0, 1, (40, pts.shape[1]))
        k = min(5, pts.shape[0])
        u[:k] = pts[:k]  # exact ties with sample points
        assert_allclose(EmpiricalCopula(pts).cdf(u), brute_force_cdf(pts, u), rtol=0, atol=0)

    def test_large_sample_path(self):
        rng = np.random.default_rng(9)
        pts = rng.uniform(size=(20_500, 3))
        u = rng.uniform(size=(300, 3))
        assert_allclose(EmpiricalCopula(pts).cdf(u), brute_force_cdf(pts, u), rtol=0, atol=0)

    def test_monotone(self):
        pts = np.random.default_rng(1).uniform(size=(500, 3))
        base = np.random.default_rng(2).uniform(size=(200, 3))
        up = np.minimum(base + np.random.default_rng(3).uniform(0, 0.2, (200, 3)), 1.0)
        c = EmpiricalCopula(pts)
        assert np.all(c.cdf(up) >= c.cdf(base))

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            EmpiricalCopula(self.POINTS).cdf([0.5, 0.5])


class TestSingleFamily:
    @pytest.mark.parametrize("copula,name,value", [(GumbelCopula(2.0, 3), "theta", 2.0),
                                                    (ClaytonCopula(3.0, 3), "theta", 3.0),
                                                    (GaussianCopula.equicorrelated(0.5, 3), "rho_12", 0.5)],
                             ids=["gumbel", "clayton", "gaussian"])
    def test_recovers_parameter(self, copula, name, value):
        u = copula.sample(3000, seed=3)
        family = type(copula).__name__.replace("Copula", "").lower()
        fit = fit_copula(u, family)
        assert fit.converged and fit.information_pd
        se = fit.std_errors[name]
        assert 0 < se < 0.2 * value
        assert abs(fit.params[name] - value) <= 4 * se
        assert_allclose(fit.loglik, np.sum(fit.copula.logpdf(u)), rtol=1e-8)

    def test_unknown_family(self):
        with pytest.raises(InputError):
            fit_copula(np.random.default_rng(0).uniform(size=(200, 3)), "frank")


class TestMixedFit:
    def test_parameter_names(self, mixed_fit):
        assert list(mixed_fit.params) == mixture_param_names(3)
        assert mixture_param_names(3) == ["rho_12", "rho_13", "rho_23", "theta_gumbel", "theta_clayton", "a1", "a2"]

    def test_recovers_truth(self, mixed_fit, mixture_data):
        true_ll = float(np.sum(true_mixture().logpdf(mixture_data)))
        assert mixed_fit.loglik >= true_ll - 1e-6
        assert abs(mixed_fit.params["a1"] - TRUE_WEIGHTS[0]) <= 0.1
        assert abs(mixed_fit.params["a2"] - TRUE_WEIGHTS[1]) <= 0.1

    def test_loglik_is_recomputable(self, mixed_fit, mixture_data):
        assert_allclose(mixed_fit.loglik, np.sum(mixed_fit.copula.logpdf(mixture_data)), rtol=0, atol=1e-8)

    def test_constraints_and_convergence(self, mixed_fit):
        p = mixed_fit.params
        assert mixed_fit.converged and mixed_fit.gradient_norm < 1e-5
        assert p["theta_gumbel"] > 1 and p["theta_clayton"] > 0
        assert p["a1"] > 0 and p["a2"] > 0 and p["a1"] + p["a2"] < 1
        assert np.all(np.linalg.eigvalsh(mixed_fit.copula.components[0].corr) > 0)

    def test_standard_errors(self, mixed_fit):
        assert mixed_fit.information_pd
        se = np.array(list(mixed_fit.std_errors.values()))
        assert np.all(np.isfinite(se)) and np.all(se > 0)

    def test_dominates_single_families(self, mixed_fit, mixture_data):
        for family in ("gaussian", "gumbel", "clayton"):
            assert mixed_fit.loglik >= fit_copula(mixture_data, family).loglik - 1e-6

    def test_dominates_on_pure_component_data(self):
        u = GumbelCopula(2.0, 3).sample(1000, seed=8)
        mixed = fit_mixed_copula(u)
        assert mixed.loglik >= fit_copula(u, "gumbel").loglik - 1e-6

    def test_fitting_error_ordering(self, mixed_fit, mixture_data):
        emp = EmpiricalCopula(mixture_data)
        gauss = fit_copula(mixture_data, "gaussian")
        for lo, hi in (TABLE_REGIONS["[0,1]"], TABLE_REGIONS["[0.8,1]"]):
            region = cube_region(lo, hi, 3)
            assert fitting_error(mixed_fit.copula, emp, region) <= fitting_error(gauss.copula, emp, region)


class TestPreconditions:
    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            fit_mixed_copula(np.random.default_rng(0).uniform(size=(10, 3)))

    def test_constant_column(self):
        u = np.random.default_rng(0).uniform(size=(300, 3))
        u[:, 1] = 0.5
        with pytest.raises(InputError, match="constant column"):
            fit_copula(u, "gaussian")

    def test_outside_open_cube(self):
        u = np.random.default_rng(0).uniform(size=(300, 3))
        u[0, 0] = 1.0
        with pytest.raises(InputError):
            fit_copula(u, "clayton")


@pytest.mark.slow
def test_pure_gaussian_data_selects_gaussian_weight():
    hits = 0
    for seed in range(50):
        u = GaussianCopula.equicorrelated(0.5, 3).sample(3000, seed=seed)
        hits += fit_mixed_copula(u).params["a1"] > 0.9
    assert hits >= 40, hits


class TestFittingError:
    def test_self_is_zero(self):
        emp = EmpiricalCopula(np.random.default_rng(4).uniform(size=(500, 3)))
        assert fitting_error(emp, emp, cube_region(0, 1, 3), n_mc=4096) == 0.0

    def test_independence_bound(self):
        emp = EmpiricalCopula(np.random.default_rng(5).uniform(size=(10_000, 3)))
        assert fitting_error(IndependenceCopula(3), emp, cube_region(0, 1, 3)) <= 0.01

    @pytest.mark.parametrize("name", sorted(TABLE_REGIONS))
    def test_seed_invariance(self, name):
        data = true_mixture().sample(2000, seed=6)
        emp = EmpiricalCopula(data)
        model = GaussianCopula.equicorrelated(0.5, 3)
        region = cube_region(*TABLE_REGIONS[name], 3)
        errs, ses = [], []
        for seed in (0, 1):
            pts = region_points(region, 1 << 16, seed)
            sq = (model.cdf(pts) - emp.cdf(pts)) ** 2
            batch = np.array([b.mean() for b in np.array_split(sq, 32)])
            err = fitting_error(model, emp, region, seed=seed)
            assert_allclose(err, math.sqrt(sq.mean()), rtol=1e-12)
            errs.append(err)
            ses.append(batch.std(ddof=1) / math.sqrt(32) / (2 * err))
        assert abs(errs[0] - errs[1]) <= 2 * math.hypot(*ses)

    def test_deterministic(self):
        emp = EmpiricalCopula(np.random.default_rng(4).uniform(size=(500, 3)))
        a = fitting_error(IndependenceCopula(3), emp, cube_region(0.5, 1, 3), seed=3)
        assert a == fitting_error(IndependenceCopula(3), emp, cube_region(0.5, 1, 3), seed=3)

    @pytest.mark.parametrize("region", [[(0.5, 0.5)] * 3, [(0.2, 0.1)] * 3, [(-0.1, 0.5)] * 3, [0.1, 0.2]])
    def test_empty_or_invalid_region(self, region):
        emp = EmpiricalCopula(np.random.default_rng(4).uniform(size=(200, 3)))
        with pytest.raises(InputError):
            fitting_error(IndependenceCopula(3), emp, region)
