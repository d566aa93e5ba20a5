import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, optimize

from corisk.errors import InputError
from corisk.measures import JointModel, MeasureRequest, mcoes, mcovar, mmme
from corisk.models import (GumbelExponential, ImpliedCopula, MultivariatePareto, mcovar_analytic_pareto,
                           pareto_conditional_survival)


def independent_exponential(dim=3):
    return GumbelExponential({(i,): 1.0 for i in range(dim)}, dim)


def conditional_survival(model, x, thresholds):
    """``P(X_1 > x | X_j > t_j)`` straight from the joint survival."""
    lo = model.marginals()[0].lower
    num = model.joint_survival(np.array([max(x, lo), *thresholds]))
    return num / model.joint_survival(np.array([lo, *thresholds]))


class TestJointSurvival:
    def test_pareto_corner(self):
        assert MultivariatePareto([1, 1, 1], 5).joint_survival([1.0, 1.0, 1.0]) == 1.0

    def test_pareto_formula(self):
        assert_allclose(MultivariatePareto([1, 1, 1], 5).joint_survival([2.0, 2.0, 2.0]), 4.0 ** -5, rtol=1e-15)

    def test_independent_gumbel_exponential(self):
        assert_allclose(independent_exponential().joint_survival([1.0, 1.0, 1.0]), math.exp(-3.0), rtol=1e-15)

    def test_gumbel_exponential_interactions(self):
        g = GumbelExponential({(0,): 1.0, (1,): 2.0, (0, 1): 0.5}, 2)
        assert_allclose(g.joint_survival([1.5, 0.4]), math.exp(-(1.5 + 0.8 + 0.5 * 0.6)), rtol=1e-15)

    @given(x=st.lists(st.floats(1.0, 50.0), min_size=3, max_size=3), d=st.floats(0.0, 5.0),
           j=st.integers(0, 2))
    def test_pareto_survival_is_bounded_and_decreasing(self, x, d, j):
        m = MultivariatePareto([1, 1, 1], 5)
        y = list(x)
        y[j] += d
        s0, s1 = m.joint_survival(x), m.joint_survival(y)
        assert 0.0 <= s1 <= s0 <= 1.0

    def test_marginals_are_univariate_sections(self):
        m = MultivariatePareto([1.0, 2.0, 3.0], 4.0)
        for i, marg in enumerate(m.marginals()):
            x = np.array([1.0, 2.0, 3.0])
            x[i] = 7.5
            assert_allclose(m.joint_survival(x), marg.sf(7.5), rtol=1e-14)

    def test_errors(self):
        with pytest.raises(InputError):
            MultivariatePareto([1, 1, 1], 5).joint_survival([0.5, 1.0, 1.0])
        with pytest.raises(InputError):
            MultivariatePareto([1, 1, 1], 5).joint_survival([1.0, 1.0])
        with pytest.raises(InputError):
            independent_exponential().joint_survival([-1.0, 1.0, 1.0])
        with pytest.raises(InputError):
            GumbelExponential({(0,): 1.0}, 2)
        with pytest.raises(InputError):
            MultivariatePareto([1, -1], 5)


class TestImpliedCopula:
    def test_independence_survival(self):
        assert_allclose(ImpliedCopula(independent_exponential()).survival([0.95, 0.95, 0.95]), 1.25e-4, rtol=1e-12)

    def test_pareto_two_step(self):
        v = 0.5 ** -0.2
        expected = (3 * v - 2) ** -5.0
        got = ImpliedCopula(MultivariatePareto([1, 1, 1], 5)).survival([0.5, 0.5, 0.5])
        assert_allclose(got, expected, rtol=1e-14)

    def test_boundary_values(self):
        c = ImpliedCopula(MultivariatePareto([1, 2, 3], 5))
        assert c.survival([0.0, 0.0, 0.0]) == 1.0
        assert c.survival([1.0, 0.3, 0.2]) == 0.0
        assert_allclose(c.survival([0.0, 0.7, 0.0]), 0.3, rtol=1e-14)

    def test_cdf_of_independence(self):
        c = ImpliedCopula(independent_exponential())
        assert_allclose(c.cdf([0.3, 0.5, 0.9]), 0.3 * 0.5 * 0.9, rtol=1e-12)

    def test_cdf_has_uniform_margins(self):
        c = ImpliedCopula(GumbelExponential.symmetric(1.0, 0.7))
        assert_allclose(c.cdf([0.37, 1.0, 1.0]), 0.37, rtol=1e-12)


class TestParetoMcovar:
    # Given X_2 > v_2, X_3 > v_3 the target is a shifted Pareto: X_1 + c ~ Pa(1 + c, a) with c = v_2 + v_3 - 2
    @staticmethod
    def shifted(p, a=5.0):
        v = [(1 - q) ** (-1 / a) for q in p[1:]]
        return sum(v) - 2.0

    @pytest.mark.parametrize("p", [(0.95, 0.95, 0.95), (0.5, 0.9, 0.6), (0.99, 0.55, 0.75), (0.1, 0.3, 0.2)])
    def test_closed_form(self, p):
        c = self.shifted(p)
        expected = (1 + c) * (1 - p[0]) ** -0.2 - c
        model = MultivariatePareto([1, 1, 1], 5)
        assert_allclose(mcovar_analytic_pareto(model, p), expected, rtol=1e-10)

    @pytest.mark.parametrize("p", [(0.95, 0.95, 0.95), (0.5, 0.9, 0.6), (0.3, 0.75, 0.85)])
    def test_matches_measures_module(self, p):
        model = MultivariatePareto([1, 1, 1], 5)
        req = MeasureRequest(JointModel.from_analytic(model), 0, p[0], p[1:])
        assert_allclose(mcovar(req), mcovar_analytic_pareto(model, p), rtol=1e-8)

    @pytest.mark.parametrize("p", [(0.95, 0.95, 0.95), (0.6, 0.7, 0.8)])
    def test_mcoes_and_mmme_closed_forms(self, p):
        a = 5.0
        model = MultivariatePareto([1, 1, 1], a)
        req = MeasureRequest(JointModel.from_analytic(model), 0, p[0], p[1:], (0.5, 0.5))
        c = self.shifted(p)
        q = (1 + c) * (1 - p[0]) ** (-1 / a) - c
        assert_allclose(mcoes(req), a / (a - 1) * (q + c) - c, rtol=1e-7)
        big_a = req.mmme_threshold()
        assert_allclose(mmme(req), (1 + c) ** a * (big_a + c) ** (1 - a) / (a - 1), rtol=1e-7)

    def test_weak_conditioning_gives_marginal_var(self):
        model = MultivariatePareto([1, 1, 1], 5)
        assert_allclose(mcovar_analytic_pareto(model, (0.95, 1e-12, 1e-12)), 20 ** 0.2, rtol=1e-10)

    def test_conditional_survival_is_one_at_corner(self):
        model = MultivariatePareto([1, 1, 1], 5)
        assert pareto_conditional_survival(model, 1.0, (0.9, 0.8)) == pytest.approx(1.0, abs=1e-15)

    def test_level_errors(self):
        with pytest.raises(InputError):
            mcovar_analytic_pareto(MultivariatePareto([1, 1, 1], 5), (0.9, 0.9))
        with pytest.raises(InputError):
            mcovar_analytic_pareto(MultivariatePareto([1, 1, 1], 5), (0.9, 1.0, 0.9))


@pytest.mark.parametrize("model", [MultivariatePareto([1.0, 2.0, 1.5], 4.0), GumbelExponential.symmetric(1.0, 0.5),
                                   GumbelExponential({(0,): 10, (1,): 10, (2,): 10, (0, 1): 100, (1, 2): 100,
                                                      (0, 2): 100, (0, 1, 2): 100}, 3)],
                         ids=["pareto", "gumbel_exp", "gumbel_exp_strong"])
@pytest.mark.parametrize("p", [(0.9, 0.8, 0.7), (0.5, 0.6, 0.95)])
def test_measures_match_direct_joint_survival(model, p):
    req = MeasureRequest(JointModel.from_analytic(model), 0, p[0], p[1:])
    margins = model.marginals()
    t = [margins[j].quantile(q) for j, q in zip((1, 2), p[1:])]
    lo = margins[0].lower
    hi = float(margins[0].quantile(1 - 1e-14))
    q = optimize.brentq(lambda x: conditional_survival(model, x, t) - (1 - p[0]), lo, hi, xtol=1e-14, rtol=1e-15)
    assert_allclose(mcovar(req), q, rtol=1e-8)
    tail = integrate.quad(lambda x: conditional_survival(model, x, t), q, np.inf, epsabs=1e-13, epsrel=1e-12)[0]
    assert_allclose(mcoes(req), q + tail / (1 - p[0]), rtol=1e-7)


def test_pareto_is_right_tail_increasing():
    model = MultivariatePareto([1, 1, 1], 5)
    x1 = np.linspace(1.0, 8.0, 15)
    grid = np.linspace(1.0, 10.0, 25)
    for x in x1:
        surv = np.array([[conditional_survival(model, x, (a, b)) for b in grid] for a in grid])
        assert np.all(np.diff(surv, axis=0) >= -1e-15)
        assert np.all(np.diff(surv, axis=1) >= -1e-15)


def test_whr_ratio_of_gumbel_exponential_pair():
    pairs = [(0, 1), (0, 2), (1, 2), (0, 1, 2)]
    strong = GumbelExponential({**{(i,): 10 for i in range(3)}, **{k: 100 for k in pairs}}, 3)
    weak = GumbelExponential({**{(i,): 10 for i in range(3)}, **{k: 10 for k in pairs}}, 3)
    g = np.linspace(0.0, 0.3, 12)
    x = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    ratio = (weak.joint_survival(x) / strong.joint_survival(x)).reshape(12, 12, 12)
    for axis in range(3):
        assert np.all(np.diff(ratio, axis=axis) >= 0.0)
