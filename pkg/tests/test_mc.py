import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from corisk.copulas import GumbelCopula, IndependenceCopula
from corisk.errors import ConditioningError, InputError
from corisk.marginals import Exponential, Gamma
from corisk.measures import JointModel, MeasureRequest, mcoes, mcovar, mmme
from corisk.mc import (MIN_EFFECTIVE, conditional_sample, mc_mcoes, mc_mcovar, mc_mmme, oracle_fixtures,
                       run_oracle_suite)


def request(copula, target=Exponential(1.0), p1=0.95, tail=(0.9, 0.9)):
    return MeasureRequest(JointModel(copula, (target, Exponential(1.0), Exponential(1.0))), 0, p1, tail)


def test_independence_mcovar():
    req = request(IndependenceCopula(3))
    est = mc_mcovar(req, n=10_000_000, seed=1)
    assert abs(est.value + math.log(0.05)) <= 3 * est.std_error
    assert 0 < est.n_effective <= est.n_total and est.std_error > 0


@pytest.mark.parametrize("estimator,exact,target", [(mc_mcovar, mcovar, Exponential(1.0)),
                                                    (mc_mcoes, mcoes, Gamma(1.0, 1.0)),
                                                    (mc_mmme, mmme, Exponential(1.0))],
                         ids=["mcovar", "mcoes", "mmme"])
def test_gumbel_fixture_within_three_se(estimator, exact, target):
    req = request(GumbelCopula(2.0, 3), target=target)
    est = estimator(req, n=10_000_000, seed=2)
    assert abs(est.value - exact(req)) <= 3 * est.std_error


def test_rarity_error():
    req = request(GumbelCopula(2.0, 3), tail=(0.9999, 0.9999))
    with pytest.raises(ConditioningError, match="conditioning event too rare"):
        mc_mcovar(req, n=100_000)


def test_minimum_sample_size():
    with pytest.raises(InputError):
        mc_mcoes(request(GumbelCopula(2.0, 3)), n=99_999)


def test_deterministic_and_worker_invariant():
    req = request(GumbelCopula(2.0, 3))
    a = mc_mcoes(req, n=600_000, seed=5)
    b = mc_mcoes(req, n=600_000, seed=5)
    c = mc_mcoes(req, n=600_000, seed=5, workers=4)
    assert a == b == c
    d = mc_mcoes(req, n=600_000, seed=6)
    assert d.value != a.value


def test_conditional_sample_event():
    cs = conditional_sample(GumbelCopula(2.0, 3), 1, (0.8, 0.7), 200_000, seed=3)
    assert np.all(cs.u[:, 0] > 0.8) and np.all(cs.u[:, 2] > 0.7)
    assert cs.n_effective >= MIN_EFFECTIVE


def test_shared_sample_must_match_request():
    req = request(GumbelCopula(2.0, 3))
    cs = conditional_sample(GumbelCopula(2.0, 3), 0, (0.8, 0.8), 200_000)
    with pytest.raises(InputError):
        mc_mmme(req, sample=cs)


@pytest.mark.parametrize("estimator", [mc_mcovar, mc_mcoes, mc_mmme], ids=["mcovar", "mcoes", "mmme"])
def test_standard_error_scaling(estimator):
    req = request(GumbelCopula(2.0, 3), target=Gamma(3.0, 1.0))
    seeds = range(8)
    se1 = np.mean([estimator(req, n=1_000_000, seed=s).std_error for s in seeds])
    se2 = np.mean([estimator(req, n=2_000_000, seed=100 + s).std_error for s in seeds])
    assert_allclose(se2 / se1, 1 / math.sqrt(2), rtol=0.2)


def test_oracle_fixture_grid():
    names = [(c, m) for c, _, m, _ in oracle_fixtures()]
    assert len(names) == 9 and len(set(names)) == 9


def test_tampered_suite_fails():
    checks = run_oracle_suite(n=2_000_000, tamper=True)
    failed = [c for c in checks if not c.passed]
    assert failed and all(c.measure == "mcovar" for c in failed)
