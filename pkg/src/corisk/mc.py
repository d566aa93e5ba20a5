"""Monte Carlo oracles for the conditional risk measures.

Samples are drawn from the copula in fixed blocks seeded by
``SeedSequence([seed, block])`` (the scheme of ``Copula.sample``), filtered by
rejection to the event that every conditioning coordinate exceeds its level,
and merged in block order. The result therefore does not depend on the
number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .copulas import SAMPLE_BLOCK, Copula
from .errors import ConditioningError, InputError
from .measures import JointModel, MeasureRequest

MIN_EFFECTIVE = 1000
MIN_SAMPLES = 100_000
N_BATCHES = 32
Z95 = 1.96


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_effective: int
    n_total: int
    seed: int


@dataclass(frozen=True)
class ConditionalSample:
    """Copula rows inside the exceedance event, in generation order."""

    u: np.ndarray
    n_total: int
    seed: int
    target: int
    p_tail: tuple[float, ...]

    @property
    def n_effective(self) -> int:
        return int(self.u.shape[0])

    def losses(self, joint: JointModel) -> np.ndarray:
        """Target losses of the kept rows under the target marginal."""
        col = np.clip(self.u[:, self.target], 1e-300, 1.0 - 1e-16)
        return np.asarray(joint.marginals[self.target].quantile(col), dtype=float)


def conditional_sample(copula: Copula, target: int, p_tail: Sequence[float], n: int, seed: int = 0,
                       workers: int = 1) -> ConditionalSample:
    """Draw ``n`` copula rows and keep those with ``U_j > p_j`` for all ``j != target``."""
    if not isinstance(copula, Copula):
        raise InputError("Monte Carlo sampling needs a parametric copula")
    n = int(n)
    if n < MIN_SAMPLES:
        raise InputError(f"Monte Carlo oracles need at least {MIN_SAMPLES} samples")
    others = [j for j in range(copula.dim) if j != target]
    levels = np.asarray(p_tail, dtype=float)
    if levels.size != len(others):
        raise InputError(f"need {len(others)} tail levels")
    sizes = [min(SAMPLE_BLOCK, n - start) for start in range(0, n, SAMPLE_BLOCK)]

    def block(b: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        u = copula._sample_block(rng, sizes[b])
        keep = np.all(u[:, others] > levels, axis=1)
        return u[keep]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(block, range(len(sizes))))
    else:
        parts = [block(b) for b in range(len(sizes))]
    kept = np.concatenate(parts, axis=0)
    if kept.shape[0] < MIN_EFFECTIVE:
        raise ConditioningError(
            f"conditioning event too rare for requested n: {kept.shape[0]} of {n} samples kept")
    return ConditionalSample(kept, n, int(seed), int(target), tuple(float(p) for p in levels))


def _sample_for(req: MeasureRequest, n: int, seed: int, workers: int,
                sample: ConditionalSample | None) -> ConditionalSample:
    if sample is not None:
        if sample.target != req.target or sample.p_tail != req.p_tail:
            raise InputError("supplied conditional sample does not match the request")
        return sample
    return conditional_sample(req.joint.dependence, req.target, req.p_tail, n, seed, workers)


def _upper_quantile(sorted_y: np.ndarray, p: float) -> float:
    k = int(math.ceil(p * sorted_y.size - 1e-9))
    return float(sorted_y[min(max(k, 1), sorted_y.size) - 1])


def _tail_mean(y: np.ndarray, p: float) -> float:
    ys = np.sort(y)
    k = int(math.ceil(p * ys.size - 1e-9))
    return float(ys[k:].mean()) if k < ys.size else float(ys[-1])


def _batch_se(y: np.ndarray, stat) -> float:
    batches = np.array_split(y, N_BATCHES)
    vals = np.array([stat(b) for b in batches])
    return float(vals.std(ddof=1) / math.sqrt(N_BATCHES))


def mc_mcovar(req: MeasureRequest, n: int = 10_000_000, seed: int = 0, workers: int = 1,
              sample: ConditionalSample | None = None) -> McEstimate:
    """Empirical ``p1``-quantile of the target within the exceedance event.

    The standard error is half the width of the distribution-free 95% order
    statistic interval divided by 1.96.
    """
    cs = _sample_for(req, n, seed, workers, sample)
    y = np.sort(cs.losses(req.joint))
    m, p = y.size, req.p1
    half = Z95 * math.sqrt(m * p * (1.0 - p))
    lo = min(max(int(math.floor(m * p - half)), 1), m)
    hi = min(max(int(math.ceil(m * p + half)), 1), m)
    se = (y[hi - 1] - y[lo - 1]) / (2.0 * Z95)
    return McEstimate(_upper_quantile(y, p), float(se), m, cs.n_total, cs.seed)


def mc_mcoes(req: MeasureRequest, n: int = 10_000_000, seed: int = 0, workers: int = 1,
             sample: ConditionalSample | None = None) -> McEstimate:
    """Mean of the target above its conditional ``p1``-quantile; batch-means error."""
    cs = _sample_for(req, n, seed, workers, sample)
    y = cs.losses(req.joint)
    return McEstimate(_tail_mean(y, req.p1), _batch_se(y, lambda b: _tail_mean(b, req.p1)),
                      y.size, cs.n_total, cs.seed)


def mc_mmme(req: MeasureRequest, n: int = 10_000_000, seed: int = 0, workers: int = 1,
            sample: ConditionalSample | None = None) -> McEstimate:
    """Conditional mean of ``(X_target - A)_+`` with ``A`` from unconditional VaRs."""
    cs = _sample_for(req, n, seed, workers, sample)
    y = cs.losses(req.joint)
    excess = np.maximum(y - req.mmme_threshold(), 0.0)
    return McEstimate(float(excess.mean()), _batch_se(excess, np.mean), y.size, cs.n_total, cs.seed)


# ---------------------------------------------------------------------------
# Oracle suite
# ---------------------------------------------------------------------------

ORACLE_LEVELS = (0.95, (0.9, 0.9))
ORACLE_SEED = 11
ORACLE_N = 10_000_000
# level shift used by the tampered negative control
TAMPER_SHIFT = 0.01


def oracle_fixtures() -> list[tuple[str, Copula, str, object]]:
    from .copulas import ClaytonCopula, GaussianCopula, GumbelCopula
    from .marginals import Exponential, Gamma, Weibull

    copulas = [("gaussian_rho0.5", GaussianCopula.equicorrelated(0.5, 3)),
               ("gumbel_theta2", GumbelCopula(2.0, 3)), ("clayton_theta2", ClaytonCopula(2.0, 3))]
    marginals = [("exponential_1", Exponential(1.0)), ("gamma_3_1", Gamma(3.0, 1.0)),
                 ("weibull_2_2", Weibull(2.0, 2.0))]
    return [(cn, c, mn, m) for cn, c in copulas for mn, m in marginals]


@dataclass(frozen=True)
class OracleCheck:
    copula: str
    marginal: str
    measure: str
    closed_form: float
    mc_value: float
    std_error: float
    n_effective: int

    @property
    def tolerance(self) -> float:
        return max(0.01 * abs(self.closed_form), 3.0 * self.std_error)

    @property
    def margin(self) -> float:
        return self.tolerance - abs(self.closed_form - self.mc_value)

    @property
    def passed(self) -> bool:
        return self.margin >= 0.0

    def as_dict(self) -> dict:
        return {"copula": self.copula, "marginal": self.marginal, "measure": self.measure,
                "closed_form": self.closed_form, "mc_value": self.mc_value, "std_error": self.std_error,
                "n_effective": self.n_effective, "tolerance": self.tolerance, "margin": self.margin,
                "passed": self.passed}


def run_oracle_suite(n: int = ORACLE_N, seed: int = ORACLE_SEED, workers: int = 1,
                     tamper: bool = False) -> list[OracleCheck]:
    """Closed-form MCoVaR, MCoES and MMME against Monte Carlo on the nine fixtures.

    ``tamper`` evaluates the closed-form MCoVaR one level step too high, a
    negative control that the suite must reject.
    """
    from .measures import mcoes, mcovar, mmme

    p1, p_tail = ORACLE_LEVELS
    checks = []
    samples: dict[str, ConditionalSample] = {}
    for cname, cop, mname, marg in oracle_fixtures():
        if cname not in samples:
            samples[cname] = conditional_sample(cop, 0, p_tail, n, seed, workers)
        cs = samples[cname]
        req = MeasureRequest(JointModel(cop, (marg, marg, marg)), 0, p1, p_tail)
        covar_req = req.with_levels(p1=p1 + TAMPER_SHIFT) if tamper else req
        for name, exact, oracle in (("mcovar", mcovar(covar_req), mc_mcovar),
                                    ("mcoes", mcoes(req), mc_mcoes), ("mmme", mmme(req), mc_mmme)):
            est = oracle(req, sample=cs)
            checks.append(OracleCheck(cname, mname, name, float(exact), est.value, est.std_error, est.n_effective))
    return checks
