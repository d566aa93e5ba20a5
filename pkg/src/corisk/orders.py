"""Grid-based checks of stochastic orders, dependence conditions and comparison results.

Every checker returns an :class:`OrderCheckReport` whose ``worst_violation``
is the smallest margin found on the grid (negative means the relation fails
there) together with the grid point that attains it.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import measures
from .copulas import ArchimedeanCopula, ClaytonCopula, GumbelCopula, IndependenceCopula
from .errors import InputError
from .marginals import Gamma, Marginal, Weibull
from .measures import JointModel, MeasureRequest
from .models import GumbelExponential, MultivariatePareto

DEFAULT_TOLERANCE = 1e-9
THEOREM_SLACK = 1e-7
# a reversed fixture counts as failing only below this margin
NEGATIVE_CONTROL_MARGIN = 1e-6
UNIVARIATE_KINDS = ("st", "disp", "star", "ew", "ps")
COPULA_KINDS = ("concordance", "whr")


@dataclass(frozen=True)
class OrderCheckReport:
    order_kind: str
    grid_spec: str
    passed: bool
    worst_violation: float
    witness: tuple
    tolerance: float

    def as_dict(self) -> dict:
        return {"order_kind": self.order_kind, "grid_spec": self.grid_spec, "passed": self.passed,
                "worst_violation": self.worst_violation, "witness": list(self.witness),
                "tolerance": self.tolerance}


def _report(kind: str, spec: str, margins: np.ndarray, points: Sequence, tol: float) -> OrderCheckReport:
    margins = np.asarray(margins, dtype=float).ravel()
    if margins.size == 0:
        raise InputError("grid produced no comparisons")
    if np.any(np.isnan(margins)):
        raise InputError("margin evaluation produced NaN")
    i = int(np.argmin(margins))
    worst = float(margins[i])
    witness = tuple(float(x) for x in np.atleast_1d(points[i]))
    return OrderCheckReport(kind, spec, worst >= -tol, worst, witness, tol)


def default_probability_grid(n: int = 50) -> np.ndarray:
    """Levels from 0.01 to 0.9999, log-spaced toward the upper tail."""
    return 1.0 - np.geomspace(0.99, 1e-4, n)


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float).ravel()
    if g.size < 2 or np.any(g <= 0.0) or np.any(g >= 1.0) or np.any(np.diff(g) <= 0):
        raise InputError("probability grid must be increasing, inside (0, 1), with at least 2 points")
    return g


def eps(m: Marginal, p: float) -> float:
    """Expected proportional shortfall ``E[((X - VaR_p) / VaR_p)_+]``."""
    v = float(m.quantile(p))
    if not v > 0.0:
        raise InputError("expected proportional shortfall needs a positive VaR")
    return float(m.stop_loss(v)) / v


def check_univariate_order(F: Marginal, G: Marginal, kind: str, grid=None,
                           tolerance: float = DEFAULT_TOLERANCE) -> OrderCheckReport:
    """Check ``X <= Y`` in the order ``kind`` with ``X ~ F`` and ``Y ~ G``."""
    if kind not in UNIVARIATE_KINDS:
        raise InputError(f"unknown univariate order {kind!r}")
    p = _check_grid(default_probability_grid() if grid is None else grid)
    spec = f"{kind}: {p.size} levels in [{p[0]:.6g}, {p[-1]:.6g}]"
    qf, qg = np.asarray(F.quantile(p)), np.asarray(G.quantile(p))
    if kind == "st":
        x = np.unique(np.concatenate([qf, qg]))
        return _report(kind, spec, np.asarray(G.sf(x)) - np.asarray(F.sf(x)), x, tolerance)
    if kind == "disp":
        return _report(kind, spec, np.diff(qg - qf), p[1:], tolerance)
    if kind == "star":
        if np.any(qf <= 0) or np.any(qg <= 0):
            raise InputError("star order check needs positive quantiles on the grid")
        return _report(kind, spec, np.diff(qg / qf), p[1:], tolerance)
    if kind == "ew":
        margins = np.asarray(G.stop_loss(qg)) - np.asarray(F.stop_loss(qf))
        return _report(kind, spec, margins, p, tolerance)
    margins = np.array([eps(G, t) - eps(F, t) for t in p])
    return _report(kind, spec, margins, p, tolerance)


def _cube(grid, dim: int) -> np.ndarray:
    g = _check_grid(grid)
    return np.array(list(itertools.product(g, repeat=dim)))


def check_copula_order(C, Cp, kind: str, grid=None, tolerance: float = DEFAULT_TOLERANCE) -> OrderCheckReport:
    """Check ``C <= Cp`` in the concordance or weak hazard rate order.

    Concordance requires both ``C <= Cp`` and ``Cbar <= Cbar'`` pointwise;
    whr requires ``Cbar' / Cbar`` to be nondecreasing along every axis.
    """
    if kind not in COPULA_KINDS:
        raise InputError(f"unknown copula order {kind!r}")
    if C.dim != Cp.dim:
        raise InputError("copulas must share a dimension")
    g = _check_grid(np.linspace(0.05, 0.95, 12) if grid is None else grid)
    dim = C.dim
    pts = _cube(g, dim)
    spec = f"{kind}: {g.size}^{dim} grid on [{g[0]:.6g}, {g[-1]:.6g}]^{dim}"
    if kind == "concordance":
        margins = np.minimum(np.asarray(Cp.cdf(pts)) - np.asarray(C.cdf(pts)),
                             np.asarray(Cp.survival(pts)) - np.asarray(C.survival(pts)))
        return _report(kind, spec, margins, pts, tolerance)
    den = np.asarray(C.survival(pts))
    if np.any(den <= 0.0):
        raise InputError("survival of the smaller copula vanishes on the grid")
    ratio = (np.asarray(Cp.survival(pts)) / den).reshape((g.size,) * dim)
    margins, witnesses = [], []
    shape = (g.size,) * dim
    for axis in range(dim):
        diff = np.diff(ratio, axis=axis)
        margins.append(diff.ravel())
        idx = np.array(list(np.ndindex(diff.shape)))
        witnesses.append(pts[np.ravel_multi_index(idx.T, shape)])
    return _report(kind, spec, np.concatenate(margins), np.concatenate(witnesses), tolerance)


def check_rti(dependence, grid=None, target: int = 0, tolerance: float = DEFAULT_TOLERANCE) -> OrderCheckReport:
    """Right-tail-increasing check of the target in the remaining coordinates.

    ``P(U_t > u_t | U_j > u_j, j != t)`` must be nondecreasing in every
    conditioning level ``u_j``.
    """
    g = _check_grid(np.linspace(0.05, 0.95, 12) if grid is None else grid)
    dim = dependence.dim
    pts = _cube(g, dim)
    shape = (g.size,) * dim
    cond = pts.copy()
    cond[:, target] = 0.0
    ratio = (np.asarray(dependence.survival(pts)) / np.asarray(dependence.survival(cond))).reshape(shape)
    margins, witnesses = [], []
    for axis in range(dim):
        if axis == target:
            continue
        diff = np.diff(ratio, axis=axis)
        margins.append(diff.ravel())
        idx = np.array(list(np.ndindex(diff.shape)))
        witnesses.append(pts[np.ravel_multi_index(idx.T, shape)])
    spec = f"rti: {g.size}^{dim} grid on [{g[0]:.6g}, {g[-1]:.6g}]^{dim}"
    return _report("rti", spec, np.concatenate(margins), np.concatenate(witnesses), tolerance)


def _convexity_margins(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    slopes = np.diff(y) / np.diff(x)
    return np.diff(slopes)


def check_mtp2_archimedean(copula: ArchimedeanCopula, grid=None, variant: str = "inverse_generator",
                           tolerance: float = DEFAULT_TOLERANCE) -> OrderCheckReport:
    """Log-convexity check certifying that an Archimedean copula is MTP2.

    ``variant="inverse_generator"`` tests ``log((-1)^n phi^(n)(s))`` on
    ``s > 0``, where ``phi`` maps ``sum psi(u_i)`` back to the copula value.
    ``variant="generator"`` tests ``log((-1)^n psi^(n)(u))`` on ``u`` in
    ``(0, 1)`` instead, the form usually displayed for the Gumbel family.
    Convexity is judged by nondecreasing slopes between grid neighbours.
    """
    if not isinstance(copula, (GumbelCopula, ClaytonCopula)):
        raise InputError("MTP2 check is implemented for Gumbel and Clayton copulas")
    n = copula.dim
    if n > 3:
        raise InputError("MTP2 check is implemented for dimensions up to 3")
    if variant == "inverse_generator":
        x = np.geomspace(1e-3, 1e3, 200) if grid is None else np.asarray(grid, dtype=float)
        if np.any(x <= 0):
            raise InputError("inverse-generator grid must be positive")
    elif variant == "generator":
        x = np.linspace(0.005, 0.995, 200) if grid is None else np.asarray(grid, dtype=float)
        if np.any(x <= 0) or np.any(x >= 1):
            raise InputError("generator grid must lie inside (0, 1)")
    else:
        raise InputError(f"unknown variant {variant!r}")
    x = np.sort(np.ravel(x))
    if x.size < 3 or np.any(np.diff(x) <= 0):
        raise InputError("convexity check needs at least 3 distinct grid points")
    if variant == "inverse_generator":
        y = copula.log_inverse_generator_derivative(x, n)
    else:
        vals = copula.generator_derivative(x, n)
        if np.any(vals <= 0):
            raise InputError("generator derivative is not positive on the grid")
        y = np.log(vals)
    spec = f"mtp2[{variant}]: {type(copula).__name__}(theta={copula.theta:g}), n={n}, {x.size} points"
    return _report("mtp2", spec, _convexity_margins(x, y), x[1:-1], tolerance)


# ---------------------------------------------------------------------------
# Comparison-result fixtures
# ---------------------------------------------------------------------------

LEVELS = tuple(round(0.1 * k, 10) for k in range(1, 10))
MEDIAN_LEVELS = tuple(round(0.55 + 0.05 * k, 10) for k in range(9))


@dataclass(frozen=True)
class TheoremFixture:
    """Two joint models and the measure whose ordering is asserted."""

    fixture_id: str
    description: str
    smaller: JointModel
    larger: JointModel
    measure: Callable[[MeasureRequest], float]
    tail_levels: tuple[float, ...]
    tail_product: bool = False
    uses_p1: bool = True


def _delta_med(fn):
    def measure(req: MeasureRequest) -> float:
        return fn(req) - fn(req.median_benchmark())
    return measure


def _delta_r_med(fn):
    def measure(req: MeasureRequest) -> float:
        med = fn(req.median_benchmark())
        return (fn(req) - med) / med
    return measure


def _delta_r_mcovar(req):
    v = measures.var(req.marginal, req.p1)
    return (measures.mcovar(req) - v) / v


def _delta_r_mcoes(req):
    e = measures.es(req.marginal, req.p1)
    return (measures.mcoes(req) - e) / e


def _delta_r_mmme(req):
    a = req.mmme_threshold()
    base = float(req.marginal.stop_loss(a))
    return (measures.mmme(req) - base) / base


def _gumbel_joint(target: Marginal, others: Marginal, theta: float = 2.0) -> JointModel:
    return JointModel(GumbelCopula(theta, 3), (target, others, others))


def theorem_fixture(fixture_id: str) -> TheoremFixture:
    """The model pairs instantiating each comparison result."""
    if fixture_id == "thm1_pareto":
        return TheoremFixture(fixture_id, "Pa(1,1,1,5) vs Pa(3,3,3,5): median-type MCoVaR difference",
                              JointModel.from_analytic(MultivariatePareto([1, 1, 1], 5)),
                              JointModel.from_analytic(MultivariatePareto([3, 3, 3], 5)),
                              _delta_med(measures.mcovar), MEDIAN_LEVELS)
    if fixture_id == "thm2_gumbel_gamma":
        return TheoremFixture(fixture_id, "Gumbel(2), G(1,1) vs G(1,2): median-type MCoES difference",
                              _gumbel_joint(Gamma(1, 1), Gamma(1, 1)), _gumbel_joint(Gamma(1, 2), Gamma(1, 1)),
                              _delta_med(measures.mcoes), MEDIAN_LEVELS)
    if fixture_id == "thm3_weibull":
        return TheoremFixture(fixture_id, "Gumbel(2), W(2,2) vs W(1,1): ratio MCoVaR contribution",
                              _gumbel_joint(Weibull(2, 2), Weibull(2, 2)), _gumbel_joint(Weibull(1, 1), Weibull(2, 2)),
                              _delta_r_mcovar, LEVELS)
    if fixture_id == "thm4_ps":
        # independence <= Gumbel(2) in whr, Gumbel(2) is SI, G(3,1) <= G(1,1) in ps
        return TheoremFixture(fixture_id, "independence vs Gumbel(2), G(3,1) vs G(1,1): ratio MCoES contribution",
                              JointModel(IndependenceCopula(3), (Gamma(3, 1), Gamma(1, 1), Gamma(1, 1))),
                              _gumbel_joint(Gamma(1, 1), Gamma(1, 1)), _delta_r_mcoes, LEVELS)
    if fixture_id == "thm5_gumbelexp":
        return TheoremFixture(fixture_id, "Gumbel exponential, interactions 100 vs 10: ratio MMME contribution",
                              JointModel.from_analytic(GumbelExponential.symmetric(10.0, 100.0)),
                              JointModel.from_analytic(GumbelExponential.symmetric(10.0, 10.0)),
                              _delta_r_mmme, LEVELS, tail_product=True, uses_p1=False)
    if fixture_id == "thm6_star_med":
        return TheoremFixture(fixture_id, "Gumbel(2), G(3,1) vs G(1,1): median ratio MCoVaR contribution",
                              _gumbel_joint(Gamma(3, 1), Gamma(1, 1)), _gumbel_joint(Gamma(1, 1), Gamma(1, 1)),
                              _delta_r_med(measures.mcovar), MEDIAN_LEVELS)
    if fixture_id == "thm7_ps_med":
        return TheoremFixture(fixture_id, "Gumbel(2), G(3,1) vs G(1,1): median ratio MCoES contribution",
                              _gumbel_joint(Gamma(3, 1), Gamma(1, 1)), _gumbel_joint(Gamma(1, 1), Gamma(1, 1)),
                              _delta_r_med(measures.mcoes), MEDIAN_LEVELS)
    raise InputError(f"unknown fixture {fixture_id!r}")


THEOREM_FIXTURES = ("thm1_pareto", "thm2_gumbel_gamma", "thm3_weibull", "thm4_ps",
                    "thm5_gumbelexp", "thm6_star_med", "thm7_ps_med")


@functools.lru_cache(maxsize=64)
def theorem_values(fixture_id: str, p1_levels: tuple[float, ...], tail_levels: tuple[float, ...]):
    """Measure values of both fixture models at every grid point (memoised).

    Returns ``(points, smaller_values, larger_values)``; the forward check and
    its reversed negative control read the same evaluations.
    """
    fx = theorem_fixture(fixture_id)
    dim = fx.smaller.dim
    if fx.tail_product:
        tails = list(itertools.product(tail_levels, repeat=dim - 1))
    else:
        tails = [(p,) * (dim - 1) for p in tail_levels]
    points, small_vals, large_vals = [], [], []
    for tail in tails:
        base_small = MeasureRequest(fx.smaller, 0, p1_levels[0], tail)
        base_large = MeasureRequest(fx.larger, 0, p1_levels[0], tail)
        base_small.context, base_large.context  # build once, shared across p1
        for p1 in p1_levels:
            small_vals.append(fx.measure(base_small.with_levels(p1=p1)))
            large_vals.append(fx.measure(base_large.with_levels(p1=p1)))
            points.append((p1, *tail) if fx.uses_p1 else tail)
    return tuple(points), np.array(small_vals), np.array(large_vals)


def check_theorem(fixture_id: str, grid: dict | None = None, reverse: bool = False,
                  slack: float = THEOREM_SLACK) -> OrderCheckReport:
    """Assert ``measure(smaller) <= measure(larger)`` at every grid point.

    ``grid`` may override ``p1`` and ``p_tail`` (lists of levels); tail levels
    are used on the diagonal ``p_2 = p_3`` except for the MMME fixture, which
    takes their full product. ``reverse`` swaps the two models and serves as
    a negative control.
    """
    fx = theorem_fixture(fixture_id)
    grid = grid or {}
    p1_levels = tuple(float(p) for p in grid.get("p1", LEVELS)) if fx.uses_p1 else (0.5,)
    tail_levels = tuple(float(p) for p in grid.get("p_tail", fx.tail_levels))
    points, small_vals, large_vals = theorem_values(fixture_id, p1_levels, tail_levels)
    margins = small_vals - large_vals if reverse else large_vals - small_vals
    spec = (f"{fixture_id}{' (reversed)' if reverse else ''}: p1 in {list(p1_levels) if fx.uses_p1 else 'n/a'}, "
            f"p_tail {'product' if fx.tail_product else 'diagonal'} over {list(tail_levels)}")
    return _report(fixture_id, spec, margins, points, slack)
