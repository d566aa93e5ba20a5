"""Risk measures of a target asset conditioned on joint exceedances of the others.

For a target with marginal ``F`` and the distortion ``h`` of its law induced
by the event that every conditioning asset exceeds its VaR, the conditional
survival function is ``h(Fbar(x))``. Hence

* ``mcovar = F^{-1}(1 - h^{-1}(1 - p1))``,
* ``mcoes = mcovar + (1/(1-p1)) * int_{mcovar}^inf h(Fbar(x)) dx``,
* ``mmme = int_A^inf h(Fbar(x)) dx`` with ``A = sum a_i VaR_{p_i}(X_i)``.

``mcoes_by_levels`` integrates ``mcovar`` over its level instead and serves
as an independent cross-check of ``mcoes``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import integrate

from .copulas import DistortionContext
from .errors import InputError, NumericError, RatioUndefinedError
from .marginals import Marginal, SemiparametricGPDTail

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-10
QUAD_LIMIT = 500
TAIL_CUTOFF = 1e-12


@dataclass(frozen=True)
class JointModel:
    """Marginals plus a dependence structure exposing ``dim`` and ``survival``."""

    dependence: object
    marginals: tuple[Marginal, ...]
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if len(self.marginals) != self.dependence.dim:
            raise InputError("number of marginals must match the copula dimension")
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))
            if len(self.names) != self.dim:
                raise InputError("one name per asset is required")

    @classmethod
    def from_analytic(cls, model, names=None) -> "JointModel":
        from .models import ImpliedCopula

        return cls(ImpliedCopula(model), tuple(model.marginals()), names)

    @property
    def dim(self) -> int:
        return self.dependence.dim


@dataclass(frozen=True)
class MeasureRequest:
    """Target index, levels and MMME weights for one evaluation.

    ``p_tail`` and ``mmme_weights`` list the conditioning assets in their
    original order with the target removed. Weights default to equal.
    """

    joint: JointModel
    target: int
    p1: float
    p_tail: tuple[float, ...]
    mmme_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        n = self.joint.dim
        if not 0 <= self.target < n:
            raise InputError(f"target index {self.target} out of range")
        if not 0.0 < self.p1 < 1.0:
            raise InputError("p1 must lie in (0, 1)")
        tail = tuple(float(p) for p in np.atleast_1d(self.p_tail))
        if len(tail) != n - 1 or any(not 0.0 < p < 1.0 for p in tail):
            raise InputError(f"p_tail needs {n - 1} levels inside (0, 1)")
        object.__setattr__(self, "p_tail", tail)
        w = self.mmme_weights
        w = (1.0 / (n - 1),) * (n - 1) if w is None else tuple(float(x) for x in w)
        if len(w) != n - 1 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            raise InputError("MMME weights must be nonnegative, one per conditioning asset, summing to 1")
        object.__setattr__(self, "mmme_weights", w)

    @property
    def marginal(self) -> Marginal:
        return self.joint.marginals[self.target]

    @property
    def conditioning(self) -> list[int]:
        return [j for j in range(self.joint.dim) if j != self.target]

    @cached_property
    def context(self) -> DistortionContext:
        return DistortionContext(self.joint.dependence, self.p_tail, target=self.target)

    def with_levels(self, p1: float | None = None, p_tail: Sequence[float] | None = None) -> "MeasureRequest":
        new = replace(self, p1=self.p1 if p1 is None else p1,
                      p_tail=self.p_tail if p_tail is None else tuple(p_tail))
        if new.p_tail == self.p_tail and "context" in self.__dict__:
            new.__dict__["context"] = self.context
        return new

    def median_benchmark(self) -> "MeasureRequest":
        return self.with_levels(p_tail=(0.5,) * len(self.p_tail))

    def mmme_threshold(self) -> float:
        """``A = sum a_i VaR_{p_i}(X_i)`` over the conditioning assets."""
        margins = self.joint.marginals
        return float(sum(a * margins[j].quantile(p)
                         for a, j, p in zip(self.mmme_weights, self.conditioning, self.p_tail)))


# ---------------------------------------------------------------------------
# Unconditional measures
# ---------------------------------------------------------------------------


def var(m: Marginal, p: float) -> float:
    return float(m.quantile(p))


def es(m: Marginal, p: float) -> float:
    """Expected shortfall as ``VaR_p + E[(X - VaR_p)_+] / (1 - p)``."""
    v = var(m, p)
    return v + float(m.stop_loss(v)) / (1.0 - p)


def es_by_quadrature(m: Marginal, p: float) -> float:
    """Expected shortfall as the average quantile over ``(p, 1)``."""
    if not 0.0 < p < 1.0:
        raise InputError("p must lie in (0, 1)")
    m.mean  # raises for nonintegrable tails
    val, _ = integrate.quad(lambda s: float(m.quantile(1.0 - (1.0 - p) * s)), 0.0, 1.0,
                            epsabs=QUAD_EPSABS, epsrel=1e-9, limit=QUAD_LIMIT)
    return val


# ---------------------------------------------------------------------------
# Distorted integrals
# ---------------------------------------------------------------------------


def _upper_limit(m: Marginal) -> float:
    if math.isfinite(m.upper):
        return float(m.upper)
    return float(m.quantile(1.0 - TAIL_CUTOFF))


def _smooth_distorted_integral(h, m: Marginal, lo: float, hi: float) -> float:
    """``int_lo^hi h(Fbar(x)) dx`` for a continuous stretch of ``m``."""
    if hi <= lo:
        return 0.0
    marks = m.quantile(np.array([0.5, 0.9, 0.99, 0.999, 1 - 1e-4, 1 - 1e-6, 1 - 1e-8, 1 - 1e-10]))
    pts = [float(x) for x in np.atleast_1d(marks) if lo < x < hi]
    val, _ = integrate.quad(lambda x: float(h(float(m.sf(x)))), lo, hi, points=pts or None,
                            epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    return val


def _tail_correction(h, m: Marginal, hi: float) -> float:
    """Integral beyond the cutoff with ``h`` linearised through the origin."""
    if not math.isfinite(hi) or hi >= m.upper:
        return 0.0
    s = float(m.sf(hi))
    if s <= 0.0:
        return 0.0
    return float(h(s)) / s * float(m.stop_loss(hi))


def distorted_stop_loss(ctx: DistortionContext, m: Marginal, a: float) -> float:
    """``int_a^inf h(Fbar(x)) dx``, the expected excess over ``a`` under the distorted law."""
    m.mean  # raises for nonintegrable tails
    h = ctx.h
    total = 0.0
    lo = float(a)
    if lo < m.lower:
        total += m.lower - lo
        lo = m.lower
    if isinstance(m, SemiparametricGPDTail):
        u = m.threshold_value
        if lo < u:
            xs = m.sorted_sample[m.sorted_sample <= u]
            left = xs[:-1]
            right = xs[1:]
            widths = np.clip(np.minimum(right, u) - np.maximum(left, lo), 0.0, None)
            live = widths > 0
            if np.any(live):
                levels = 1.0 - np.searchsorted(m.sorted_sample, left[live], side="right") / m.size
                total += float(np.dot(h(np.clip(levels, 0.0, 1.0)), widths[live]))
            lo = u
        hi = _upper_limit(m)
        total += _smooth_distorted_integral(h, m, lo, hi)
        return total + _tail_correction(h, m, hi)
    hi = _upper_limit(m)
    total += _smooth_distorted_integral(h, m, lo, hi)
    return total + _tail_correction(h, m, hi)


def _distorted_quantile(ctx: DistortionContext, m: Marginal, p1: float) -> float:
    t = ctx.h_inverse(1.0 - p1)
    level = 1.0 - t
    if level >= 1.0:
        level = float(np.nextafter(1.0, 0.0))
    if level <= 0.0:
        return float(m.lower)
    return var(m, level)


# ---------------------------------------------------------------------------
# Conditional measures
# ---------------------------------------------------------------------------


def mcovar(req: MeasureRequest) -> float:
    return _distorted_quantile(req.context, req.marginal, req.p1)


def mcoes(req: MeasureRequest) -> float:
    q = mcovar(req)
    return q + distorted_stop_loss(req.context, req.marginal, q) / (1.0 - req.p1)


def mcoes_by_levels(req: MeasureRequest, w_min: float = 1e-13) -> float:
    """``(1/(1-p1)) int_{p1}^1 mcovar_t dt`` with ``1 - t = exp(-s)``.

    The sliver ``1 - t < w_min`` is dropped; its contribution is below the
    quadrature tolerance for integrable tails.
    """
    ctx, m = req.context, req.marginal
    m.mean

    def integrand(s: float) -> float:
        w = math.exp(-s)
        return _distorted_quantile(ctx, m, 1.0 - w) * w

    s_lo = -math.log1p(-req.p1)
    s_hi = -math.log(w_min * (1.0 - req.p1))
    val, _ = integrate.quad(integrand, s_lo, s_hi, epsabs=1e-12, epsrel=1e-10, limit=QUAD_LIMIT)
    return val / (1.0 - req.p1)


def mmme(req: MeasureRequest) -> float:
    return distorted_stop_loss(req.context, req.marginal, req.mmme_threshold())


# ---------------------------------------------------------------------------
# Contribution measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskReport:
    var: float
    es: float
    mcovar: float
    mcoes: float
    mmme: float
    stop_loss_threshold: float
    delta_mcovar: float
    delta_r_mcovar: float
    delta_mcoes: float
    delta_r_mcoes: float
    delta_mmme: float
    delta_r_mmme: float
    delta_med_mcovar: float | None = None
    delta_r_med_mcovar: float | None = None
    delta_med_mcoes: float | None = None
    delta_r_med_mcoes: float | None = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(num: float, den: float, what: str) -> float:
    if not den > 0.0:
        raise RatioUndefinedError(f"ratio undefined for nonpositive benchmark ({what} = {den:.6g})")
    return num / den


def contributions(req: MeasureRequest, include_median: bool = True) -> RiskReport:
    """All conditional measures of ``req`` with their contribution measures.

    Median-type fields are left as ``None`` (with a warning) when any tail
    level is at or below one half, or when ``include_median`` is false.
    """
    m = req.marginal
    v, e = var(m, req.p1), es(m, req.p1)
    cv, ce = mcovar(req), mcoes(req)
    threshold = req.mmme_threshold()
    mm = distorted_stop_loss(req.context, m, threshold)
    base_sl = float(m.stop_loss(threshold))
    d_cv, d_ce, d_mm = cv - v, ce - e, mm - base_sl
    fields = dict(
        var=v, es=e, mcovar=cv, mcoes=ce, mmme=mm, stop_loss_threshold=base_sl,
        delta_mcovar=d_cv, delta_r_mcovar=_ratio(d_cv, v, "VaR"),
        delta_mcoes=d_ce, delta_r_mcoes=_ratio(d_ce, e, "ES"),
        delta_mmme=d_mm, delta_r_mmme=_ratio(d_mm, base_sl, "stop-loss at A"),
    )
    warnings: list[str] = []
    if include_median and any(p <= 0.5 for p in req.p_tail):
        warnings.append("median-type measures skipped: tail levels must exceed 1/2")
        include_median = False
    if include_median:
        med = req.median_benchmark()
        cv_med, ce_med = mcovar(med), mcoes(med)
        fields.update(
            delta_med_mcovar=cv - cv_med, delta_r_med_mcovar=_ratio(cv - cv_med, cv_med, "median MCoVaR"),
            delta_med_mcoes=ce - ce_med, delta_r_med_mcoes=_ratio(ce - ce_med, ce_med, "median MCoES"),
        )
    return RiskReport(**fields, warnings=tuple(warnings))


def report_fields() -> list[str]:
    """Measure names in the row order of the tabular reports."""
    return ["var", "mcovar", "delta_mcovar", "delta_r_mcovar", "delta_med_mcovar", "delta_r_med_mcovar",
            "es", "mcoes", "delta_mcoes", "delta_r_mcoes", "delta_med_mcoes", "delta_r_med_mcoes",
            "mmme", "delta_mmme", "delta_r_mmme"]


def check_finite(report: RiskReport) -> None:
    for name, val in report.as_dict().items():
        if isinstance(val, float) and not math.isfinite(val):
            raise NumericError(f"non-finite value for {name}")
