"""Analytic joint loss laws used as exact fixtures.

Both laws are specified through their joint survival function. ``ImpliedCopula``
turns one into a survival copula by composing with the marginal quantiles, so
the measure code can handle them like any copula model.
"""

from __future__ import annotations

import itertools
import math
from typing import Mapping, Sequence

import numpy as np

from ._numerics import invert_increasing
from .errors import InputError
from .marginals import Exponential, Marginal, ParetoI


class MultivariatePareto:
    """Joint survival ``(sum x_i / alpha_i - (n - 1))**(-a)`` on ``x_i >= alpha_i``."""

    def __init__(self, scales: Sequence[float], shape: float):
        self.scales = np.asarray(scales, dtype=float)
        self.shape = float(shape)
        if self.scales.ndim != 1 or self.scales.size < 2 or np.any(self.scales <= 0):
            raise InputError("need at least two positive scales")
        if not self.shape > 0:
            raise InputError("shape must be positive")
        self.dim = self.scales.size

    def __repr__(self):
        return f"MultivariatePareto(scales={self.scales.tolist()}, shape={self.shape})"

    def marginals(self) -> list[Marginal]:
        return [ParetoI(float(s), self.shape) for s in self.scales]

    def joint_survival(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise InputError(f"expected points of dimension {self.dim}")
        if np.any(x < self.scales - 1e-12 * self.scales):
            raise InputError("multivariate Pareto requires x_i >= alpha_i")
        with np.errstate(invalid="ignore"):
            base = np.sum(x / self.scales, axis=1) - (self.dim - 1)
            out = np.where(np.isinf(base), 0.0, base ** (-self.shape))
        return float(out[0]) if single else out


class GumbelExponential:
    """Joint survival ``exp(-sum_I lambda_I prod_{i in I} x_i)`` on ``x >= 0``.

    ``lambdas`` maps tuples of 0-based coordinate indices to intensities.
    """

    def __init__(self, lambdas: Mapping[Sequence[int], float], dim: int):
        self.dim = int(dim)
        self.lambdas: dict[tuple[int, ...], float] = {}
        for key, val in lambdas.items():
            idx = tuple(sorted(int(i) for i in key))
            if not idx or idx[0] < 0 or idx[-1] >= self.dim or len(set(idx)) != len(idx):
                raise InputError(f"invalid index set {key!r}")
            if val < 0:
                raise InputError("intensities must be nonnegative")
            self.lambdas[idx] = self.lambdas.get(idx, 0.0) + float(val)
        for i in range(self.dim):
            if not self.lambdas.get((i,), 0.0) > 0:
                raise InputError("every single-coordinate intensity must be positive")

    @classmethod
    def symmetric(cls, single: float, interaction: float, dim: int = 3) -> "GumbelExponential":
        """Equal single intensities and one common value for every larger subset."""
        lam = {}
        for r in range(1, dim + 1):
            for idx in itertools.combinations(range(dim), r):
                lam[idx] = single if r == 1 else interaction
        return cls(lam, dim)

    def __repr__(self):
        return f"GumbelExponential(lambdas={self.lambdas!r}, dim={self.dim})"

    def marginals(self) -> list[Marginal]:
        return [Exponential(self.lambdas[(i,)]) for i in range(self.dim)]

    def joint_survival(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise InputError(f"expected points of dimension {self.dim}")
        if np.any(x < 0):
            raise InputError("Gumbel exponential law requires x >= 0")
        expo = np.zeros(x.shape[0])
        with np.errstate(invalid="ignore"):
            for idx, lam in self.lambdas.items():
                if lam:
                    expo = expo + lam * np.prod(x[:, list(idx)], axis=1)
        out = np.exp(-np.nan_to_num(expo, nan=math.inf))
        return float(out[0]) if single else out


class ImpliedCopula:
    """Survival copula of an analytic law: ``Cbar(p) = S(F_1^{-1}(p_1), ...)``."""

    def __init__(self, model):
        self.model = model
        self.dim = model.dim
        self._marginals = model.marginals()

    def __repr__(self):
        return f"ImpliedCopula({self.model!r})"

    def _points(self, p) -> tuple[np.ndarray, bool]:
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        if p.shape[1] != self.dim:
            raise InputError(f"expected points of dimension {self.dim}")
        if np.any(p < 0) or np.any(p > 1):
            raise InputError("copula arguments must lie in the unit cube [0, 1]^n")
        return p, single

    def survival(self, p):
        p, single = self._points(p)
        x = np.empty_like(p)
        for j, m in enumerate(self._marginals):
            col = p[:, j]
            inner = (col > 0) & (col < 1)
            x[:, j] = m.lower
            x[col >= 1, j] = math.inf
            if np.any(inner):
                x[inner, j] = m.quantile(col[inner])
        out = self.model.joint_survival(x)
        out = np.clip(np.atleast_1d(out), 0.0, 1.0)
        return float(out[0]) if single else out

    def cdf(self, u):
        """``P(U <= u)`` by inclusion-exclusion over survival terms."""
        u, single = self._points(u)
        total = np.zeros(u.shape[0])
        for r in range(self.dim + 1):
            for idx in itertools.combinations(range(self.dim), r):
                pts = np.zeros_like(u)
                pts[:, list(idx)] = u[:, list(idx)]
                total += (-1) ** r * np.atleast_1d(self.survival(pts))
        total = np.clip(total, 0.0, 1.0)
        return float(total[0]) if single else total

    def permuted(self, order):
        return _PermutedSurvival(self, order)


class _PermutedSurvival:
    def __init__(self, base, order):
        self.base = base
        self.order = list(order)
        self.dim = base.dim
        self._inverse = np.argsort(self.order)

    def survival(self, p):
        p = np.asarray(p, dtype=float)
        return self.base.survival(p[..., self._inverse])

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        return self.base.cdf(u[..., self._inverse])


def pareto_conditional_survival(model: MultivariatePareto, x1: float, tail_levels: Sequence[float]) -> float:
    """``P(X_1 > x1 | X_j > VaR_{p_j}(X_j), j >= 2)`` as a ratio of joint survivals."""
    margins = model.marginals()
    v = [m.quantile(p) for m, p in zip(margins[1:], tail_levels)]
    num = model.joint_survival(np.array([max(x1, model.scales[0]), *v]))
    den = model.joint_survival(np.array([model.scales[0], *v]))
    return num / den


def mcovar_analytic_pareto(model: MultivariatePareto, p) -> float:
    """MCoVaR of the first coordinate by bisection on the exact conditional survival."""
    p = np.asarray(p, dtype=float)
    if p.size != model.dim or np.any(p <= 0) or np.any(p >= 1):
        raise InputError("levels must be a vector of dimension n inside (0, 1)")
    target = 1.0 - p[0]
    lo = float(model.scales[0])
    hi = 2.0 * lo
    while pareto_conditional_survival(model, hi, p[1:]) > target:
        hi *= 2.0
    # conditional survival decreases in x, so invert its negative
    return invert_increasing(lambda x: -pareto_conditional_survival(model, x, p[1:]), -target, lo, hi, width=1e-13 * hi)
