"""Univariate loss distributions: parametric families and the empirical-body GPD-tail model.

Every model exposes ``cdf``, ``sf``, ``quantile`` (the left-continuous
generalized inverse), ``stop_loss(a) = E[(X - a)_+]``, ``mean`` and the support
bounds ``lower`` / ``upper``. Evaluation is vectorised over array inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from ._numerics import ceil_index, numerical_hessian
from .errors import InputError, InsufficientDataError, NumericError

MIN_EXCESSES = 30


class NonintegrableTailError(InputError):
    """The requested expectation diverges for this parameterization."""


def _prob_array(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise InputError("probability levels must lie in the open interval (0, 1)")
    return arr


def _ret(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


class Marginal:
    """Base class; subclasses implement the ``_``-prefixed array kernels."""

    lower: float = 0.0
    upper: float = math.inf

    def cdf(self, x):
        x_arr = np.asarray(x, dtype=float)
        return _ret(np.clip(self._cdf(x_arr), 0.0, 1.0), x)

    def sf(self, x):
        x_arr = np.asarray(x, dtype=float)
        return _ret(np.clip(self._sf(x_arr), 0.0, 1.0), x)

    def quantile(self, p):
        return _ret(self._quantile(_prob_array(p)), p)

    def stop_loss(self, a):
        """Expected excess ``E[(X - a)_+]``."""
        self._require_finite_mean()
        a_arr = np.asarray(a, dtype=float)
        below = a_arr <= self.lower
        # below the support the excess is X - a almost surely
        inner = self._stop_loss(np.where(below, self.lower, a_arr))
        out = np.where(below, self.mean - a_arr, inner)
        return _ret(np.maximum(out, 0.0), a)

    @property
    def mean(self) -> float:
        self._require_finite_mean()
        return self._mean()

    def _require_finite_mean(self):
        pass

    def _cdf(self, x):
        return 1.0 - self._sf(x)

    def _sf(self, x):
        raise NotImplementedError

    def _quantile(self, p):
        raise NotImplementedError

    def _stop_loss(self, a):
        raise NotImplementedError

    def _mean(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(Marginal):
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise InputError("Exponential rate must be positive")

    def _sf(self, x):
        return np.where(x <= 0.0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0)))

    def _quantile(self, p):
        return -np.log1p(-p) / self.rate

    def _stop_loss(self, a):
        return np.exp(-self.rate * a) / self.rate

    def _mean(self):
        return 1.0 / self.rate


@dataclass(frozen=True)
class Gamma(Marginal):
    shape: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise InputError("Gamma shape and scale must be positive")

    def _cdf(self, x):
        return special.gammainc(self.shape, np.maximum(x, 0.0) / self.scale)

    def _sf(self, x):
        return special.gammaincc(self.shape, np.maximum(x, 0.0) / self.scale)

    def _quantile(self, p):
        return self.scale * special.gammaincinv(self.shape, p)

    def _stop_loss(self, a):
        z = a / self.scale
        return self.shape * self.scale * special.gammaincc(self.shape + 1.0, z) - a * special.gammaincc(self.shape, z)

    def _mean(self):
        return self.shape * self.scale


@dataclass(frozen=True)
class Weibull(Marginal):
    shape: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise InputError("Weibull shape and scale must be positive")

    def _sf(self, x):
        return np.exp(-((np.maximum(x, 0.0) / self.scale) ** self.shape))

    def _quantile(self, p):
        return self.scale * (-np.log1p(-p)) ** (1.0 / self.shape)

    def _stop_loss(self, a):
        # int_a^inf exp(-(x/s)^k) dx = s Gamma(1 + 1/k) Q(1/k, (a/s)^k)
        k = self.shape
        return self.scale * special.gamma(1.0 + 1.0 / k) * special.gammaincc(1.0 / k, (a / self.scale) ** k)

    def _mean(self):
        return self.scale * special.gamma(1.0 + 1.0 / self.shape)


@dataclass(frozen=True)
class ParetoI(Marginal):
    """Pareto type I with ``F(x) = 1 - (scale / x)**shape`` for ``x >= scale``."""

    scale: float = 1.0
    shape: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0 and self.shape > 0):
            raise InputError("Pareto scale and shape must be positive")

    @property
    def lower(self):
        return self.scale

    def _require_finite_mean(self):
        if self.shape <= 1.0:
            raise NonintegrableTailError("nonintegrable tail: Pareto mean requires shape > 1")

    def _sf(self, x):
        return np.where(x <= self.scale, 1.0, (self.scale / np.maximum(x, self.scale)) ** self.shape)

    def _quantile(self, p):
        return self.scale * (1.0 - p) ** (-1.0 / self.shape)

    def _stop_loss(self, a):
        return self.scale**self.shape * a ** (1.0 - self.shape) / (self.shape - 1.0)

    def _mean(self):
        return self.shape * self.scale / (self.shape - 1.0)


@dataclass(frozen=True)
class GPD(Marginal):
    """Generalized Pareto law of excesses, ``sf(x) = (1 + xi x / beta)**(-1/xi)``.

    ``xi == 0`` is the exponential law with mean ``beta``.
    """

    xi: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise InputError("GPD scale must be positive")

    @property
    def upper(self):
        return -self.beta / self.xi if self.xi < 0 else math.inf

    def _require_finite_mean(self):
        if self.xi >= 1.0:
            raise NonintegrableTailError("nonintegrable tail: GPD mean requires xi < 1")

    def _sf(self, x):
        y = np.maximum(x, 0.0) / self.beta
        if self.xi == 0.0:
            return np.exp(-y)
        arg = np.maximum(1.0 + self.xi * y, 0.0)
        with np.errstate(divide="ignore"):
            return np.where(arg > 0.0, np.exp(-np.log(arg) / self.xi), 0.0)

    def _quantile(self, p):
        if self.xi == 0.0:
            return -self.beta * np.log1p(-p)
        return self.beta * np.expm1(-self.xi * np.log1p(-p)) / self.xi

    def _stop_loss(self, a):
        a = np.minimum(a, self.upper)
        return self._sf(a) * (self.beta + self.xi * a) / (1.0 - self.xi)

    def _mean(self):
        return self.beta / (1.0 - self.xi)

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        if self.xi == 0.0:
            return -math.log(self.beta) - y / self.beta
        return -math.log(self.beta) - (1.0 + 1.0 / self.xi) * np.log1p(self.xi * y / self.beta)


# ---------------------------------------------------------------------------
# GPD maximum likelihood
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GPDFit:
    xi: float
    beta: float
    se_xi: float
    se_beta: float
    loglik: float
    n_excesses: int
    xi_is_zero: bool
    beta_exponential: float

    @property
    def xi_ci(self) -> tuple[float, float]:
        return (self.xi - 1.96 * self.se_xi, self.xi + 1.96 * self.se_xi)

    @property
    def beta_ci(self) -> tuple[float, float]:
        return (self.beta - 1.96 * self.se_beta, self.beta + 1.96 * self.se_beta)

    def tail_law(self) -> GPD:
        """The excess law used downstream: exponential when the zero test fires."""
        if self.xi_is_zero:
            return GPD(0.0, self.beta_exponential)
        return GPD(self.xi, self.beta)


def _gpd_negloglik(xi: float, beta: float, y: np.ndarray) -> float:
    if beta <= 0.0:
        return math.inf
    z = xi * y / beta
    if np.any(z <= -1.0):
        return math.inf
    if abs(xi) < 1e-10:
        return y.size * math.log(beta) + float(np.sum(y)) / beta
    return y.size * math.log(beta) + (1.0 + 1.0 / xi) * float(np.sum(np.log1p(z)))


def _pwm_start(y: np.ndarray) -> tuple[float, float]:
    ys = np.sort(y)
    n = ys.size
    plotting = (np.arange(1, n + 1) - 0.35) / n
    a0 = ys.mean()
    a1 = np.mean((1.0 - plotting) * ys)
    denom = a0 - 2.0 * a1
    if denom <= 0:
        return 0.1, a0
    return 2.0 - a0 / denom, 2.0 * a0 * a1 / denom


def fit_gpd(excesses) -> GPDFit:
    """Maximum likelihood GPD fit with observed-information standard errors.

    The search runs over ``(log beta, xi)`` with the support constraint as an
    infinite penalty, started from probability-weighted moments plus a few
    fixed restarts. ``xi_is_zero`` is set when ``0`` lies inside
    ``xi +- 1.96 se``.
    """
    y = np.asarray(excesses, dtype=float).ravel()
    if y.size < MIN_EXCESSES:
        raise InsufficientDataError(f"insufficient excesses: need at least {MIN_EXCESSES}, got {y.size}")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise InputError("excesses must be finite and nonnegative")
    if not np.any(y > 0):
        raise InputError("excesses are all zero")

    def objective(v):
        val = _gpd_negloglik(v[1], math.exp(v[0]), y)
        return val if math.isfinite(val) else 1e300

    xi0, beta0 = _pwm_start(y)
    starts = [(math.log(max(beta0, 1e-8)), xi0), (math.log(y.mean()), 0.0),
              (math.log(y.mean()), 0.25), (math.log(y.mean()), -0.2)]
    best = None
    for s in starts:
        res = optimize.minimize(objective, np.array(s), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not math.isfinite(best.fun) or best.fun >= 1e299:
        raise NumericError("GPD likelihood optimisation failed to converge after restarts")
    log_beta, xi = best.x
    beta = math.exp(log_beta)

    hess = numerical_hessian(lambda v: _gpd_negloglik(v[0], v[1], y), np.array([xi, beta]))
    try:
        cov = np.linalg.inv(hess)
        se_xi, se_beta = (math.sqrt(v) if v > 0 else math.nan for v in np.diag(cov))
    except np.linalg.LinAlgError:
        se_xi = se_beta = math.nan
    zero = bool(math.isfinite(se_xi) and xi - 1.96 * se_xi <= 0.0 <= xi + 1.96 * se_xi)
    return GPDFit(xi=float(xi), beta=beta, se_xi=se_xi, se_beta=se_beta, loglik=-float(best.fun),
                  n_excesses=int(y.size), xi_is_zero=zero, beta_exponential=float(y.mean()))


# ---------------------------------------------------------------------------
# Semiparametric model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SemiparametricGPDTail(Marginal):
    """Empirical distribution up to a threshold order statistic, GPD tail above.

    The threshold is ``x_(k)`` with ``k = ceil(alpha T)``. Mass
    ``tail_prob = #{x_t > threshold} / T`` sits above the threshold and is
    spread according to the fitted GPD, so the cdf is continuous there.
    """

    sorted_sample: np.ndarray
    threshold_level: float
    threshold_value: float
    gpd_fit: GPDFit
    tail_prob: float
    tail: GPD = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "tail", self.gpd_fit.tail_law())

    @property
    def xi_hat(self) -> float:
        return self.gpd_fit.xi

    @property
    def beta_hat(self) -> float:
        return self.gpd_fit.beta

    @property
    def xi_is_zero(self) -> bool:
        return self.gpd_fit.xi_is_zero

    @property
    def lower(self):
        return float(self.sorted_sample[0])

    @property
    def upper(self):
        return self.threshold_value + self.tail.upper

    @property
    def size(self) -> int:
        return int(self.sorted_sample.size)

    @property
    def body_level(self) -> float:
        """Probability mass at or below the threshold."""
        return 1.0 - self.tail_prob

    def _require_finite_mean(self):
        self.tail._require_finite_mean()

    def _cdf(self, x):
        T = self.size
        body = np.searchsorted(self.sorted_sample, x, side="right") / T
        above = 1.0 - self.tail_prob * self.tail._sf(x - self.threshold_value)
        return np.where(x <= self.threshold_value, body, above)

    def _sf(self, x):
        return 1.0 - self._cdf(x)

    def _quantile(self, p):
        T = self.size
        idx = np.clip(np.ceil(p * T - 1e-9).astype(int), 1, T) - 1
        body = self.sorted_sample[idx]
        scaled = np.clip(1.0 - (1.0 - p) / self.tail_prob, 0.0, 1.0 - 1e-16) if self.tail_prob > 0 else p
        with np.errstate(invalid="ignore", divide="ignore"):
            tail = self.threshold_value + self.tail._quantile(np.maximum(scaled, 0.0))
        return np.where(p <= self.body_level + 1e-15, body, tail)

    def body_stop_loss(self, a):
        """``E[(X - a)_+ ; X <= threshold]`` from the empirical steps."""
        a = np.asarray(a, dtype=float)
        body = self.sorted_sample[self.sorted_sample <= self.threshold_value]
        return np.sum(np.maximum(body[None, :] - a.reshape(-1, 1), 0.0), axis=1).reshape(a.shape) / self.size

    def _stop_loss(self, a):
        u = self.threshold_value
        tail_part = np.where(a <= u, (u - a) + self.tail.mean, self.tail._stop_loss(np.maximum(a - u, 0.0)))
        return self.body_stop_loss(a) + self.tail_prob * tail_part

    def _mean(self):
        return float(self._stop_loss(np.array([self.lower]))[0] + self.lower)


def fit_gpd_excesses(sample, threshold_level: float = 0.9) -> SemiparametricGPDTail:
    """Fit the empirical-body / GPD-tail model to one loss series."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    if not np.all(np.isfinite(x)):
        raise InputError("sample contains non-finite values")
    if not 0.0 < threshold_level < 1.0:
        raise InputError("threshold level must lie in (0, 1)")
    T = x.size
    if T < 2:
        raise InsufficientDataError("sample too small")
    k = min(max(ceil_index(threshold_level, T), 1), T)
    u = float(x[k - 1])
    excesses = x[x > u] - u
    fit = fit_gpd(excesses)
    return SemiparametricGPDTail(sorted_sample=x, threshold_level=float(threshold_level), threshold_value=u,
                                 gpd_fit=fit, tail_prob=excesses.size / T)


def pseudo_samples(models, data, clip: bool = False) -> np.ndarray:
    """Probability-integral transform of each column through its marginal model.

    With ``clip`` the values are confined to ``[1/(2T), 1 - 1/(2T)]`` so that
    copula densities stay finite.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(models):
        raise InputError("need one marginal model per data column")
    out = np.column_stack([np.asarray(m.cdf(data[:, j]), dtype=float) for j, m in enumerate(models)])
    if clip:
        T = data.shape[0]
        out = np.clip(out, 0.5 / T, 1.0 - 0.5 / T)
    return out
