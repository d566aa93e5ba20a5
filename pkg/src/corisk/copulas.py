"""Parametric copulas, joint tail (survival) copulas and induced distortions.

All copulas accept points as arrays of shape ``(dim,)`` or ``(m, dim)`` and
return a float or an array of length ``m`` accordingly.

The survival copula ``Cbar(p) = P(U_1 > p_1, ..., U_n > p_n)`` is obtained by
inclusion-exclusion over the ``2**n`` corners of the box. The Gaussian copula
is radially symmetric and uses ``Cbar(p) = C(1 - p)`` instead; Archimedean
copulas pair corners so that each term is a cancellation-free generator gap.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special
from scipy.stats._multivariate import multivariate_normal_frozen

from ._numerics import invert_increasing, weighted_logsumexp
from .errors import ConditioningError, InputError, NumericError

SAMPLE_BLOCK = 1 << 18
_DENSITY_CLIP = 1e-12
_Z_CLIP = 37.5


def _as_points(u, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(u, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InputError(f"expected points of dimension {dim}, got shape {np.shape(u)}")
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InputError("copula arguments must lie in the unit cube [0, 1]^n")
    return arr, single


def _interior_points(u, dim: int) -> tuple[np.ndarray, bool]:
    arr, single = _as_points(u, dim)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise InputError("copula density is only defined strictly inside the unit cube")
    return np.clip(arr, _DENSITY_CLIP, 1.0 - _DENSITY_CLIP), single


def _out(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


@lru_cache(maxsize=None)
def _corner_table(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Subset masks and inclusion-exclusion signs for ``dim`` coordinates."""
    masks = np.array(list(itertools.product([False, True], repeat=dim)), dtype=bool)
    signs = np.where(masks.sum(axis=1) % 2 == 0, 1.0, -1.0)
    return masks, signs


def inclusion_exclusion_survival(cdf, p: np.ndarray) -> np.ndarray:
    """``P(U > p)`` as the signed sum of ``cdf`` over the corners of the box.

    ``p`` has shape ``(m, n)``; the corner for subset ``S`` carries ``p_i`` for
    ``i`` in ``S`` and 1 elsewhere, with sign ``(-1)**|S|``.
    """
    m, n = p.shape
    masks, signs = _corner_table(n)
    corners = np.where(masks[None, :, :], p[:, None, :], 1.0).reshape(-1, n)
    vals = cdf(corners).reshape(m, len(signs))
    return vals @ signs


class Copula:
    """Common interface of the copula families."""

    dim: int

    def cdf(self, u):
        arr, single = _as_points(u, self.dim)
        return _out(self._cdf(arr), single)

    def survival(self, p):
        arr, single = _as_points(p, self.dim)
        return _out(np.clip(self._survival(arr), 0.0, 1.0), single)

    def logpdf(self, u):
        arr, single = _interior_points(u, self.dim)
        return _out(self._logpdf(arr), single)

    def pdf(self, u):
        return np.exp(self.logpdf(u))

    def sample(self, n_samples: int, seed: int = 0, workers: int = 1) -> np.ndarray:
        """Draw ``n_samples`` points; deterministic in ``seed`` for any ``workers``.

        The index range is split into fixed blocks of ``SAMPLE_BLOCK`` rows,
        block ``b`` drawing from ``SeedSequence([seed, b])``.
        """
        if n_samples < 1:
            raise InputError("n_samples must be at least 1")
        sizes = [min(SAMPLE_BLOCK, n_samples - start) for start in range(0, n_samples, SAMPLE_BLOCK)]

        def block(b: int) -> np.ndarray:
            rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
            return self._sample_block(rng, sizes[b])

        if workers > 1 and len(sizes) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(block, range(len(sizes))))
        else:
            parts = [block(b) for b in range(len(sizes))]
        out = np.concatenate(parts, axis=0)
        return np.clip(out, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)

    def permuted(self, order: Sequence[int]) -> "Copula":
        """Copula of ``(U_order[0], U_order[1], ...)``."""
        raise NotImplementedError

    # subclasses implement these on validated (m, dim) arrays
    def _cdf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _survival(self, p: np.ndarray) -> np.ndarray:
        return inclusion_exclusion_survival(self._cdf, p)

    def _logpdf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sample_block(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError


class IndependenceCopula(Copula):
    def __init__(self, dim: int):
        if dim < 2:
            raise InputError("copula dimension must be at least 2")
        self.dim = int(dim)

    def __repr__(self):
        return f"IndependenceCopula(dim={self.dim})"

    def _cdf(self, u):
        return np.prod(u, axis=1)

    def _survival(self, p):
        return np.prod(1.0 - p, axis=1)

    def _logpdf(self, u):
        return np.zeros(u.shape[0])

    def _sample_block(self, rng, n):
        return rng.random((n, self.dim))

    def permuted(self, order):
        return self


# ---------------------------------------------------------------------------
# Gaussian
# ---------------------------------------------------------------------------

_GL20_X, _GL20_W = leggauss(20)
_GL64_X, _GL64_W = leggauss(64)


def _bvn_upper(h: np.ndarray, k: np.ndarray, r: float) -> np.ndarray:
    """``P(X > h, Y > k)`` for a standard bivariate normal with correlation ``r``.

    Port of Genz's BVNU (Drezner-Wesolowsky with Gauss-Legendre rules);
    ``r`` is a scalar, ``h`` and ``k`` are broadcast arrays.
    """
    h, k = np.broadcast_arrays(np.asarray(h, float), np.asarray(k, float))
    h = h.astype(float).copy()
    k = k.astype(float).copy()
    tp = 2.0 * math.pi
    hk = h * k
    if r == 0.0:
        return special.ndtr(-h) * special.ndtr(-k)
    # nodes on [0, 2] with weights summing to 2
    x = np.concatenate([1.0 - _GL20_X[_GL20_X > 0], 1.0 + _GL20_X[_GL20_X > 0]])
    w = np.concatenate([_GL20_W[_GL20_X > 0], _GL20_W[_GL20_X > 0]])
    if abs(r) < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r) / 2.0
        sn = np.sin(asr * x)
        expo = (sn[None, :] * hk.reshape(-1, 1) - hs.reshape(-1, 1)) / (1.0 - sn**2)[None, :]
        bvn = (np.exp(expo) @ w).reshape(h.shape)
        bvn = bvn * asr / tp + special.ndtr(-h) * special.ndtr(-k)
        return np.clip(bvn, 0.0, 1.0)
    if r < 0.0:
        k = -k
        hk = -hk
    bvn = np.zeros_like(h)
    if abs(r) < 1.0:
        as_ = 1.0 - r * r
        a = math.sqrt(as_)
        bs = (h - k) ** 2
        asr = -(bs / as_ + hk) / 2.0
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        with np.errstate(over="ignore", under="ignore"):
            term = a * np.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_**2 / 5.0)
            bvn = np.where(asr > -100.0, term, 0.0)
            b = np.sqrt(bs)
            sp = math.sqrt(tp) * special.ndtr(-b / a)
            corr = np.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
            bvn = bvn - np.where(hk > -100.0, corr, 0.0)
            a = a / 2.0
            xs = (a * x) ** 2
            asr2 = -(bs.reshape(-1, 1) / xs[None, :] + hk.reshape(-1, 1)) / 2.0
            sp2 = 1.0 + c.reshape(-1, 1) * xs[None, :] * (1.0 + d.reshape(-1, 1) * xs[None, :])
            rs = np.sqrt(1.0 - xs)
            ep = np.exp(-(hk.reshape(-1, 1) / 2.0) * xs[None, :] / (1.0 + rs[None, :]) ** 2) / rs[None, :]
            integrand = np.where(asr2 > -100.0, np.exp(asr2) * (sp2 - ep), 0.0)
            bvn = (a * (integrand @ w).reshape(h.shape) - bvn) / tp
    if r > 0.0:
        bvn = bvn + special.ndtr(-np.maximum(h, k))
    else:
        lower = np.where(h < 0.0, special.ndtr(k) - special.ndtr(h), special.ndtr(-h) - special.ndtr(-k))
        bvn = np.where(h >= k, -bvn, lower - bvn)
    return np.clip(bvn, 0.0, 1.0)


def bivariate_normal_cdf(h, k, r: float) -> np.ndarray:
    """``P(X <= h, Y <= k)`` for a standard bivariate normal with correlation ``r``."""
    return _bvn_upper(-np.asarray(h, float), -np.asarray(k, float), r)


def trivariate_normal_cdf(b: np.ndarray, corr: np.ndarray) -> np.ndarray:
    """``P(X <= b)`` for a standard trivariate normal, ``b`` of shape ``(m, 3)``.

    Plackett reduction: the correlations to the first coordinate are scaled
    by ``t`` from 0 (where the first coordinate splits off) to 1, and the
    derivative in ``t`` is integrated with a 64-point Gauss-Legendre rule.
    """
    b = np.asarray(b, float)
    r12, r13, r23 = corr[0, 1], corr[0, 2], corr[1, 2]
    h1, h2, h3 = b[:, 0], b[:, 1], b[:, 2]
    base = special.ndtr(h1) * bivariate_normal_cdf(h2, h3, r23)
    if r12 == 0.0 and r13 == 0.0:
        return np.clip(base, 0.0, 1.0)
    t = 0.5 * (_GL64_X + 1.0)
    wt = 0.5 * _GL64_W
    H1, H2, H3 = h1[:, None], h2[:, None], h3[:, None]
    total = np.zeros_like(h1)
    for rij, hi, hj, hk, rik in ((r12, H1, H2, H3, r13), (r13, H1, H3, H2, r12)):
        if rij == 0.0:
            continue
        a = t * rij  # correlation of (X1, Xj) along the path
        c = t * rik  # correlation of (X1, Xk)
        det = 1.0 - a * a
        dens = np.exp(-(hi * hi - 2.0 * a * hi * hj + hj * hj) / (2.0 * det)) / (2.0 * math.pi * np.sqrt(det))
        # X_k | X_1 = h_i, X_j = h_j under the scaled correlation matrix
        beta1 = (c - a * r23) / det
        beta2 = (r23 - a * c) / det
        mean = beta1 * hi + beta2 * hj
        var = 1.0 - (beta1 * c + beta2 * r23)
        sd = np.sqrt(np.maximum(var, 1e-300))
        total += (rij * dens * special.ndtr((hk - mean) / sd)) @ wt
    return np.clip(base + total, 0.0, 1.0)


class GaussianCopula(Copula):
    """Gaussian copula with correlation matrix ``corr``."""

    def __init__(self, corr):
        corr = np.array(corr, dtype=float)
        if corr.ndim == 0:
            corr = np.array([[1.0, float(corr)], [float(corr), 1.0]])
        if corr.ndim != 2 or corr.shape[0] != corr.shape[1] or corr.shape[0] < 2:
            raise InputError("correlation must be a square matrix of size >= 2")
        if not np.allclose(corr, corr.T, atol=1e-12) or not np.allclose(np.diag(corr), 1.0, atol=1e-12):
            raise InputError("correlation matrix must be symmetric with unit diagonal")
        try:
            self._chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError:
            raise InputError("correlation matrix must be positive definite") from None
        self.corr = corr
        self.dim = corr.shape[0]
        self._prec = np.linalg.inv(corr)
        self._logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))

    @classmethod
    def equicorrelated(cls, rho: float, dim: int) -> "GaussianCopula":
        corr = np.full((dim, dim), float(rho))
        np.fill_diagonal(corr, 1.0)
        return cls(corr)

    def __repr__(self):
        return f"GaussianCopula(corr={self.corr.tolist()})"

    def _cdf(self, u):
        out = np.zeros(u.shape[0])
        live = np.all(u > 0.0, axis=1)
        if not np.any(live):
            return out
        z = np.clip(special.ndtri(u[live]), -_Z_CLIP, _Z_CLIP)
        if self.dim == 2:
            out[live] = bivariate_normal_cdf(z[:, 0], z[:, 1], self.corr[0, 1])
        elif self.dim == 3:
            out[live] = trivariate_normal_cdf(z, self.corr)
        else:
            mvn = multivariate_normal_frozen(mean=np.zeros(self.dim), cov=self.corr, seed=0,
                                             maxpts=1_000_000 * self.dim, abseps=1e-8, releps=1e-8)
            out[live] = np.atleast_1d(mvn.cdf(z))
        return np.clip(out, 0.0, 1.0)

    def _survival(self, p):
        return self._cdf(1.0 - p)

    def _logpdf(self, u):
        z = special.ndtri(u)
        quad = np.einsum("ij,jk,ik->i", z, self._prec - np.eye(self.dim), z)
        return -0.5 * self._logdet - 0.5 * quad

    def _sample_block(self, rng, n):
        z = rng.standard_normal((n, self.dim)) @ self._chol.T
        return special.ndtr(z)

    def permuted(self, order):
        order = list(order)
        return GaussianCopula(self.corr[np.ix_(order, order)])


# ---------------------------------------------------------------------------
# Archimedean
# ---------------------------------------------------------------------------


class ArchimedeanCopula(Copula):
    """Archimedean copula ``C(u) = phi(sum psi(u_i))``.

    ``psi`` is the generator on ``[0, 1]`` and ``phi = psi^{-1}`` its inverse
    (a Laplace transform), which also drives the frailty sampler.
    """

    theta: float

    def __init__(self, theta: float, dim: int = 2):
        if dim < 2:
            raise InputError("copula dimension must be at least 2")
        self.theta = float(theta)
        self.dim = int(dim)
        self._check_theta()

    def __repr__(self):
        return f"{type(self).__name__}(theta={self.theta!r}, dim={self.dim})"

    def permuted(self, order):
        return self

    def _check_theta(self):
        raise NotImplementedError

    def generator(self, u):
        raise NotImplementedError

    def inverse_generator(self, s):
        raise NotImplementedError

    def generator_derivative(self, u, k: int):
        """``(-1)**k`` times the ``k``-th derivative of the generator."""
        raise NotImplementedError

    def log_inverse_generator_derivative(self, s, k: int):
        """Log of ``(-1)**k`` times the ``k``-th derivative of ``phi``."""
        raise NotImplementedError

    def inverse_generator_derivative(self, s, k: int):
        return np.exp(self.log_inverse_generator_derivative(s, k))

    def _log_neg_generator_prime(self, u):
        raise NotImplementedError

    def _logpdf(self, u):
        s = np.sum(self.generator(u), axis=1)
        return self.log_inverse_generator_derivative(s, self.dim) + np.sum(self._log_neg_generator_prime(u), axis=1)

    def _frailty(self, rng, n):
        raise NotImplementedError

    def _phi_gap(self, r, delta):
        """``phi(r) - phi(r + delta)`` without cancellation."""
        raise NotImplementedError

    def _survival(self, p):
        # Exchangeability lets the coordinate closest to 1 serve as pivot; pairing
        # the corners that differ only in the pivot keeps each term of order
        # 1 - p_pivot and avoids cancellation when h is evaluated near 0.
        ps = -np.sort(-p, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = self.generator(ps[:, 0])
            psi_rest = self.generator(ps[:, 1:])
        masks, signs = _corner_table(self.dim - 1)
        r = np.where(masks[None, :, :], psi_rest[:, None, :], 0.0).sum(axis=2)
        return self._phi_gap(r, delta[:, None]) @ signs

    def _sample_block(self, rng, n):
        v = self._frailty(rng, n)
        e = rng.standard_exponential((n, self.dim))
        return self.inverse_generator(e / v[:, None])


@lru_cache(maxsize=None)
def _gumbel_phi_terms(alpha: float, k: int) -> tuple[tuple[float, float], ...]:
    """Terms ``(c, e)`` with ``(-1)**k phi^(k)(s) = exp(-s**alpha) * sum c * s**e``.

    From ``phi(s) = exp(-s**alpha)``: ``P_{k+1} = alpha s**(alpha-1) P_k - P_k'``.
    """
    terms: dict[float, float] = {0.0: 1.0}
    for _ in range(k):
        nxt: dict[float, float] = {}
        for e, c in terms.items():
            key = round(e + alpha - 1.0, 12)
            nxt[key] = nxt.get(key, 0.0) + alpha * c
            if e != 0.0:
                key = round(e - 1.0, 12)
                nxt[key] = nxt.get(key, 0.0) - c * e
        terms = {e: c for e, c in nxt.items() if c != 0.0}
    return tuple(sorted((c, e) for e, c in terms.items()))


@lru_cache(maxsize=None)
def _gumbel_psi_terms(theta: float, k: int) -> tuple[tuple[float, float, float], ...]:
    """Terms ``(c, e, m)`` with ``psi^(k)(u) = sum c * L**e * u**(-m)``, ``L = -ln u``."""
    terms: dict[tuple[float, float], float] = {(theta, 0.0): 1.0}
    for _ in range(k):
        nxt: dict[tuple[float, float], float] = {}
        for (e, m), c in terms.items():
            if e != 0.0:
                key = (round(e - 1.0, 12), m + 1.0)
                nxt[key] = nxt.get(key, 0.0) - c * e
            if m != 0.0:
                key = (e, m + 1.0)
                nxt[key] = nxt.get(key, 0.0) - c * m
        terms = {key: c for key, c in nxt.items() if c != 0.0}
    return tuple((c, e, m) for (e, m), c in sorted(terms.items()))


class GumbelCopula(ArchimedeanCopula):
    """Gumbel copula, generator ``(-ln u)**theta`` with ``theta > 1``."""

    def _check_theta(self):
        if not self.theta > 1.0 or not math.isfinite(self.theta):
            raise InputError("Gumbel copula requires theta > 1")

    def generator(self, u):
        with np.errstate(divide="ignore"):
            return (-np.log(u)) ** self.theta

    def inverse_generator(self, s):
        return np.exp(-np.asarray(s, float) ** (1.0 / self.theta))

    def generator_derivative(self, u, k):
        u = np.asarray(u, float)
        L = -np.log(u)
        total = np.zeros_like(u)
        for c, e, m in _gumbel_psi_terms(self.theta, k):
            total = total + c * L**e * u ** (-m)
        return (-1) ** k * total

    def log_inverse_generator_derivative(self, s, k):
        s = np.asarray(s, float)
        alpha = 1.0 / self.theta
        terms = _gumbel_phi_terms(alpha, k)
        coefs = np.array([c for c, _ in terms])
        exps = np.array([e for _, e in terms])
        # s = 0 only when every coordinate rounds to 1; the density is infinite there
        with np.errstate(divide="ignore"):
            logs = np.log(s)[..., None] * exps
        lse, sign = weighted_logsumexp(logs, coefs)
        if np.any(sign <= 0):
            raise NumericError("nonpositive generator derivative")
        return -(s**alpha) + lse

    def _log_neg_generator_prime(self, u):
        L = -np.log(u)
        return math.log(self.theta) + (self.theta - 1.0) * np.log(L) + L

    def _cdf(self, u):
        with np.errstate(divide="ignore"):
            s = np.sum((-np.log(u)) ** self.theta, axis=1)
        return np.exp(-(s ** (1.0 / self.theta)))

    def _phi_gap(self, r, delta):
        alpha = 1.0 / self.theta
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ra = r**alpha
            inc = np.where(r > 0, ra * np.expm1(alpha * np.log1p(delta / r)), delta**alpha)
            out = np.exp(-ra) * -np.expm1(-inc)
            out = np.where(np.isinf(delta), np.exp(-ra), out)
            out = np.where(np.isinf(r), 0.0, out)
        return np.nan_to_num(out, nan=0.0)

    def _frailty(self, rng, n):
        # positive stable law with Laplace transform exp(-s**alpha) (Kanter)
        alpha = 1.0 / self.theta
        w = rng.uniform(0.0, math.pi, n)
        e = rng.standard_exponential(n)
        return (np.sin(alpha * w) / np.sin(w) ** (1.0 / alpha)) * (np.sin((1.0 - alpha) * w) / e) ** ((1.0 - alpha) / alpha)


class ClaytonCopula(ArchimedeanCopula):
    """Clayton copula, generator ``u**(-theta) - 1`` with ``theta > 0``."""

    def _check_theta(self):
        if not self.theta > 0.0 or not math.isfinite(self.theta):
            raise InputError("Clayton copula requires theta > 0")

    def generator(self, u):
        with np.errstate(divide="ignore", over="ignore"):
            return np.expm1(-self.theta * np.log(np.asarray(u, float)))

    def inverse_generator(self, s):
        return (1.0 + np.asarray(s, float)) ** (-1.0 / self.theta)

    def generator_derivative(self, u, k):
        u = np.asarray(u, float)
        coef = math.prod(self.theta + j for j in range(k))
        return coef * u ** (-self.theta - k)

    def log_inverse_generator_derivative(self, s, k):
        s = np.asarray(s, float)
        coef = sum(math.log(1.0 / self.theta + j) for j in range(k))
        return coef - (1.0 / self.theta + k) * np.log1p(s)

    def _log_sum_power(self, u):
        """``log(sum u_i**(-theta) - n + 1)`` without overflow."""
        a = -self.theta * np.log(u)
        m = np.max(a, axis=1)
        return m + np.log(np.sum(np.exp(a - m[:, None]), axis=1) - (self.dim - 1) * np.exp(-m))

    def _logpdf(self, u):
        log1p_s = self._log_sum_power(u)
        n = self.dim
        coef = sum(math.log(1.0 / self.theta + j) for j in range(n))
        return coef - (1.0 / self.theta + n) * log1p_s + n * math.log(self.theta) + np.sum(
            (-self.theta - 1.0) * np.log(u), axis=1)

    def _log_neg_generator_prime(self, u):
        return math.log(self.theta) + (-self.theta - 1.0) * np.log(u)

    def _cdf(self, u):
        out = np.zeros(u.shape[0])
        live = np.all(u > 0.0, axis=1)
        if np.any(live):
            out[live] = np.exp(-self._log_sum_power(u[live]) / self.theta)
        return out

    def _phi_gap(self, r, delta):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            a = 1.0 + r
            out = a ** (-1.0 / self.theta) * -np.expm1(-np.log1p(delta / a) / self.theta)
            out = np.where(np.isinf(delta), a ** (-1.0 / self.theta), out)
            out = np.where(np.isinf(r), 0.0, out)
        return np.nan_to_num(out, nan=0.0)

    def _frailty(self, rng, n):
        return rng.gamma(1.0 / self.theta, 1.0, n)


# ---------------------------------------------------------------------------
# Mixture
# ---------------------------------------------------------------------------


class MixtureCopula(Copula):
    """``a1 * Gaussian + a2 * Gumbel + (1 - a1 - a2) * Clayton``."""

    def __init__(self, weights, gaussian: GaussianCopula, gumbel: GumbelCopula, clayton: ClaytonCopula):
        a1, a2 = (float(w) for w in weights)
        if not (a1 > 0.0 and a2 > 0.0 and a1 + a2 < 1.0):
            raise InputError("mixture weights need a1 > 0, a2 > 0 and a1 + a2 < 1")
        if not gaussian.dim == gumbel.dim == clayton.dim:
            raise InputError("mixture components must share a dimension")
        self.weights = (a1, a2)
        self.components = (gaussian, gumbel, clayton)
        self.dim = gaussian.dim

    @property
    def all_weights(self) -> np.ndarray:
        a1, a2 = self.weights
        return np.array([a1, a2, 1.0 - a1 - a2])

    def __repr__(self):
        return f"MixtureCopula(weights={self.weights!r}, components={self.components!r})"

    def _combine(self, values):
        return sum(w * v for w, v in zip(self.all_weights, values))

    def _cdf(self, u):
        return self._combine([c._cdf(u) for c in self.components])

    def _survival(self, p):
        return self._combine([c._survival(p) for c in self.components])

    def _logpdf(self, u):
        logs = np.stack([c._logpdf(u) for c in self.components], axis=1)
        return weighted_logsumexp(logs, self.all_weights[None, :])[0]

    def _sample_block(self, rng, n):
        choice = rng.choice(3, size=n, p=self.all_weights)
        out = np.empty((n, self.dim))
        for j, comp in enumerate(self.components):
            idx = np.flatnonzero(choice == j)
            if idx.size:
                out[idx] = comp._sample_block(rng, idx.size)
        return out

    def permuted(self, order):
        g, gu, c = self.components
        return MixtureCopula(self.weights, g.permuted(order), gu, c)


# ---------------------------------------------------------------------------
# Distortions
# ---------------------------------------------------------------------------


class DistortionContext:
    """Distortion of the target margin induced by a joint exceedance event.

    ``h(t) = Cbar(1 - t, p_tail) / Cbar(0, p_tail)``, where the first argument
    sits at coordinate ``target`` and ``p_tail`` fills the remaining
    coordinates in their original order. ``dependence`` only needs ``dim``
    and ``survival``, so analytic joint models plug in too.
    """

    def __init__(self, dependence, tail_levels: Sequence[float], target: int = 0, check_points: int = 65):
        self.dependence = dependence
        self.dim = dependence.dim
        self.target = int(target)
        tail = np.asarray(tail_levels, dtype=float).ravel()
        if tail.size != self.dim - 1:
            raise InputError(f"need {self.dim - 1} tail levels, got {tail.size}")
        if not (0 <= self.target < self.dim):
            raise InputError(f"target index {target} out of range")
        if np.any(tail <= 0.0) or np.any(tail >= 1.0):
            raise InputError("tail levels must lie in (0, 1)")
        self.tail_levels = tail
        self._others = [j for j in range(self.dim) if j != self.target]
        self.denominator = float(self._joint_survival(np.array([0.0]))[0])
        if not self.denominator > 0.0:
            raise ConditioningError("conditioning event has probability zero")
        grid = np.linspace(0.0, 1.0, check_points)
        values = self.h(grid)
        if abs(values[0]) > 1e-12 or abs(values[-1] - 1.0) > 1e-9 or np.any(np.diff(values) < -1e-10):
            raise NumericError("induced distortion is not a nondecreasing map of [0,1] onto itself")

    def _joint_survival(self, target_levels: np.ndarray) -> np.ndarray:
        pts = np.empty((target_levels.size, self.dim))
        pts[:, self._others] = self.tail_levels
        pts[:, self.target] = target_levels
        return np.atleast_1d(self.dependence.survival(pts))

    def h(self, t):
        """Distortion ``h(t)``; vectorised in ``t``."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
            raise InputError("distortion argument must lie in [0, 1]")
        flat = t_arr.ravel()
        vals = self._joint_survival(1.0 - flat) / self.denominator
        vals = np.clip(vals, 0.0, 1.0)
        vals[flat == 0.0] = 0.0
        vals[flat == 1.0] = 1.0
        return float(vals[0]) if t_arr.ndim == 0 else vals.reshape(t_arr.shape)

    def h_bar(self, t):
        """Dual distortion ``1 - h(1 - t)``."""
        return 1.0 - self.h(1.0 - np.asarray(t, dtype=float))

    def h_inverse(self, q: float) -> float:
        """``t`` in ``[0, 1]`` with ``h(t) = q`` (bisection to 1e-12, secant polish)."""
        q = float(q)
        if not 0.0 <= q <= 1.0:
            raise InputError("h_inverse argument must lie in [0, 1]")
        if q == 0.0:
            return 0.0
        if q == 1.0:
            return 1.0
        hi = 1.0
        # shrink the bracket geometrically so small targets keep relative accuracy
        while hi > 1e-300 and self.h(0.5 * hi) >= q:
            hi *= 0.5
        lo = 0.5 * hi if hi < 1.0 else 0.0
        return invert_increasing(self.h, q, lo, hi, width=1e-12 * hi)


# ---------------------------------------------------------------------------
# Tail dependence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailDependence:
    value: float
    last_iterates: tuple[float, float]
    converged: bool


def tail_dependence(copula, side: str = "upper", cond_set_size: int = 1,
                    conditioning: Sequence[int] | None = None) -> TailDependence:
    """Multivariate tail-dependence coefficient as a numerical limit.

    Evaluates ``P(U_S beyond u | U_Sbar beyond u)`` at ``u = 1 - 2**-j``
    (upper) or ``u = 2**-j`` (lower) for ``j = 4..20`` and extrapolates the
    last three iterates with Aitken's delta-squared rule. ``conditioning``
    picks the conditioning coordinates; by default the first
    ``cond_set_size`` ones.
    """
    n = copula.dim
    if not 1 <= cond_set_size < n:
        raise InputError("cond_set_size must satisfy 1 <= k < dim")
    if side not in ("upper", "lower"):
        raise InputError("side must be 'upper' or 'lower'")
    cond = list(range(cond_set_size)) if conditioning is None else list(conditioning)
    if len(cond) != cond_set_size:
        raise InputError("conditioning indices must have cond_set_size entries")
    seq = []
    for j in range(4, 21):
        eps = 2.0 ** -j
        if side == "upper":
            full = np.full(n, 1.0 - eps)
            part = np.zeros(n)
            part[cond] = 1.0 - eps
            num, den = copula.survival(full), copula.survival(part)
        else:
            full = np.full(n, eps)
            part = np.ones(n)
            part[cond] = eps
            num, den = copula.cdf(full), copula.cdf(part)
        seq.append(num / den if den > 0 else 0.0)
    s0, s1, s2 = seq[-3:]
    denom = s2 - 2.0 * s1 + s0
    value = s2 - (s2 - s1) ** 2 / denom if abs(denom) > 1e-15 else s2
    if not math.isfinite(value):
        value = s2
    value = min(max(value, 0.0), 1.0)
    return TailDependence(value=value, last_iterates=(s1, s2), converged=abs(s2 - s1) <= 1e-3)
