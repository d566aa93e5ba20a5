"""Small numerical helpers: bracketed root finding and finite-difference derivatives."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import NumericError


def invert_increasing(f: Callable[[float], float], target: float, lo: float, hi: float,
                      width: float = 1e-12, max_iter: int = 200) -> float:
    """Solve ``f(x) = target`` for nondecreasing ``f`` on ``[lo, hi]``.

    Bisection down to ``width`` followed by a single secant step between the
    final bracket ends. Raises :class:`NumericError` if ``f`` is found to be
    non-monotone on the bracket.
    """
    f_lo, f_hi = f(lo), f(hi)
    if target <= f_lo:
        return lo
    if target >= f_hi:
        return hi
    for _ in range(max_iter):
        if hi - lo <= width:
            break
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if not (f_lo - 1e-14 <= f_mid <= f_hi + 1e-14):
            raise NumericError(f"function is not monotone on the bracket near x={mid:.6g}")
        if f_mid < target:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    else:
        raise NumericError("bisection did not reach the requested width")
    if f_hi > f_lo:
        x = lo + (target - f_lo) * (hi - lo) / (f_hi - f_lo)
        return min(max(x, lo), hi)
    return 0.5 * (lo + hi)


def expand_bracket(f: Callable[[float], float], target: float, lo: float, hi: float,
                   max_doublings: int = 200) -> float:
    """Grow ``hi`` geometrically until ``f(hi) >= target`` for increasing ``f``."""
    step = max(hi - lo, 1.0)
    for _ in range(max_doublings):
        if f(hi) >= target:
            return hi
        hi = hi + step
        step *= 2.0
    raise NumericError("could not bracket the root")


def numerical_hessian(f: Callable[[np.ndarray], float], x: np.ndarray,
                      rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    k = x.size
    h = rel_step * np.maximum(np.abs(x), 1.0)
    hess = np.empty((k, k))
    f0 = f(x)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        hess[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h[i] * h[j])
            hess[i, j] = hess[j, i] = val
    return hess


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                       rel_step: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    h = rel_step * np.maximum(np.abs(x), 1.0)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * h[i])
    return grad


def ceil_index(p: float, n: int) -> int:
    """``ceil(p * n)`` robust to floating error in the product (e.g. 0.9 * 10)."""
    return int(math.ceil(p * n - 1e-9))


def weighted_logsumexp(logs: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``log|sum w * exp(logs)|`` and its sign over the last axis.

    A lean replacement for ``scipy.special.logsumexp`` in likelihood loops.
    """
    m = np.max(logs, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    total = np.sum(weights * np.exp(logs - m), axis=-1)
    with np.errstate(divide="ignore"):
        return m[..., 0] + np.log(np.abs(total)), np.sign(total)
