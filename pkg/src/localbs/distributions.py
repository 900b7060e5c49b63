"""Exp(1) and the conditioned law Exp+(n), plus the threshold map b -> p_{d,b}.

Exp+(n) is the law of ``Y_1`` given that ``Y_1`` is not the minimum of
``n`` IID Exp(1) variables.  Its density is

    rho_n(t) = n/(n-1) * exp(-t) * (1 - exp(-(n-1) t)),   t > 0,

and its survival function is ``exp(-b) * (n - exp(-(n-1) b)) / (n-1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import InputError, InternalError

__all__ = [
    "Exp1",
    "ExpPlus",
    "exp_plus_density",
    "exp_plus_survival",
    "exp_plus_cdf",
    "exp_plus_mean",
    "sample_exp_plus",
    "sample_exp_plus_order_stats",
    "threshold_exceedance",
    "solve_bc",
    "MAX_REJECTION_ROUNDS",
]

MAX_REJECTION_ROUNDS = 1_000_000
BC_BRACKET = (0.0, 50.0)


def _check_n(n) -> int:
    if int(n) != n or n < 2:
        raise InputError(f"Exp+(n) needs an integer n >= 2, got {n}")
    return int(n)


def exp_plus_density(n: int, t):
    n = _check_n(n)
    t = np.asarray(t, dtype=np.float64)
    pos = np.maximum(t, 0.0)
    out = n / (n - 1) * np.exp(-pos) * -np.expm1(-(n - 1) * pos)
    out = np.where(t > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def exp_plus_survival(n: int, b):
    """P(Exp+(n) >= b); equals p_{d,b} for n = d + 1."""
    n = _check_n(n)
    b = np.asarray(b, dtype=np.float64)
    pos = np.maximum(b, 0.0)
    out = np.exp(-pos) * (n - np.exp(-(n - 1) * pos)) / (n - 1)
    out = np.where(b > 0, out, 1.0)
    return float(out) if out.ndim == 0 else out


def exp_plus_cdf(n: int, t):
    n = _check_n(n)
    t = np.asarray(t, dtype=np.float64)
    pos = np.maximum(t, 0.0)
    # n(1 - e^-t) - (1 - e^-nt) cancels to O(t^2); switch to the series near 0
    direct = (-n * np.expm1(-pos) + np.expm1(-n * pos)) / (n - 1)
    small = np.minimum(pos, 1e-4)
    series = n * small**2 / 2 - n * (n + 1) * small**3 / 6 + n * (n * n + n + 1) * small**4 / 24
    out = np.where(pos < 1e-4, series, direct)
    out = np.where(t > 0, np.clip(out, 0.0, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def exp_plus_mean(n: int) -> float:
    n = _check_n(n)
    return (n + 1) / n


def sample_exp_plus(n: int, rng: np.random.Generator, size=None):
    """Exact Exp+(n) draws by rejection from Exp(1).

    A proposal ``Y ~ Exp(1)`` is accepted with probability
    ``1 - exp(-(n-1) Y)``; the expected acceptance rate is ``(n-1)/n``.
    """
    n = _check_n(n)
    count = 1 if size is None else int(np.prod(size))
    out = np.empty(count)
    filled = 0
    for _ in range(MAX_REJECTION_ROUNDS):
        need = count - filled
        if need == 0:
            break
        m = need + need // max(n - 1, 1) + 16
        y = rng.standard_exponential(m)
        u = rng.random(m)
        acc = y[u < -np.expm1(-(n - 1) * y)][:need]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    else:
        raise InternalError("Exp+ rejection sampler did not terminate; RNG is broken")
    if size is None:
        return float(out[0])
    return out.reshape(size)


def sample_exp_plus_order_stats(n: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Exp+(n) by construction: a uniformly chosen non-minimal coordinate of n IID Exp(1)."""
    n = _check_n(n)
    y = rng.standard_exponential((size, n))
    lowest = np.argmin(y, axis=1)
    pick = rng.integers(0, n - 1, size=size)
    pick = pick + (pick >= lowest)
    return y[np.arange(size), pick]


@numba.njit(cache=True)
def draw_exp_plus(n, rng):
    """Scalar rejection draw for compiled kernels."""
    for _ in range(1_000_000):
        y = rng.standard_exponential()
        if rng.random() < -math.expm1(-(n - 1) * y):
            return y
    raise RuntimeError("Exp+ rejection sampler did not terminate")


@dataclass(frozen=True)
class Exp1:
    def cdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = np.where(t > 0, -np.expm1(-np.maximum(t, 0.0)), 0.0)
        return float(out) if out.ndim == 0 else out

    def pdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = np.where(t > 0, np.exp(-np.maximum(t, 0.0)), 0.0)
        return float(out) if out.ndim == 0 else out

    def survival(self, b):
        b = np.asarray(b, dtype=np.float64)
        out = np.where(b > 0, np.exp(-np.maximum(b, 0.0)), 1.0)
        return float(out) if out.ndim == 0 else out

    @property
    def mean(self) -> float:
        return 1.0

    def sample(self, rng, size=None):
        return rng.standard_exponential(size)

    @property
    def label(self) -> str:
        return "Exp(1)"


@dataclass(frozen=True)
class ExpPlus:
    n: int

    def __post_init__(self):
        _check_n(self.n)

    def cdf(self, t):
        return exp_plus_cdf(self.n, t)

    def pdf(self, t):
        return exp_plus_density(self.n, t)

    def survival(self, b):
        return exp_plus_survival(self.n, b)

    @property
    def mean(self) -> float:
        return exp_plus_mean(self.n)

    def sample(self, rng, size=None):
        return sample_exp_plus(self.n, rng, size)

    @property
    def label(self) -> str:
        return f"ExpPlus({self.n})"


def threshold_exceedance(d: int, b: float) -> float:
    """p_{d,b} = P(Exp+(d+1) >= b)."""
    return exp_plus_survival(d + 1, b)


def solve_bc(d: int, alpha: float, tol: float = 1e-12) -> float:
    """Critical threshold: the unique b > 0 with p_{d,b} = alpha.

    Bisection on [0, 50]; b -> p_{d,b} is continuous and strictly decreasing
    from 1 at b = 0 to below 1e-21 at b = 50.
    """
    if int(d) != d or d < 1:
        raise InputError(f"solve_bc: d must be a positive integer, got {d}")
    if not 0.0 < alpha < 1.0:
        raise InputError(f"solve_bc: alpha must lie in (0, 1), got {alpha}")
    lo, hi = BC_BRACKET
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if threshold_exceedance(d, mid) > alpha:
            lo = mid
        else:
            hi = mid
    b = 0.5 * (lo + hi)
    if abs(threshold_exceedance(d, b) - alpha) >= tol:
        raise InternalError(f"solve_bc: bisection residual too large at d={d}, alpha={alpha}")
    return b
