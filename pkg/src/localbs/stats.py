"""Statistical tests used by the verification suite.

Kept in-tree so every p-value the acceptance suite reports can be audited
without an external statistics package.  KS p-values are asymptotic
(Kolmogorov limit law with Stephens' small-sample correction), which is
adequate at the 10^4+ sample sizes used here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError

__all__ = [
    "EmpiricalCdf",
    "kolmogorov_sf",
    "ks_one_sample",
    "ks_two_sample",
    "chi2_sf",
    "chi_square",
    "chi_square_homogeneity",
    "markov_chi_square",
    "binom_tail",
    "binom_pmf",
    "mc_se",
    "batch_means_se",
    "loglinear_slope",
]


@dataclass(frozen=True)
class EmpiricalCdf:
    sorted_samples: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalCdf":
        return cls(np.sort(np.asarray(samples, dtype=np.float64)))

    def __call__(self, t):
        # right-continuous: F(t) = #{x <= t} / n
        return np.searchsorted(self.sorted_samples, t, side="right") / self.sorted_samples.size


def kolmogorov_sf(x: float, tol: float = 1e-10) -> float:
    """P(K > x) for the Kolmogorov limit distribution."""
    if x <= 0.0:
        return 1.0
    if x < 1.0:
        # theta-function form converges fast for small x
        s = 0.0
        k = 1
        c = math.pi**2 / (8.0 * x * x)
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * c)
            s += term
            if term < tol:
                break
            k += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / x * s))
    s = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        s += term if k % 2 else -term
        if term < tol:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * s))


def _ks_pvalue(stat: float, n_eff: float) -> float:
    rn = math.sqrt(n_eff)
    return kolmogorov_sf((rn + 0.12 + 0.11 / rn) * stat)


def ks_one_sample(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    """Sup-distance between the empirical CDF and ``cdf``, with asymptotic p-value."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    if n < 10:
        raise InputError(f"ks_one_sample needs at least 10 samples, got {n}")
    f = np.clip(np.asarray(cdf(x), dtype=np.float64), 0.0, 1.0)
    i = np.arange(1, n + 1)
    stat = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    return stat, _ks_pvalue(stat, n)


def ks_two_sample(a, b) -> tuple[float, float]:
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size < 1 or b.size < 1:
        raise InputError("ks_two_sample needs nonempty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    stat = float(np.max(np.abs(fa - fb)))
    return stat, _ks_pvalue(stat, a.size * b.size / (a.size + b.size))


def _gammaincc(a: float, x: float) -> float:
    """Regularised upper incomplete gamma Q(a, x)."""
    if x <= 0.0:
        return 1.0
    lg = math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(10_000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-15:
                break
        return max(0.0, 1.0 - total * math.exp(-x + a * math.log(x) - lg))
    # modified Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return math.exp(-x + a * math.log(x) - lg) * h


def chi2_sf(x: float, dof: int) -> float:
    if dof < 1:
        raise InputError("chi-square needs at least one degree of freedom")
    return _gammaincc(dof / 2.0, x / 2.0)


def chi_square(observed, expected_probs) -> tuple[float, float]:
    """Pearson goodness of fit of counts against cell probabilities."""
    obs = np.asarray(observed, dtype=np.float64)
    p = np.asarray(expected_probs, dtype=np.float64)
    if obs.shape != p.shape or obs.ndim != 1:
        raise InputError("observed and expected must be 1-D of equal length")
    if np.any(p < 0):
        raise InputError("expected probabilities must be nonnegative")
    if np.any((p == 0) & (obs > 0)):
        raise InputError("expected probability 0 in a cell with nonzero observed count")
    keep = p > 0
    n = obs.sum()
    exp = n * p[keep] / p[keep].sum()
    stat = float(np.sum((obs[keep] - exp) ** 2 / exp))
    return stat, chi2_sf(stat, int(keep.sum()) - 1)


def _pool_sparse_columns(table: np.ndarray, min_total: float) -> np.ndarray:
    """Merge adjacent columns left to right until each holds ``min_total`` counts."""
    pooled, acc = [], np.zeros(table.shape[0])
    for col in table.T:
        acc = acc + col
        if acc.sum() >= min_total:
            pooled.append(acc)
            acc = np.zeros(table.shape[0])
    if acc.sum() > 0:
        if pooled:
            pooled[-1] = pooled[-1] + acc
        else:
            pooled.append(acc)
    return np.array(pooled).T


def chi_square_homogeneity(counts_a, counts_b, min_total: float = 10.0) -> tuple[float, float]:
    """Two-sample chi-square test that two count vectors share one distribution.

    Cells are ordered (e.g. counts of a discrete variable); sparse neighbouring
    cells are pooled so that every column holds at least ``min_total``
    observations across both samples.
    """
    table = np.vstack([np.asarray(counts_a, float), np.asarray(counts_b, float)])
    if table.shape[1] == 0 or np.any(table.sum(axis=1) == 0):
        raise InputError("chi_square_homogeneity needs two nonempty samples")
    table = _pool_sparse_columns(table, min_total)
    if table.shape[1] < 2:
        return 0.0, 1.0
    rows = table.sum(axis=1, keepdims=True)
    cols = table.sum(axis=0, keepdims=True)
    exp = rows * cols / table.sum()
    stat = float(np.sum((table - exp) ** 2 / exp))
    return stat, chi2_sf(stat, table.shape[1] - 1)


def markov_chi_square(counts, transition, stationary) -> tuple[float, float]:
    """Occupancy test for a trajectory of an ergodic finite Markov chain.

    Visit counts of a Markov chain are not multinomial, so Pearson's
    statistic is miscalibrated.  By the Markov-chain CLT,
    ``sqrt(T) (counts/T - pi)`` is asymptotically normal with covariance
    ``S_ij = pi_i Z_ij + pi_j Z_ji - pi_i delta_ij - pi_i pi_j`` where
    ``Z = (I - P + 1 pi^T)^-1``; the quadratic form in its pseudo-inverse is
    chi-square with ``n - 1`` degrees of freedom.
    """
    c = np.asarray(counts, dtype=np.float64)
    P = np.asarray(transition, dtype=np.float64)
    pi = np.asarray(stationary, dtype=np.float64)
    n = c.size
    if P.shape != (n, n) or pi.shape != (n,) or n < 2:
        raise InputError("markov_chi_square: counts, transition and stationary must have matching sizes >= 2")
    T = c.sum()
    if T <= 0:
        raise InputError("markov_chi_square needs a nonempty trajectory")
    Z = np.linalg.inv(np.eye(n) - P + np.outer(np.ones(n), pi))
    cov = pi[:, None] * Z + (pi[:, None] * Z).T - np.diag(pi) - np.outer(pi, pi)
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    keep = w > w.max() * 1e-10
    dev = V.T @ (c / T - pi)
    stat = float(T * np.sum(dev[keep] ** 2 / w[keep]))
    return stat, chi2_sf(stat, int(keep.sum()))


def _log_binom_pmf(n: int, p: float, j: int) -> float:
    return (
        math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
        + j * math.log(p) + (n - j) * math.log1p(-p)
    )


def binom_pmf(n: int, p: float, j: int) -> float:
    if not 0 <= j <= n:
        return 0.0
    if p in (0.0, 1.0):
        return float(j == (n if p == 1.0 else 0))
    return math.exp(_log_binom_pmf(n, p, j))


def binom_tail(n: int, p: float, k: int) -> float:
    """P(Bin(n, p) >= k), summed in log space."""
    if n < 0 or not 0.0 <= p <= 1.0:
        raise InputError(f"binom_tail: bad parameters n={n}, p={p}")
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    logs = [_log_binom_pmf(n, p, j) for j in range(k, n + 1)]
    top = max(logs)
    return min(1.0, math.exp(top) * math.fsum(math.exp(x - top) for x in logs))


def mc_se(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        return float("nan")
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def batch_means_se(values, batches: int = 20) -> float:
    """Standard error of the mean of a dependent sequence by batch means."""
    x = np.asarray(values, dtype=np.float64)
    k = min(batches, x.size)
    if k < 2:
        return float("nan")
    means = np.array([chunk.mean() for chunk in np.array_split(x, k)])
    return float(np.std(means, ddof=1) / math.sqrt(k))


def loglinear_slope(t, tail) -> float:
    """Least-squares slope of ``log(tail)`` against ``t``."""
    t = np.asarray(t, dtype=np.float64)
    y = np.log(np.asarray(tail, dtype=np.float64))
    return float(np.polyfit(t, y, 1)[0])
