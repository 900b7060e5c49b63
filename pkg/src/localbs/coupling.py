"""Couplings of two local Bak-Sneppen chains and the tail bounds they give on d̄_t.

Independent coupling (any graph)
    Both chains read their fresh fitnesses from one shared field
    ``K(t, v)(u)``.  At time ``t`` a chain centred at ``v`` uses
    ``K(t, v)``, so while the walks are apart they use different entries and
    evolve independently.  Once they meet they read the same vector and stay
    glued, and the full states coalesce after the glued walk has covered V
    with closed neighbourhoods.

Reflection coupling (N-cycle, N divisible by 4)
    The second walk mirrors the first through the equator ``{N/4, 3N/4}``
    (``v -> (N/2 - v) mod N``) until the first walk reaches the equator;
    from then on both chains share fitnesses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .dynamics import ChainState, _argmin_closed
from .errors import InputError
from .graph import Graph, cycle
from .rng import field_exponential, field_key
from .stats import loglinear_slope

__all__ = [
    "CouplingTrace",
    "TailEstimate",
    "CycleBounds",
    "run_independent_coupling",
    "run_field_chain",
    "walk_meeting_times",
    "cover_times",
    "estimate_sigma_tilde",
    "bounds_general",
    "reflect",
    "run_reflection_coupling",
    "reflection_replicas",
    "cycle_bound_times",
    "cycle_bounds_from_samples",
    "final_decade_slope",
    "DEFAULT_MAX_STEPS",
    "DEFAULT_DELTA",
]

DEFAULT_MAX_STEPS = 10**7
DEFAULT_DELTA = 1e-6


@dataclass(frozen=True)
class CouplingTrace:
    """Times recorded along one coupled path; ``None`` marks a censored value.

    tau_walk
        first time the two walks are glued (same vertex and same fitnesses
        on its closed neighbourhood; for t > 0 meeting implies gluing).
    sigma_bar
        steps after ``tau_walk`` until the glued walk's closed
        neighbourhoods cover V.
    tau_chain
        first time the full states coincide.
    sigma_bar_b
        reflection runs only: steps after ``tau_walk`` until everything but
        the far equator vertex is covered.
    """

    tau_walk: int | None
    sigma_bar: int | None
    tau_chain: int | None
    meet_vertex: int | None
    sigma_bar_b: int | None = None
    truncated: bool = False
    violations: int = 0


@dataclass(frozen=True)
class TailEstimate:
    """Monte Carlo estimate of ``P(T > t)`` for ``t = 0..horizon``."""

    tail: np.ndarray
    se: np.ndarray
    replicas: int
    censored: float = 0.0

    @property
    def horizon(self) -> int:
        return self.tail.size - 1

    @classmethod
    def from_samples(cls, samples, horizon: int | None = None) -> "TailEstimate":
        """Samples are nonnegative ints; negative entries mean "not observed" (+inf)."""
        x = np.asarray(samples, dtype=np.int64)
        if x.size == 0:
            raise InputError("tail estimate needs at least one replica")
        observed = x[x >= 0]
        if horizon is None:
            horizon = int(observed.max()) if observed.size else 0
        counts = np.bincount(observed, minlength=horizon + 1)[: horizon + 1]
        # P(T > t) = 1 - P(T <= t); censored mass never leaves the tail
        at_most = np.cumsum(counts)
        at_most[-1] = np.sum(observed <= horizon)
        tail = 1.0 - at_most / x.size
        tail = np.clip(tail, 0.0, 1.0)
        return cls(tail, np.sqrt(tail * (1 - tail) / x.size), int(x.size), float(np.mean(x < 0)))

    def at(self, t: int) -> float:
        return float(self.tail[t]) if t <= self.horizon else float(self.tail[-1])

    def cdf(self) -> np.ndarray:
        return 1.0 - self.tail


@dataclass(frozen=True)
class CycleBounds:
    tau1: TailEstimate
    tau2: TailEstimate
    tau3: TailEstimate
    lower: TailEstimate
    upper: TailEstimate
    samples: tuple[np.ndarray, np.ndarray, np.ndarray]


# ----------------------------------------------------------- independent coupling


@numba.njit(cache=True)
def _fill_from_field(ptr, idx, fitness, x, key, t):
    for k in range(ptr[x], ptr[x + 1]):
        u = idx[k]
        fitness[u] = field_exponential(key, t, x, u)


@numba.njit(cache=True)
def _field_chain(ptr, idx, fitness, x, key, steps):
    for t in range(1, steps + 1):
        x, _ = _argmin_closed(ptr, idx, fitness, x)
        _fill_from_field(ptr, idx, fitness, x, key, t)
    return x


@numba.njit(cache=True)
def _independent_coupling(ptr, idx, fit, fitp, x, xp, key, max_steps, check):
    n = ptr.size - 1
    diff = 0
    for v in range(n):
        if fit[v] != fitp[v]:
            diff += 1
    glued = x == xp
    if glued:
        for k in range(ptr[x], ptr[x + 1]):
            if fit[idx[k]] != fitp[idx[k]]:
                glued = False
    tau_walk = 0 if glued else -1
    meet = x if glued else -1
    covered = np.zeros(n, dtype=np.bool_)
    ncov = 0
    sigma_bar = -1
    if glued:
        for k in range(ptr[x], ptr[x + 1]):
            covered[idx[k]] = True
            ncov += 1
        if ncov == n:
            sigma_bar = 0
    tau_chain = 0 if (x == xp and diff == 0) else -1
    touched = np.empty(2 * n, dtype=np.int64)
    stamp = np.zeros(n, dtype=np.int64)
    violations = 0
    t = 0
    while (tau_chain < 0 or sigma_bar < 0) and t < max_steps:
        nx, _ = _argmin_closed(ptr, idx, fit, x)
        nxp, _ = _argmin_closed(ptr, idx, fitp, xp)
        t += 1
        m = 0
        for k in range(ptr[nx], ptr[nx + 1]):
            u = idx[k]
            if stamp[u] != t:
                stamp[u] = t
                touched[m] = u
                m += 1
        for k in range(ptr[nxp], ptr[nxp + 1]):
            u = idx[k]
            if stamp[u] != t:
                stamp[u] = t
                touched[m] = u
                m += 1
        for j in range(m):
            if fit[touched[j]] != fitp[touched[j]]:
                diff -= 1
        _fill_from_field(ptr, idx, fit, nx, key, t)
        _fill_from_field(ptr, idx, fitp, nxp, key, t)
        for j in range(m):
            if fit[touched[j]] != fitp[touched[j]]:
                diff += 1
        x = nx
        xp = nxp
        if tau_walk < 0 and x == xp:
            tau_walk = t
            meet = x
        if tau_walk >= 0:
            for k in range(ptr[x], ptr[x + 1]):
                if not covered[idx[k]]:
                    covered[idx[k]] = True
                    ncov += 1
            if sigma_bar < 0 and ncov == n:
                sigma_bar = t - tau_walk
            if check:
                if x != xp:
                    violations += 1
                for u in range(n):
                    if covered[u] and fit[u] != fitp[u]:
                        violations += 1
        if tau_chain < 0 and x == xp and diff == 0:
            tau_chain = t
    return tau_walk, meet, sigma_bar, tau_chain, violations


def _opt(value: int):
    return None if value < 0 else int(value)


def run_independent_coupling(
    g: Graph,
    eta: ChainState,
    eta_prime: ChainState,
    rng: np.random.Generator,
    max_steps: int = DEFAULT_MAX_STEPS,
    check: bool = False,
    key=None,
) -> CouplingTrace:
    """Couple two chains from ``eta`` and ``eta_prime`` through one shared field.

    ``check=True`` audits, at every post-meeting step, that the walks stay
    together and that both chains agree on every vertex covered since the
    meeting; failures are counted in ``violations``.
    """
    eta.check_graph(g)
    eta_prime.check_graph(g)
    key = field_key(rng) if key is None else np.uint64(key)
    tw, meet, sb, tc, viol = _independent_coupling(
        g.closed_ptr, g.closed_idx, eta.fitness.copy(), eta_prime.fitness.copy(),
        eta.active, eta_prime.active, key, int(max_steps), bool(check),
    )
    return CouplingTrace(_opt(tw), _opt(sb), _opt(tc), _opt(meet),
                         truncated=(tc < 0 or sb < 0), violations=int(viol))


def run_field_chain(g: Graph, eta: ChainState, key, steps: int) -> ChainState:
    """A single chain driven by the field ``key``: one leg of the coupling on its own."""
    fitness = eta.fitness.copy()
    x = _field_chain(g.closed_ptr, g.closed_idx, fitness, eta.active, np.uint64(key), int(steps))
    return ChainState(int(x), fitness, eta.step_index + int(steps))


# ------------------------------------------------------------ walk functionals


@numba.njit(cache=True)
def _meeting_times(ptr, idx, u, v, rng, out, max_steps):
    for r in range(out.size):
        x = u
        y = v
        t = 0
        while x != y and t < max_steps:
            x = idx[ptr[x] + rng.integers(0, ptr[x + 1] - ptr[x])]
            y = idx[ptr[y] + rng.integers(0, ptr[y + 1] - ptr[y])]
            t += 1
        out[r] = t if x == y else -1


@numba.njit(cache=True)
def _cover_times(ptr, idx, start, rng, out, max_steps):
    n = ptr.size - 1
    stamp = np.zeros(n, dtype=np.int64)
    for r in range(out.size):
        mark = r + 1
        x = start
        cov = 0
        for k in range(ptr[x], ptr[x + 1]):
            stamp[idx[k]] = mark
            cov += 1
        t = 0
        while cov < n and t < max_steps:
            x = idx[ptr[x] + rng.integers(0, ptr[x + 1] - ptr[x])]
            t += 1
            for k in range(ptr[x], ptr[x + 1]):
                if stamp[idx[k]] != mark:
                    stamp[idx[k]] = mark
                    cov += 1
        out[r] = t if cov == n else -1


def walk_meeting_times(g: Graph, u: int, v: int, replicas: int, rng, max_steps: int = DEFAULT_MAX_STEPS):
    """Meeting times of two independent lazy walks from ``u`` and ``v`` (-1 if censored)."""
    out = np.empty(int(replicas), dtype=np.int64)
    _meeting_times(g.closed_ptr, g.closed_idx, g.check_vertex(u), g.check_vertex(v), rng, out, int(max_steps))
    return out


def cover_times(g: Graph, v: int, replicas: int, rng, max_steps: int = DEFAULT_MAX_STEPS):
    """Samples of the neighbourhood-cover time from ``v`` (-1 if censored)."""
    out = np.empty(int(replicas), dtype=np.int64)
    _cover_times(g.closed_ptr, g.closed_idx, g.check_vertex(v), rng, out, int(max_steps))
    return out


def estimate_sigma_tilde(g: Graph, v: int, replicas: int, rng, horizon: int | None = None,
                         max_steps: int = DEFAULT_MAX_STEPS) -> TailEstimate:
    """Tail of the time for the walk from ``v`` to cover V with closed neighbourhoods."""
    if replicas < 1:
        raise InputError("replicas must be >= 1")
    return TailEstimate.from_samples(cover_times(g, v, replicas, rng, max_steps), horizon)


def _inverse_transform(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Sample a stepwise CDF on 0..H; mass above cdf[-1] maps to -1 (= +inf)."""
    k = np.searchsorted(cdf, u, side="left")
    return np.where(k < cdf.size, k, -1).astype(np.int64)


def _sum_with_inf(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where((a < 0) | (b < 0), -1, a + b)


def bounds_general(g: Graph, horizon: int, replicas: int, rng,
                   max_steps: int = DEFAULT_MAX_STEPS) -> tuple[TailEstimate, TailEstimate]:
    """Monte Carlo lower and upper bounds on d̄_t for ``t = 0..horizon``.

    lower(t) = P(sigma_min > t), where sigma_min has CDF max_v F_v.
    upper(t) = max over start pairs of P(tau_meet + sigma_max > t), where
    sigma_max has CDF min_v F_v and is drawn independently of tau_meet by
    inverse transform.
    """
    horizon = int(horizon)
    per_vertex = [estimate_sigma_tilde(g, v, replicas, rng, horizon, max_steps) for v in range(g.n)]
    tails = np.vstack([est.tail for est in per_vertex])
    lo_idx = np.argmin(tails, axis=0)
    cols = np.arange(horizon + 1)
    lower_tail = tails[lo_idx, cols]
    lower_se = np.vstack([est.se for est in per_vertex])[lo_idx, cols]
    lower = TailEstimate(lower_tail, lower_se, int(replicas),
                         float(min(est.censored for est in per_vertex)))

    f_max = np.min(1.0 - tails, axis=0)
    best_tail = np.full(horizon + 1, -1.0)
    best_se = np.zeros(horizon + 1)
    # only step-cap censoring counts; sigma draws past the horizon are not censored
    censored = max(est.censored for est in per_vertex)
    for u in range(g.n):
        for v in range(u, g.n):
            tau = walk_meeting_times(g, u, v, replicas, rng, max_steps)
            sigma = _inverse_transform(f_max, rng.random(int(replicas)))
            est = TailEstimate.from_samples(_sum_with_inf(tau, sigma), horizon)
            better = est.tail > best_tail
            best_tail = np.where(better, est.tail, best_tail)
            best_se = np.where(better, est.se, best_se)
            censored = max(censored, float(np.mean(tau < 0)))
    return lower, TailEstimate(best_tail, best_se, int(replicas), censored)


# ----------------------------------------------------------- reflection coupling


def reflect(v: int, n: int) -> int:
    """Mirror image of ``v`` through the equator {N/4, 3N/4} of the N-cycle."""
    return (n // 2 - v) % n


@numba.njit(cache=True)
def _reflection(ptr, idx, n, rng, delta, max_steps):
    half = n // 2
    fit = np.empty(n)
    fitp = np.empty(n)
    excess = np.empty(n)
    for v in range(n):
        excess[v] = rng.standard_exponential()
        fit[v] = 1.0 / delta + excess[v]
    # Gamma'_0 < delta everywhere; on the mirror of A_0 it is an increasing
    # function of Gamma_0, so both argmins over A_0 reflect onto each other
    mirrored = np.zeros(n, dtype=np.bool_)
    for k in range(ptr[0], ptr[1]):
        v = idx[k]
        w = (half - v) % n
        fitp[w] = -delta * math.expm1(-excess[v])
        mirrored[w] = True
    for w in range(n):
        if not mirrored[w]:
            fitp[w] = -delta * math.expm1(-rng.standard_exponential())

    x = 0
    xp = half
    diff = n
    stamp = np.zeros(n, dtype=np.int64)
    touched = np.empty(6, dtype=np.int64)
    covered = np.zeros(n, dtype=np.bool_)
    ncov = 0
    ncov_b = 0
    tau_walk = -1
    meet = -1
    far = -1
    sigma_b = -1
    sigma = -1
    tau_chain = -1
    violations = 0
    t = 0
    while (tau_chain < 0 or sigma < 0) and t < max_steps:
        nx, _ = _argmin_closed(ptr, idx, fit, x)
        if x != xp:
            nxp = (half - nx) % n
            check, _ = _argmin_closed(ptr, idx, fitp, xp)
            if check != nxp:
                violations += 1
        else:
            nxp = nx
        t += 1
        mirror = nxp != nx
        m = 0
        for k in range(ptr[nx], ptr[nx + 1]):
            u = idx[k]
            w = (half - u) % n if mirror else u
            if stamp[u] != t:
                stamp[u] = t
                touched[m] = u
                m += 1
            if stamp[w] != t:
                stamp[w] = t
                touched[m] = w
                m += 1
        for j in range(m):
            if fit[touched[j]] != fitp[touched[j]]:
                diff -= 1
        # U_{-1}, U_0, U_1 placed at nx-1, nx, nx+1
        for e in range(-1, 2):
            fit[(nx + e) % n] = rng.standard_exponential()
        for k in range(ptr[nx], ptr[nx + 1]):
            u = idx[k]
            fitp[(half - u) % n if mirror else u] = fit[u]
        for j in range(m):
            if fit[touched[j]] != fitp[touched[j]]:
                diff += 1
        x = nx
        xp = nxp
        if tau_walk < 0 and x == xp:
            tau_walk = t
            meet = x
            far = (n - x) % n
        if tau_walk >= 0:
            for k in range(ptr[x], ptr[x + 1]):
                u = idx[k]
                if not covered[u]:
                    covered[u] = True
                    ncov += 1
                    if u != far:
                        ncov_b += 1
            if sigma_b < 0 and ncov_b == n - 1:
                sigma_b = t - tau_walk
            if sigma < 0 and ncov == n:
                sigma = t - tau_walk
        if tau_chain < 0 and x == xp and diff == 0:
            tau_chain = t
    return tau_walk, meet, sigma_b, sigma, tau_chain, violations


def _check_cycle_size(n: int):
    if int(n) != n or n < 4 or n % 4:
        raise InputError(f"reflection coupling needs N a positive multiple of 4, got {n}")


def run_reflection_coupling(n: int, rng, max_steps: int = DEFAULT_MAX_STEPS,
                            delta: float = DEFAULT_DELTA) -> CouplingTrace:
    """One path of the reflection coupling on the N-cycle from (0, Gamma_0), (N/2, Gamma'_0)."""
    _check_cycle_size(n)
    g = cycle(n)
    tw, meet, sb_b, sb, tc, viol = _reflection(g.closed_ptr, g.closed_idx, int(n), rng, float(delta), int(max_steps))
    return CouplingTrace(_opt(tw), _opt(sb), _opt(tc), _opt(meet), _opt(sb_b),
                         truncated=(tc < 0 or sb < 0), violations=int(viol))


def reflection_replicas(n: int, replicas: int, rng, max_steps: int = DEFAULT_MAX_STEPS,
                        delta: float = DEFAULT_DELTA) -> dict[str, np.ndarray]:
    """Arrays of tau_walk, sigma_bar_b, sigma_bar, tau_chain, violations over replicas."""
    _check_cycle_size(n)
    g = cycle(n)
    rows = np.array([
        _reflection(g.closed_ptr, g.closed_idx, int(n), rng, float(delta), int(max_steps))
        for _ in range(int(replicas))
    ], dtype=np.int64).reshape(-1, 6)
    return {
        "tau_walk": rows[:, 0], "meet_vertex": rows[:, 1], "sigma_bar_b": rows[:, 2],
        "sigma_bar": rows[:, 3], "tau_chain": rows[:, 4], "violations": rows[:, 5],
    }


# ------------------------------------------------------------- cycle bound times


@numba.njit(cache=True)
def _cycle_taus(n, rng, out1, out2, out3, max_steps):
    half = n // 2
    quarter = n // 4
    stamp = np.zeros(n, dtype=np.int64)
    for r in range(out1.size):
        x = 0
        t = 0
        while not (quarter <= x <= 3 * quarter) and t < max_steps:
            x = (x + rng.integers(0, 3) - 1) % n
            t += 1
        out1[r] = t if quarter <= x <= 3 * quarter else -1

        mark = r + 1
        x = 0
        cov = 0
        cov_b = 0
        for e in range(-1, 2):
            u = (x + e) % n
            stamp[u] = mark
            cov += 1
            if u != half:
                cov_b += 1
        t = 0
        tau2 = 0 if cov_b == n - 1 else -1
        while cov < n and t < max_steps:
            x = (x + rng.integers(0, 3) - 1) % n
            t += 1
            for e in range(-1, 2):
                u = (x + e) % n
                if stamp[u] != mark:
                    stamp[u] = mark
                    cov += 1
                    if u != half:
                        cov_b += 1
            if tau2 < 0 and cov_b == n - 1:
                tau2 = t
        out2[r] = tau2
        out3[r] = t if cov == n else -1


def cycle_bound_times(n: int, replicas: int, rng, horizon: int | None = None,
                      max_steps: int = DEFAULT_MAX_STEPS) -> CycleBounds:
    """Laws of the three walk functionals on the N-cycle and the resulting sandwich.

    tau1 is the first time the walk from 0 is within N/4 of N/2; tau2 and
    tau3 are the times for the walk from 0 to cover V minus {N/2}, resp. V,
    with closed neighbourhoods.  tau2 and tau3 share one walk (so tau2 <=
    tau3 pathwise); tau1 comes from an independent walk.  Returned bounds:
    lower(t) = P(tau1 + tau2 > t) / 2, upper(t) = P(tau1 + tau3 > t).
    """
    _check_cycle_size(n)
    r = int(replicas)
    t1, t2, t3 = (np.empty(r, dtype=np.int64) for _ in range(3))
    _cycle_taus(int(n), rng, t1, t2, t3, int(max_steps))
    return cycle_bounds_from_samples(t1, t2, t3, horizon)


def cycle_bounds_from_samples(t1, t2, t3, horizon: int | None = None) -> CycleBounds:
    """Assemble the sandwich from raw (tau1, tau2, tau3) samples; -1 marks censoring."""
    t1, t2, t3 = (np.asarray(x, dtype=np.int64) for x in (t1, t2, t3))
    s_low = _sum_with_inf(t1, t2)
    s_up = _sum_with_inf(t1, t3)
    if horizon is None:
        horizon = int(max(s_up.max(), s_low.max(), 0))
    low = TailEstimate.from_samples(s_low, horizon)
    up = TailEstimate.from_samples(s_up, horizon)
    half_low = TailEstimate(0.5 * low.tail, 0.5 * low.se, low.replicas, low.censored)
    return CycleBounds(
        TailEstimate.from_samples(t1, horizon),
        TailEstimate.from_samples(t2, horizon),
        TailEstimate.from_samples(t3, horizon),
        half_low,
        up,
        (t1, t2, t3),
    )


def final_decade_slope(est: TailEstimate, min_exceedances: int = 50) -> tuple[float, int]:
    """Slope of log P(T > t) over the last decade of tail values the sample resolves.

    The resolved range is where at least ``min_exceedances`` replicas exceed
    ``t``; the fit window is where the tail lies within a factor of ten of
    the smallest resolved value.  Returns (slope, number of points fitted).
    """
    floor = min_exceedances / est.replicas
    resolved = np.flatnonzero(est.tail >= floor)
    if resolved.size < 3:
        return float("nan"), 0
    end = est.tail[resolved[-1]]
    window = resolved[est.tail[resolved] <= 10 * end]
    if window.size < 3:
        window = resolved[-3:]
    return loglinear_slope(window, est.tail[window]), int(window.size)
