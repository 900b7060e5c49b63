"""Exact sampling from, and closed forms for, the stationary law of the chain.

Sampler for a general connected graph:

* draw ``X_0`` with probability ``|A_v| / S_G``;
* run a lazy walk ``Z`` from ``X_0`` and give each vertex ``v`` the level
  ``min{i : Z_i in A_v}``;
* level 0 (that is ``A_{X_0}``) gets IID Exp(1) fitnesses, and the vertices
  first reached at level ``i >= 1`` get IID Exp+(|A_{Z_i}|).

The walk stops once every vertex has a level; later levels would be empty.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numba
import numpy as np

from .distributions import Exp1, ExpPlus, draw_exp_plus, sample_exp_plus
from .dynamics import ChainState, step_many
from .errors import InputError, InternalError
from .graph import Graph, boundary
from .stats import chi_square_homogeneity, ks_two_sample

__all__ = [
    "HittingPartition",
    "MarginalMixture",
    "ProductMixture",
    "build_hitting_partition",
    "fitness_from_partition",
    "sample_stationary",
    "sample_stationary_batch",
    "sample_stationary_regular",
    "sample_stationary_regular_batch",
    "hitting_distribution",
    "stationary_marginal",
    "regular_marginal",
    "regular_pair_joint",
    "StationarityReport",
    "verify_stationarity",
    "DEFAULT_WALK_CAP",
]

DEFAULT_WALK_CAP = 10**9


@dataclass(frozen=True)
class HittingPartition:
    """Levels of the auxiliary walk started at ``source``.

    ``walk[i]`` is ``Z_i`` and ``levels[v]`` is the first ``i`` with
    ``v in A_{Z_i}``.
    """

    source: int
    walk: tuple[int, ...]
    levels: tuple[int, ...]

    @property
    def classes(self) -> dict[int, frozenset[int]]:
        out: dict[int, set[int]] = {}
        for v, lev in enumerate(self.levels):
            out.setdefault(lev, set()).add(v)
        return {lev: frozenset(vs) for lev, vs in sorted(out.items())}

    def class_law(self, g: Graph, level: int):
        return Exp1() if level == 0 else ExpPlus(int(g.closed_sizes[self.walk[level]]))


def build_hitting_partition(
    g: Graph, x0: int, rng: np.random.Generator, max_steps: int = DEFAULT_WALK_CAP
) -> HittingPartition:
    x0 = g.check_vertex(x0)
    levels = [-1] * g.n
    for u in g.closed(x0):
        levels[u] = 0
    remaining = g.n - len(g.closed(x0))
    walk = [x0]
    z = x0
    while remaining:
        if len(walk) > max_steps:
            raise InternalError(f"hitting walk exceeded {max_steps} steps")
        lo, hi = g.closed_ptr[z], g.closed_ptr[z + 1]
        z = int(g.closed_idx[lo + rng.integers(0, hi - lo)])
        level = len(walk)
        walk.append(z)
        for u in g.closed(z):
            if levels[u] < 0:
                levels[u] = level
                remaining -= 1
    return HittingPartition(x0, tuple(walk), tuple(levels))


def fitness_from_partition(g: Graph, part: HittingPartition, rng: np.random.Generator) -> np.ndarray:
    """Draw the fitness vector given the partition (reference implementation)."""
    fitness = np.empty(g.n)
    for level, members in part.classes.items():
        order = sorted(members)
        fitness[order] = part.class_law(g, level).sample(rng, len(order))
    return fitness


@numba.njit(cache=True)
def _has_duplicates(row):
    s = np.sort(row)
    for k in range(1, s.size):
        if s[k] == s[k - 1]:
            return True
    return False


@numba.njit(cache=True)
def _stationary_rows(ptr, idx, cum_sizes, out_active, out_fit, rng, max_steps):
    n = ptr.size - 1
    total = cum_sizes[-1]
    stamp = np.zeros(n, dtype=np.int64)
    mark = 0
    for r in range(out_active.size):
        while True:
            mark += 1
            pick = rng.integers(0, total)
            x0 = np.searchsorted(cum_sizes, pick, side="right")
            covered = 0
            for k in range(ptr[x0], ptr[x0 + 1]):
                u = idx[k]
                stamp[u] = mark
                out_fit[r, u] = rng.standard_exponential()
                covered += 1
            z = x0
            walked = 0
            while covered < n:
                walked += 1
                if walked > max_steps:
                    return -1
                z = idx[ptr[z] + rng.integers(0, ptr[z + 1] - ptr[z])]
                size = ptr[z + 1] - ptr[z]
                for k in range(ptr[z], ptr[z + 1]):
                    u = idx[k]
                    if stamp[u] != mark:
                        stamp[u] = mark
                        out_fit[r, u] = draw_exp_plus(size, rng)
                        covered += 1
            if not _has_duplicates(out_fit[r]):
                break
        out_active[r] = x0
    return 0


def sample_stationary_batch(
    g: Graph, size: int, rng: np.random.Generator, max_steps: int = DEFAULT_WALK_CAP
) -> tuple[np.ndarray, np.ndarray]:
    """``size`` independent exact stationary draws as (actives, fitness matrix).

    A draw whose fitnesses collide (possible only through rounding) is
    redrawn whole.
    """
    actives = np.empty(int(size), dtype=np.int64)
    fitness = np.empty((int(size), g.n))
    cum = np.cumsum(g.closed_sizes).astype(np.int64)
    if _stationary_rows(g.closed_ptr, g.closed_idx, cum, actives, fitness, rng, int(max_steps)) < 0:
        raise InternalError(f"hitting walk exceeded {max_steps} steps")
    return actives, fitness


def sample_stationary(g: Graph, rng: np.random.Generator, max_steps: int = DEFAULT_WALK_CAP) -> ChainState:
    actives, fitness = sample_stationary_batch(g, 1, rng, max_steps)
    return ChainState(int(actives[0]), fitness[0], 0)


def _require_regular(g: Graph) -> int:
    d = g.regular_degree()
    if d is None or d < 2:
        raise InputError("graph must have constant degree d >= 2")
    return d


def sample_stationary_regular_batch(g: Graph, size: int, rng: np.random.Generator):
    """Constant-degree shortcut: Exp(1) on A_{X_0}, Exp+(d+1) elsewhere, X_0 uniform."""
    d = _require_regular(g)
    size = int(size)
    actives = rng.integers(0, g.n, size=size)
    fitness = sample_exp_plus(d + 1, rng, (size, g.n))
    inside = g.membership_matrix()[actives]
    fitness[inside] = rng.standard_exponential(int(inside.sum()))
    for r in np.flatnonzero([np.unique(row).size != g.n for row in fitness]):
        fitness[r] = sample_stationary_regular_batch(g, 1, rng)[1][0]
    return actives.astype(np.int64), fitness


def sample_stationary_regular(g: Graph, rng: np.random.Generator) -> ChainState:
    actives, fitness = sample_stationary_regular_batch(g, 1, rng)
    return ChainState(int(actives[0]), fitness[0], 0)


# ------------------------------------------------------------- closed forms


@lru_cache(maxsize=256)
def _hitting_table(g: Graph, v: int):
    """Exit law from the complement of A_v: rows are start vertices, columns ∂A_v."""
    av = g.closed(v)
    outside = [w for w in range(g.n) if w not in av]
    edge = sorted(boundary(g, v))
    if not outside:
        return outside, edge, np.zeros((0, len(edge)))
    pos = {w: i for i, w in enumerate(outside)}
    col = {z: j for j, z in enumerate(edge)}
    m = len(outside)
    system = np.eye(m)
    rhs = np.zeros((m, len(edge)))
    for i, w in enumerate(outside):
        share = 1.0 / g.closed_sizes[w]
        for y in g.closed(w):
            if y in pos:
                system[i, pos[y]] -= share
            else:
                rhs[i, col[y]] += share
    h = np.linalg.solve(system, rhs)
    resid = np.linalg.norm(system @ h - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if resid >= 1e-10:
        raise InternalError(f"hitting system residual {resid:.3g} too large")
    h.flags.writeable = False
    return outside, edge, h


def hitting_distribution(g: Graph, u: int, v: int) -> dict[int, float]:
    """P_u(X_{sigma_v} = z) for z in ∂A_v, where sigma_v is the first entrance to A_v."""
    u, v = g.check_vertex(u), g.check_vertex(v)
    if u in g.closed(v):
        raise InputError(f"start vertex {u} lies in A_{v}; the entrance time is 0")
    outside, edge, h = _hitting_table(g, v)
    row = h[outside.index(u)]
    return {z: float(p) for z, p in zip(edge, row)}


@dataclass(frozen=True)
class MarginalMixture:
    """Finite mixture of Exp(1) / Exp+(n) laws; ``components`` is ((weight, law), ...)."""

    components: tuple

    def __post_init__(self):
        total = sum(w for w, _ in self.components)
        if any(w < 0 for w, _ in self.components) or abs(total - 1.0) > 1e-12:
            raise InternalError(f"mixture weights must be nonnegative and sum to 1 (sum={total!r})")

    @classmethod
    def from_weights(cls, weights: dict) -> "MarginalMixture":
        """Coalesce equal laws and order them Exp(1) first, then Exp+ by n."""
        ordered = sorted(
            ((w, law) for law, w in weights.items() if w > 0),
            key=lambda c: (0, 0) if isinstance(c[1], Exp1) else (1, c[1].n),
        )
        return cls(tuple(ordered))

    def weight_of(self, law) -> float:
        return sum(w for w, lw in self.components if lw == law)

    def cdf(self, t):
        return sum(w * law.cdf(t) for w, law in self.components)

    def pdf(self, t):
        return sum(w * law.pdf(t) for w, law in self.components)

    def survival(self, b):
        return sum(w * law.survival(b) for w, law in self.components)

    @property
    def mean(self) -> float:
        return sum(w * law.mean for w, law in self.components)

    @property
    def label(self) -> str:
        return "+".join(f"{w:.6g}*{law.label}" for w, law in self.components)

    def __iter__(self) -> Iterator:
        return iter(self.components)


@dataclass(frozen=True)
class ProductMixture:
    """Mixture of product laws on pairs; ``components`` is ((weight, (law_u, law_v)), ...)."""

    components: tuple

    def cdf(self, s, t):
        return sum(w * a.cdf(s) * b.cdf(t) for w, (a, b) in self.components)

    def rectangle(self, s0, s1, t0, t1):
        """Probability of (s0, s1] x (t0, t1]."""
        return self.cdf(s1, t1) - self.cdf(s0, t1) - self.cdf(s1, t0) + self.cdf(s0, t0)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(w for w, _ in self.components)


def stationary_marginal(g: Graph, v: int) -> MarginalMixture:
    """Closed-form stationary law of Gamma_0(v) on a general graph."""
    v = g.check_vertex(v)
    total = int(g.closed_sizes.sum())
    av = g.closed(v)
    weights: dict = {Exp1(): sum(int(g.closed_sizes[u]) for u in av) / total}
    outside, edge, h = _hitting_table(g, v)
    for i, u in enumerate(outside):
        mu_u = g.closed_sizes[u] / total
        for j, z in enumerate(edge):
            law = ExpPlus(int(g.closed_sizes[z]))
            weights[law] = weights.get(law, 0.0) + mu_u * h[i, j]
    # renormalise away solver rounding (well below the 1e-12 contract)
    s = sum(weights.values())
    return MarginalMixture.from_weights({law: w / s for law, w in weights.items()})


def regular_marginal(d: int, n_vertices: int) -> MarginalMixture:
    """Fitness law at a site of a d-regular graph with ``n_vertices`` vertices."""
    if d < 2 or n_vertices < d + 1:
        raise InputError(f"regular_marginal: need d >= 2 and n >= d+1, got d={d}, n={n_vertices}")
    inside = (d + 1) / n_vertices
    return MarginalMixture.from_weights({Exp1(): inside, ExpPlus(d + 1): 1.0 - inside})


def regular_pair_joint(d: int, n_vertices: int) -> ProductMixture:
    """Joint law of (Gamma_0(u), Gamma_0(v)) for sites with disjoint closed neighbourhoods."""
    if d < 2:
        raise InputError(f"regular_pair_joint: need d >= 2, got {d}")
    if n_vertices < 2 * (d + 1):
        raise InputError(
            f"regular_pair_joint: need |V| >= 2(d+1) = {2 * (d + 1)} so that the "
            f"third weight 1 - 2(d+1)/|V| is nonnegative; got |V| = {n_vertices}"
        )
    w = (d + 1) / n_vertices
    e, p = Exp1(), ExpPlus(d + 1)
    return ProductMixture(((w, (e, p)), (w, (p, e)), (1.0 - 2 * w, (p, p))))


# ------------------------------------------------------------- invariance check


@dataclass(frozen=True)
class StationarityReport:
    """Outcome of :func:`verify_stationarity`.

    ``rows`` holds (test, target, statistic, p_value); ``test`` is "active"
    (vertex occupancy), "vertex" (fitness marginal at ``target``) or
    "count" (number of fitnesses >= ``target``).
    """

    rows: tuple
    family_level: float

    @property
    def per_test_level(self) -> float:
        return self.family_level / len(self.rows)

    @property
    def failing(self) -> list:
        return [(test, target) for test, target, _, p in self.rows if p <= self.per_test_level]

    @property
    def passed(self) -> bool:
        return not self.failing


def verify_stationarity(g: Graph, samples: int, rng: np.random.Generator, level: float = 1e-3,
                        thresholds=(0.5, 1.0, 2.0)) -> StationarityReport:
    """One-step invariance test of the exact sampler.

    Two independent batches are drawn; the second is advanced by one step
    of the dynamics and compared with the first: active-vertex occupancy and
    above-threshold counts by chi-square, each vertex marginal by two-sample
    KS.  ``level`` is the family-wise significance, split evenly (Bonferroni).
    """
    samples = int(samples)
    if samples < 10:
        raise InputError("verify_stationarity needs at least 10 samples")
    ref_active, ref = sample_stationary_batch(g, samples, rng)
    act, fit = sample_stationary_batch(g, samples, rng)
    step_many(g, act, fit, rng)
    rows = []
    stat, p = chi_square_homogeneity(np.bincount(ref_active, minlength=g.n), np.bincount(act, minlength=g.n))
    rows.append(("active", -1, stat, p))
    for v in range(g.n):
        stat, p = ks_two_sample(ref[:, v], fit[:, v])
        rows.append(("vertex", v, stat, p))
    for b in thresholds:
        ca = np.bincount(np.count_nonzero(ref >= b, axis=1), minlength=g.n + 1)
        cb = np.bincount(np.count_nonzero(fit >= b, axis=1), minlength=g.n + 1)
        stat, p = chi_square_homogeneity(ca, cb)
        rows.append(("count", float(b), stat, p))
    return StationarityReport(tuple(rows), float(level))
