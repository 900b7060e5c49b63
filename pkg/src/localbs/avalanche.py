"""alpha-avalanches from threshold b.

``Psi_t(b)`` is the fraction of vertices with fitness >= b.  Avalanche start
times are ``T_0 = 0`` and every later ``t`` with ``Psi_t(b) >= alpha``; the
long-run mean gap between them converges to ``D(alpha, b) = 1 / pi(A)``
where ``A = {Psi >= alpha}``.

``Psi_t(b) >= alpha`` holds exactly when at least ``ceil(alpha * n)``
vertices reach the threshold, and that count is what every function here
compares against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .distributions import ExpPlus, sample_exp_plus, solve_bc, threshold_exceedance
from .dynamics import ChainState, StepRecord, _argmin_closed, diagnostics
from .errors import InputError, InsufficientDataError
from .graph import Graph
from .stationary import sample_stationary_batch
from .stats import batch_means_se, binom_tail, ks_one_sample

__all__ = [
    "required_count",
    "ThresholdTracker",
    "AvalancheRecord",
    "track_avalanches",
    "track_avalanche_grid",
    "estimate_D",
    "binomial_sandwich",
    "classify_regime",
    "limit_marginal_test",
    "stationary_event_probability",
    "stationary_event_probabilities",
    "SUBCRITICAL",
    "CRITICAL",
    "SUPERCRITICAL",
]

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"

_CHUNK = 1 << 16


def required_count(alpha: float, n: int) -> int:
    """Smallest count c with c / n >= alpha (guarding against alpha*n rounding up)."""
    return max(0, math.ceil(alpha * n - 1e-9))


def _check_pair(alpha: float, b: float):
    if not 0.0 < alpha <= 1.0:
        raise InputError(f"alpha must lie in (0, 1], got {alpha}")
    if not b > 0.0:
        raise InputError(f"threshold b must be positive, got {b}")


@dataclass
class ThresholdTracker:
    """Incrementally maintained count of vertices with fitness >= b.

    Use as a dynamics observer: only the replaced vertices of each step can
    change the count.
    """

    b: float
    n_vertices: int
    count_above: int = 0

    @classmethod
    def from_state(cls, state: ChainState, b: float) -> "ThresholdTracker":
        return cls(b, state.fitness.size, int(np.count_nonzero(state.fitness >= b)))

    @property
    def psi(self) -> float:
        return self.count_above / self.n_vertices

    def __call__(self, record: StepRecord):
        for old, new in zip(record.old_values, record.new_values):
            self.count_above += (new >= self.b) - (old >= self.b)

    def rescan(self, fitness) -> int:
        return int(np.count_nonzero(np.asarray(fitness) >= self.b))


@dataclass(frozen=True)
class AvalancheRecord:
    alpha: float
    b: float
    start_times: np.ndarray
    horizon: int
    n_vertices: int = field(default=0)

    @property
    def durations(self) -> np.ndarray:
        """T_{k+1} - T_k for consecutive recorded start times."""
        return np.diff(self.start_times)

    @property
    def count(self) -> int:
        """Number of start times after T_0."""
        return self.start_times.size - 1


@numba.njit(cache=True)
def _track_chunk(ptr, idx, fitness, x, steps, rng, bs, counts, need, pair_b, hits):
    ties = 0
    nb = bs.size
    npairs = need.size
    for s in range(steps):
        x, tt = _argmin_closed(ptr, idx, fitness, x)
        ties += tt
        for k in range(ptr[x], ptr[x + 1]):
            u = idx[k]
            old = fitness[u]
            new = rng.standard_exponential()
            for j in range(nb):
                counts[j] += (new >= bs[j]) - (old >= bs[j])
            fitness[u] = new
        for p in range(npairs):
            hits[p, s] = counts[pair_b[p]] >= need[p]
    return x, ties


def track_avalanche_grid(
    g: Graph,
    s0: ChainState,
    pairs: Sequence[tuple[float, float]],
    steps: int,
    rng: np.random.Generator,
    checkpoints: int = 0,
) -> tuple[list[AvalancheRecord], ChainState]:
    """Track several (alpha, b) pairs along one trajectory.

    The trajectory consumes ``rng`` exactly as :func:`dynamics.run` does.
    With ``checkpoints > 0`` the incremental counts are compared against a
    full rescan at that many chunk boundaries (raises AssertionError on a
    mismatch).
    """
    s0.check_graph(g)
    if int(steps) != steps or steps < 1:
        raise InputError(f"steps must be a positive integer, got {steps}")
    for alpha, b in pairs:
        _check_pair(alpha, b)
    bs = np.array(sorted({float(b) for _, b in pairs}))
    pair_b = np.array([int(np.searchsorted(bs, b)) for _, b in pairs], dtype=np.int64)
    need = np.array([required_count(a, g.n) for a, _ in pairs], dtype=np.int64)
    fitness = s0.fitness.copy()
    counts = np.array([np.count_nonzero(fitness >= b) for b in bs], dtype=np.int64)
    x = s0.active
    found: list[list[np.ndarray]] = [[np.zeros(1, dtype=np.int64)] for _ in pairs]
    done = 0
    chunk_no = 0
    n_chunks = -(-int(steps) // _CHUNK)
    check_every = max(1, n_chunks // checkpoints) if checkpoints else 0
    hits = np.empty((len(pairs), min(_CHUNK, int(steps))), dtype=np.bool_)
    while done < steps:
        m = min(_CHUNK, int(steps) - done)
        x, ties = _track_chunk(g.closed_ptr, g.closed_idx, fitness, x, m, rng, bs, counts, need, pair_b, hits)
        diagnostics.argmin_ties += ties
        for p in range(len(pairs)):
            found[p].append(np.flatnonzero(hits[p, :m]) + done + 1)
        done += m
        chunk_no += 1
        if check_every and chunk_no % check_every == 0:
            for j, b in enumerate(bs):
                assert counts[j] == np.count_nonzero(fitness >= b), "threshold count drifted"
    records = [
        AvalancheRecord(float(a), float(b), np.concatenate(found[p]), int(steps), g.n)
        for p, (a, b) in enumerate(pairs)
    ]
    return records, ChainState(int(x), fitness, s0.step_index + int(steps))


def track_avalanches(g: Graph, s0: ChainState, alpha: float, b: float, steps: int,
                     rng: np.random.Generator) -> AvalancheRecord:
    records, _ = track_avalanche_grid(g, s0, [(alpha, b)], steps, rng)
    return records[0]


def estimate_D(record: AvalancheRecord, batches: int = 20) -> tuple[float, float]:
    """Long-run mean gap between avalanche starts, with a batch-means standard error.

    The gap T_1 - T_0 depends on the initial state and is dropped, so the
    estimate is (T_m - T_1) / (m - 1).
    """
    if record.count < 2:
        raise InsufficientDataError(
            f"need at least 2 avalanche starts after T_0, got {record.count} within {record.horizon} steps",
            horizon=record.horizon,
        )
    gaps = np.diff(record.start_times[1:])
    estimate = float((record.start_times[-1] - record.start_times[1]) / gaps.size)
    return estimate, batch_means_se(gaps, batches)


def binomial_sandwich(n_vertices: int, d: int, alpha: float, b: float) -> tuple[float, float]:
    """Exact binomial bounds on pi(Psi(b) >= alpha) for a d-regular graph.

    Outside A_{X_0} the stationary fitnesses are IID Exp+(d+1), each above b
    with probability p_{d,b}.  With S ~ Bin(n - (d+1), p_{d,b}) and
    m = ceil(alpha n), returns (P(S >= m), P(S >= m - (d+1))).
    """
    if d < 2 or n_vertices <= d + 1:
        raise InputError(f"binomial_sandwich: need d >= 2 and n > d+1, got n={n_vertices}, d={d}")
    _check_pair(alpha, b)
    m = required_count(alpha, n_vertices)
    k = n_vertices - (d + 1)
    p = threshold_exceedance(d, b)
    return binom_tail(k, p, m), binom_tail(k, p, m - (d + 1))


def classify_regime(d: int, alpha: float, b: float, tol: float = 1e-9) -> str:
    if not b > 0:
        raise InputError(f"threshold b must be positive, got {b}")
    bc = solve_bc(d, alpha)
    if abs(b - bc) <= tol:
        return CRITICAL
    return SUBCRITICAL if b < bc else SUPERCRITICAL


def limit_marginal_test(graphs: Sequence[Graph], samples: int, rng: np.random.Generator,
                        vertex: int = 0) -> list[tuple[int, float, float]]:
    """KS distance between the stationary fitness at ``vertex`` and Exp+(d+1).

    Draws the site's marginal under the constant-degree stationary law
    (Exp(1) when the site lies in A_{X_0}, Exp+(d+1) otherwise, X_0 uniform).
    Returns (|V|, KS statistic, p-value) per graph.
    """
    degrees = {g.regular_degree() for g in graphs}
    if len(degrees) != 1 or None in degrees or min(degrees) < 2:
        raise InputError("limit_marginal_test needs graphs of one common degree d >= 2")
    sizes = [g.n for g in graphs]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InputError("graph sizes must be strictly increasing")
    d = degrees.pop()
    law = ExpPlus(d + 1)
    out = []
    for g in graphs:
        v = g.check_vertex(vertex)
        x0 = rng.integers(0, g.n, size=int(samples))
        inside = g.membership_matrix()[x0, v]
        values = sample_exp_plus(d + 1, rng, int(samples))
        values[inside] = rng.standard_exponential(int(inside.sum()))
        stat, pval = ks_one_sample(values, law.cdf)
        out.append((g.n, stat, pval))
    return out


def stationary_event_probabilities(g: Graph, pairs, samples: int,
                                   rng: np.random.Generator) -> list[tuple[float, float]]:
    """Monte Carlo pi(Psi(b) >= alpha) for each (alpha, b), all read off one stationary batch."""
    pairs = [(float(a), float(b)) for a, b in pairs]
    for a, b in pairs:
        _check_pair(a, b)
    _, fitness = sample_stationary_batch(g, int(samples), rng)
    out = []
    for a, b in pairs:
        hit = np.count_nonzero(fitness >= b, axis=1) >= required_count(a, g.n)
        p = float(hit.mean())
        out.append((p, math.sqrt(p * (1 - p) / hit.size)))
    return out


def stationary_event_probability(g: Graph, alpha: float, b: float, samples: int,
                                 rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo pi(Psi(b) >= alpha) from exact stationary draws, with its standard error."""
    return stationary_event_probabilities(g, [(alpha, b)], samples, rng)[0]
