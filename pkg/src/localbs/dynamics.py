"""The local Bak-Sneppen chain.

One step from ``(X_t, Gamma_t)``:

1. ``X_{t+1}`` is the argmin of ``Gamma_t`` over the closed neighbourhood
   ``A_{X_t}``;
2. every fitness on ``A_{X_{t+1}}`` is replaced by a fresh Exp(1) draw,
   taken in ascending vertex order;
3. all other fitnesses are kept.

Ties in step 1 have probability zero but can occur with doubles; they go to
the lowest vertex index and are counted in ``diagnostics.argmin_ties``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numba
import numpy as np

from .errors import InputError, InternalError
from .graph import Graph, vertex_stationary_measure, walk_transition_matrix
from .stats import markov_chi_square

__all__ = [
    "ChainState",
    "StepRecord",
    "Diagnostics",
    "diagnostics",
    "ObserverError",
    "step",
    "step_many",
    "run",
    "run_with_visits",
    "random_walk_step",
    "occupancy_test",
    "initial_state",
    "CsvTrajectoryWriter",
]


@dataclass
class Diagnostics:
    argmin_ties: int = 0


diagnostics = Diagnostics()


@dataclass(frozen=True, eq=False)
class ChainState:
    """A point ``(X_t, Gamma_t)`` of the state space, plus the time index."""

    active: int
    fitness: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        f = np.array(self.fitness, dtype=np.float64)
        if f.ndim != 1 or f.size == 0:
            raise InputError("fitness must be a nonempty 1-D array")
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise InputError("fitness values must be finite and nonnegative")
        if np.unique(f).size != f.size:
            raise InputError("fitness values must be pairwise distinct")
        if not 0 <= int(self.active) < f.size:
            raise InputError(f"active vertex {self.active} out of range")
        f.flags.writeable = False
        object.__setattr__(self, "fitness", f)
        object.__setattr__(self, "active", int(self.active))
        object.__setattr__(self, "step_index", int(self.step_index))

    def check_graph(self, g: Graph) -> "ChainState":
        if self.fitness.size != g.n:
            raise InputError(f"state has {self.fitness.size} fitnesses, graph has {g.n} vertices")
        return self

    def __eq__(self, other):
        return (
            isinstance(other, ChainState)
            and self.active == other.active
            and self.step_index == other.step_index
            and np.array_equal(self.fitness, other.fitness)
        )

    @classmethod
    def _trusted(cls, active, fitness, step_index) -> "ChainState":
        obj = object.__new__(cls)
        fitness.flags.writeable = False
        object.__setattr__(obj, "active", int(active))
        object.__setattr__(obj, "fitness", fitness)
        object.__setattr__(obj, "step_index", int(step_index))
        return obj


@dataclass(frozen=True)
class StepRecord:
    t: int
    new_active: int
    replaced: tuple[int, ...]
    new_values: tuple[float, ...]
    old_values: tuple[float, ...] = field(default=(), repr=False)


class ObserverError(RuntimeError):
    def __init__(self, step_index: int, observer, cause: BaseException):
        super().__init__(f"observer {observer!r} failed at step {step_index}: {cause}")
        self.step_index = step_index


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _argmin_closed(ptr, idx, fitness, x):
    lo = ptr[x]
    best = idx[lo]
    bval = fitness[best]
    ties = 0
    for k in range(lo + 1, ptr[x + 1]):
        u = idx[k]
        f = fitness[u]
        if f < bval:
            best = u
            bval = f
        elif f == bval:
            ties += 1
    return best, ties


@numba.njit(cache=True)
def _advance(ptr, idx, fitness, active, steps, rng, visits):
    """Run ``steps`` transitions in place; returns (final active, ties)."""
    x = active
    ties = 0
    for _ in range(steps):
        x, tt = _argmin_closed(ptr, idx, fitness, x)
        ties += tt
        for k in range(ptr[x], ptr[x + 1]):
            fitness[idx[k]] = rng.standard_exponential()
        visits[x] += 1
    return x, ties


@numba.njit(cache=True)
def _advance_rows(ptr, idx, fitness, actives, rng):
    ties = 0
    for r in range(actives.size):
        x, tt = _argmin_closed(ptr, idx, fitness[r], actives[r])
        ties += tt
        for k in range(ptr[x], ptr[x + 1]):
            fitness[r, idx[k]] = rng.standard_exponential()
        actives[r] = x
    return ties


# ---------------------------------------------------------------- public API


def step(g: Graph, s: ChainState, rng: np.random.Generator) -> tuple[ChainState, StepRecord]:
    """One transition of the chain."""
    s.check_graph(g)
    fitness = s.fitness.copy()
    visits = np.zeros(g.n, dtype=np.int64)
    x, ties = _advance(g.closed_ptr, g.closed_idx, fitness, s.active, 1, rng, visits)
    diagnostics.argmin_ties += ties
    lo, hi = g.closed_ptr[x], g.closed_ptr[x + 1]
    replaced = tuple(int(u) for u in g.closed_idx[lo:hi])
    record = StepRecord(
        t=s.step_index + 1,
        new_active=int(x),
        replaced=replaced,
        new_values=tuple(float(fitness[u]) for u in replaced),
        old_values=tuple(float(s.fitness[u]) for u in replaced),
    )
    return ChainState._trusted(x, fitness, s.step_index + 1), record


def step_many(g: Graph, actives: np.ndarray, fitness: np.ndarray, rng: np.random.Generator):
    """Apply one transition to each row of a batch of states, in place.

    ``actives`` has shape (m,) and ``fitness`` shape (m, n); rows are
    advanced in order, so the result is deterministic given ``rng``.
    """
    actives = np.ascontiguousarray(actives, dtype=np.int64)
    fitness = np.ascontiguousarray(fitness, dtype=np.float64)
    if fitness.ndim != 2 or fitness.shape != (actives.size, g.n):
        raise InputError("step_many: fitness must have shape (len(actives), n)")
    diagnostics.argmin_ties += _advance_rows(g.closed_ptr, g.closed_idx, fitness, actives, rng)
    return actives, fitness


def run(
    g: Graph,
    s0: ChainState,
    steps: int,
    rng: np.random.Generator,
    observers: Sequence[Callable[[StepRecord], object]] = (),
) -> ChainState:
    """Advance ``steps`` transitions, calling each observer on every StepRecord.

    Without observers the whole run happens in one compiled call; with
    observers it proceeds step by step.  Both paths consume ``rng``
    identically, so they give bit-identical results.
    """
    if int(steps) != steps or steps < 0:
        raise InputError(f"steps must be a nonnegative integer, got {steps}")
    s0.check_graph(g)
    if not observers:
        return run_with_visits(g, s0, steps, rng)[0]
    s = s0
    for _ in range(int(steps)):
        s, record = step(g, s, rng)
        for obs in observers:
            try:
                obs(record)
            except Exception as exc:
                raise ObserverError(record.t, obs, exc) from exc
    return s


def run_with_visits(g: Graph, s0: ChainState, steps: int, rng: np.random.Generator):
    """Run the chain and count visits of ``X_1..X_steps`` to each vertex."""
    s0.check_graph(g)
    fitness = s0.fitness.copy()
    visits = np.zeros(g.n, dtype=np.int64)
    x, ties = _advance(g.closed_ptr, g.closed_idx, fitness, s0.active, int(steps), rng, visits)
    diagnostics.argmin_ties += ties
    return ChainState._trusted(x, fitness, s0.step_index + int(steps)), visits


def occupancy_test(g: Graph, visits) -> tuple[float, float]:
    """Chi-square test of visit counts against mu(v) = |A_v| / S_G.

    The vertex process is a lazy walk, so the counts are compared under the
    Markov-chain CLT covariance rather than the multinomial one.
    """
    return markov_chi_square(visits, walk_transition_matrix(g), vertex_stationary_measure(g).as_array())


def random_walk_step(g: Graph, v: int, rng: np.random.Generator) -> int:
    """Uniform draw from A_v (the walk is lazy: staying has probability 1/|A_v|)."""
    v = g.check_vertex(v)
    lo, hi = g.closed_ptr[v], g.closed_ptr[v + 1]
    return int(g.closed_idx[lo + rng.integers(0, hi - lo)])


def initial_state(
    g: Graph,
    kind: str = "iid-exp",
    rng: np.random.Generator | None = None,
    fitness: Iterable[float] | None = None,
    active: int | None = None,
) -> ChainState:
    """Build a starting state.

    kind : {"iid-exp", "all-equal-perturbed", "explicit"}
        ``iid-exp`` draws IID Exp(1) fitnesses; ``all-equal-perturbed`` sets
        every fitness to 1 plus a uniform jitter of size 1e-9;
        ``explicit`` uses ``fitness`` verbatim.
    active : int, optional
        Starting vertex; drawn uniformly from ``rng`` when omitted.
    """
    if kind == "explicit":
        if fitness is None:
            raise InputError("explicit initial state needs a fitness list")
        f = np.asarray(list(fitness), dtype=np.float64)
        if f.size != g.n:
            raise InputError(f"explicit fitness has {f.size} entries, graph has {g.n} vertices")
        if np.unique(f).size != f.size:
            raise InputError("explicit fitness list is not one-to-one")
    else:
        if rng is None:
            raise InputError(f"initial state {kind!r} needs an rng")
        if kind == "iid-exp":
            f = rng.standard_exponential(g.n)
        elif kind == "all-equal-perturbed":
            f = 1.0 + 1e-9 * rng.random(g.n)
        else:
            raise InputError(f"unknown initial state kind {kind!r}")
        if np.unique(f).size != f.size:
            raise InternalError("initial fitness draw collided; RNG is broken")
    if active is None:
        if rng is None:
            raise InputError("active vertex must be given when no rng is supplied")
        active = int(rng.integers(0, g.n))
    return ChainState(g.check_vertex(active), f, 0)


class CsvTrajectoryWriter:
    """Observer that dumps StepRecords as CSV rows ``t,X_t,replaced,new_values``."""

    SCHEMA = "# schema: localbs.trajectory/v1"

    def __init__(self, stream):
        self._stream = stream
        stream.write(self.SCHEMA + "\n")
        self._writer = csv.writer(stream, lineterminator="\n")
        self._writer.writerow(["t", "X_t", "replaced", "new_values"])

    def __call__(self, record: StepRecord):
        self._writer.writerow([
            record.t,
            record.new_active,
            " ".join(map(str, record.replaced)),
            " ".join(repr(v) for v in record.new_values),
        ])
