from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from localbs import avalanche as A
from localbs import dynamics as dyn
from localbs import graph as G
from localbs.distributions import solve_bc, threshold_exceedance
from localbs.errors import InputError, InsufficientDataError

from .conftest import seeded

# P(Bin(5, 11/16) >= 4) and P(Bin(5, 11/16) >= 1), exact rationals evaluated with fractions
LOWER_N8 = 131769 / 262144
UPPER_N8 = 1045451 / 1048576


def _record(g, alpha, b, steps, rng, s0=None):
    s0 = s0 or dyn.initial_state(g, "iid-exp", rng)
    return A.track_avalanches(g, s0, alpha, b, steps, rng)


class TestRequiredCount:
    def test_values(self):
        assert A.required_count(0.5, 8) == 4
        assert A.required_count(0.3, 10) == 3
        assert A.required_count(0.31, 10) == 4
        assert A.required_count(1.0, 7) == 7

    @given(st.integers(1, 500), st.floats(0.001, 1.0))
    def test_is_smallest_count_reaching_alpha(self, n, alpha):
        c = A.required_count(alpha, n)
        assert c / n >= alpha - 1e-9
        assert c == 0 or (c - 1) / n < alpha


class TestTracking:
    def test_psi_identically_one(self, rng):
        rec = _record(G.cycle(8), 0.5, 1e-300, 500, rng)
        assert np.array_equal(rec.start_times, np.arange(501))
        assert A.estimate_D(rec) == (1.0, 0.0)

    def test_alpha_one_large_b_is_rare(self, rng):
        rec = _record(G.cycle(64), 1.0, 3.0, 100_000, rng)
        assert rec.count == 0 and rec.start_times.tolist() == [0]

    def test_start_times_match_definition(self, rng):
        g, alpha, b = G.cycle(8), 0.5, 0.9
        s0 = dyn.initial_state(g, "iid-exp", rng)
        psi = []
        s = s0
        r = seeded("def")
        for _ in range(3000):
            s, _ = dyn.step(g, s, r)
            psi.append(np.count_nonzero(s.fitness >= b) / g.n)
        expected = [0] + [t + 1 for t, p in enumerate(psi) if p >= alpha]
        rec = A.track_avalanches(g, s0, alpha, b, 3000, seeded("def"))
        assert rec.start_times.tolist() == expected

    def test_same_trajectory_as_run(self, rng):
        g = G.star(5)
        s0 = dyn.initial_state(g, "iid-exp", rng)
        _, final = A.track_avalanche_grid(g, s0, [(0.5, 1.0), (0.25, 2.0)], 200_000, seeded("traj"))
        assert final == dyn.run(g, s0, 200_000, seeded("traj"))

    def test_incremental_count_matches_rescan(self, rng):
        g = G.cycle(16)
        s0 = dyn.initial_state(g, "iid-exp", rng)
        # 10^3 checkpoints, each a full rescan compared against the running count
        A.track_avalanche_grid(g, s0, [(0.5, 1.0), (0.75, 0.3)], 1000 * 65536, rng, checkpoints=1000)

    def test_tracker_observer(self, rng):
        g = G.path(6)
        s = dyn.initial_state(g, "iid-exp", rng)
        tr = A.ThresholdTracker.from_state(s, 0.8)
        for _ in range(1000):
            s = dyn.run(g, s, 7, rng, observers=[tr])
            assert tr.count_above == tr.rescan(s.fitness)
            assert 0 <= tr.psi <= 1

    @pytest.mark.parametrize("alpha,b,steps", [(0.0, 1.0, 10), (1.2, 1.0, 10), (0.5, 0.0, 10), (0.5, 1.0, 0)])
    def test_bad_input(self, alpha, b, steps, rng):
        g = G.cycle(4)
        with pytest.raises(InputError):
            _record(g, alpha, b, steps, rng)

    def test_durations(self):
        rec = A.AvalancheRecord(0.5, 1.0, np.array([0, 2, 3, 7]), 10, 8)
        assert rec.durations.tolist() == [2, 1, 4] and rec.count == 3


class TestEstimateD:
    def test_insufficient(self):
        rec = A.AvalancheRecord(0.5, 1.0, np.array([0, 4]), 123, 8)
        with pytest.raises(InsufficientDataError) as info:
            A.estimate_D(rec)
        assert info.value.horizon == 123

    def test_discards_first_gap(self):
        rec = A.AvalancheRecord(0.5, 1.0, np.array([0, 100, 102, 104, 106]), 110, 8)
        assert A.estimate_D(rec)[0] == 2.0

    def test_within_inverse_sandwich_cycle8(self, rng):
        b = solve_bc(2, 0.5)
        lo, up = A.binomial_sandwich(8, 2, 0.5, b)
        est, se = A.estimate_D(_record(G.cycle(8), 0.5, b, 2_000_000, rng))
        assert 1 / up - 3 * se <= est <= 1 / lo + 3 * se

    def test_independent_of_start(self):
        g = G.cycle(8)
        s_a = dyn.initial_state(g, "iid-exp", seeded("start", 0), active=0)
        s_b = dyn.initial_state(g, "all-equal-perturbed", seeded("start", 1), active=4)
        ea, sa = A.estimate_D(_record(g, 0.5, 1.0, 1_000_000, seeded("start", 2), s_a))
        eb, sb = A.estimate_D(_record(g, 0.5, 1.0, 1_000_000, seeded("start", 3), s_b))
        assert abs(ea - eb) <= 3 * math.hypot(sa, sb)

    def test_monotone_in_b_and_alpha(self, rng):
        g = G.cycle(8)
        s0 = dyn.initial_state(g, "iid-exp", rng)
        alphas, bs = [0.25, 0.5, 0.75], [0.3, 0.7, 1.2]
        pairs = [(a, b) for a in alphas for b in bs]
        recs, _ = A.track_avalanche_grid(g, s0, pairs, 2_000_000, rng)
        est = {p: A.estimate_D(r) for p, r in zip(pairs, recs)}
        for a in alphas:
            for b1, b2 in zip(bs, bs[1:]):
                (d1, s1), (d2, s2) = est[(a, b1)], est[(a, b2)]
                assert d1 <= d2 + 3 * math.hypot(s1, s2)
        for b in bs:
            for a1, a2 in zip(alphas, alphas[1:]):
                (d1, s1), (d2, s2) = est[(a1, b)], est[(a2, b)]
                assert d1 <= d2 + 3 * math.hypot(s1, s2)


class TestSandwich:
    @pytest.mark.parametrize("n,alpha", [(16, 0.5), (100, 0.9), (100, 0.97)])
    def test_small_b(self, n, alpha):
        lo, up = A.binomial_sandwich(n, 2, alpha, 1e-12)
        assert lo == pytest.approx(1.0, abs=1e-9) and up == 1.0

    def test_lower_vanishes_when_target_exceeds_free_sites(self):
        # m = ceil(0.9 * 16) = 15 > 13 sites outside A_{X_0}: the lower tail is 0 for every b
        assert A.binomial_sandwich(16, 2, 0.9, 1e-12)[0] == 0.0

    def test_exact_n8(self):
        p = threshold_exceedance(2, math.log(2))
        assert p == pytest.approx(11 / 16, rel=1e-15)
        lo, up = A.binomial_sandwich(8, 2, 0.5, math.log(2))
        assert lo == pytest.approx(LOWER_N8, rel=1e-12)
        assert up == pytest.approx(UPPER_N8, rel=1e-12)

    def test_exact_n8_fraction_oracle(self):
        q = Fraction(11, 16)
        lower = sum(math.comb(5, j) * q**j * (1 - q) ** (5 - j) for j in range(4, 6))
        assert float(lower) == pytest.approx(LOWER_N8, rel=1e-15)

    def test_upper_clamps(self):
        assert A.binomial_sandwich(8, 2, 0.25, 5.0)[1] == 1.0

    @given(st.integers(4, 300), st.integers(2, 5), st.floats(0.01, 1.0), st.floats(1e-3, 10))
    def test_lower_le_upper(self, n, d, alpha, b):
        if n <= d + 1:
            return
        lo, up = A.binomial_sandwich(n, d, alpha, b)
        assert 0 <= lo <= up <= 1

    def test_preconditions(self):
        with pytest.raises(InputError):
            A.binomial_sandwich(3, 2, 0.5, 1.0)
        with pytest.raises(InputError):
            A.binomial_sandwich(8, 2, 0.5, 0.0)

    def test_stationary_probability_inside_sandwich(self, rng):
        g = G.cycle(16)
        for alpha, b in [(0.5, 0.7), (0.75, 0.4), (0.25, 1.6)]:
            p, se = A.stationary_event_probability(g, alpha, b, 50_000, rng)
            lo, up = A.binomial_sandwich(16, 2, alpha, b)
            assert lo - 3 * se <= p <= up + 3 * se


    def test_batched_probabilities_share_one_sample(self):
        g, pairs = G.cycle(8), [(0.5, 0.7), (0.25, 1.6)]
        batched = A.stationary_event_probabilities(g, pairs, 5000, seeded("batch"))
        assert batched[0] == A.stationary_event_probability(g, *pairs[0], 5000, seeded("batch"))
        with pytest.raises(InputError):
            A.stationary_event_probabilities(g, [(0.5, -1.0)], 10, seeded("batch"))


class TestRegime:
    def test_examples(self):
        assert A.classify_regime(2, 11 / 16, math.log(2)) == A.CRITICAL
        assert threshold_exceedance(2, 0.1) > 11 / 16
        assert A.classify_regime(2, 11 / 16, 0.1) == A.SUBCRITICAL
        assert threshold_exceedance(2, 3.0) < 11 / 16
        assert A.classify_regime(2, 11 / 16, 3.0) == A.SUPERCRITICAL

    def test_bad_input(self):
        with pytest.raises(InputError):
            A.classify_regime(2, 1.0, 1.0)
        with pytest.raises(InputError):
            A.classify_regime(2, 0.5, -1.0)


class TestLimit:
    def test_cycles_converge(self, rng):
        graphs = [G.cycle(n) for n in (8, 32, 128, 512)]
        out = A.limit_marginal_test(graphs, 100_000, rng)
        stats = [s for _, s, _ in out]
        assert [n for n, _, _ in out] == [8, 32, 128, 512]
        assert stats[-1] < 0.02 and stats[0] > stats[-1]

    def test_rejects_mixed_or_growing_degree(self, rng):
        with pytest.raises(InputError):
            A.limit_marginal_test([G.complete(4), G.complete(8)], 100, rng)
        with pytest.raises(InputError):
            A.limit_marginal_test([G.cycle(8), G.random_regular(10, 3, 0)], 100, rng)
        with pytest.raises(InputError):
            A.limit_marginal_test([G.cycle(8), G.cycle(6)], 100, rng)
