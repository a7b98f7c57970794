"""Tests for SIR simulation, influence labels and the exact oracle."""

from itertools import product

import numpy as np
import pytest

from conftest import random_hypergraph
from diffusion import (
    BudgetExceededError,
    SirParams,
    exact_influence_small,
    influence_labels,
    replica_rng,
    sir_run,
)
from hypergraph import Hypergraph

# Ten nodes v1..v10 (ids 0..9), hyperedges e1..e6 (ids 0..5); v7 sits in e3 and e4
WALKTHROUGH = Hypergraph.from_members(10, [
    [0, 4, 8],      # e1
    [1, 2, 3],      # e2
    [5, 6, 7, 9],   # e3
    [3, 6, 7],      # e4
    [0, 1, 4],      # e5
    [8, 9],         # e6
])
FORCED = {(1, 6): 3, (2, 3): 1, (2, 7): 2, (3, 1): 4, (3, 9): 5}


def forced_choice(step, node, options):
    return FORCED.get((step, node), options[0])


def enumerate_outbreaks(h, seed, beta):
    """
    Second exact oracle for gamma = 1

    Walks every trajectory with one coin per (infector, member) pair instead
    of merged exposure probabilities.
    """
    def expand(state, probability):
        infected = [i for i, v in enumerate(state) if v == 1]
        if not infected:
            return probability * sum(1 for v in state if v != 0)
        total = 0.0
        choices = [h.incident[i] or (None,) for i in infected]
        for choice in product(*choices):
            p_choice = probability
            attempts = []
            for node, edge in zip(infected, choice):
                if edge is None:
                    continue
                p_choice /= len(h.incident[node])
                attempts.extend((node, member) for member in h.members[edge] if state[member] == 0)
            for coins in product((False, True), repeat=len(attempts)):
                p = p_choice
                for coin in coins:
                    p *= beta if coin else 1.0 - beta
                if p == 0.0:
                    continue
                nxt = list(state)
                for node in infected:
                    nxt[node] = 2
                for (_, member), coin in zip(attempts, coins):
                    if coin:
                        nxt[member] = 1
                total += expand(tuple(nxt), p)
        return total

    start = [0] * h.n_nodes
    start[seed] = 1
    return expand(tuple(start), 1.0)


class TestSirParams:
    """Parameter validation."""

    @pytest.mark.parametrize("kwargs", [
        {'beta': -0.1}, {'beta': 1.1}, {'beta': 0.5, 'gamma': 0.0}, {'beta': 0.5, 'max_steps': -1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SirParams(**kwargs)


class TestSirRun:
    """Single outbreaks."""

    def test_no_transmission(self, triangle):
        result = sir_run(triangle, 0, SirParams(beta=0.0), np.random.default_rng(0))
        assert result.outbreak_size == 1
        assert result.steps == 1

    def test_full_infection_then_drain(self):
        h = Hypergraph.from_members(5, [[0, 1, 2, 3, 4]])
        result = sir_run(h, 0, SirParams(beta=1.0), np.random.default_rng(0))
        assert result.outbreak_size == 5
        assert result.steps == 2

    def test_walkthrough_infection_order(self):
        result = sir_run(WALKTHROUGH, 6, SirParams(beta=1.0), np.random.default_rng(0),
                         record_timeline=True, choose_hyperedge=forced_choice)
        assert result.infection_order == [[6], [3, 7], [1, 2, 5, 9], [0, 4, 8], []]
        assert result.timeline == [(9, 1, 0), (7, 2, 1), (3, 4, 3), (0, 3, 7), (0, 0, 10)]
        assert result.outbreak_size == 10

    def test_isolated_seed(self):
        h = Hypergraph.from_members(3, [[0, 1]])
        result = sir_run(h, 2, SirParams(beta=1.0), np.random.default_rng(0))
        assert result.outbreak_size == 1

    def test_step_cap(self, chain30):
        result = sir_run(chain30, 0, SirParams(beta=1.0, max_steps=1), np.random.default_rng(0))
        assert result.steps == 1
        assert result.outbreak_size == 2

    def test_invalid_seed(self, triangle):
        with pytest.raises(ValueError):
            sir_run(triangle, 5, SirParams(beta=0.5), np.random.default_rng(0))

    def test_conservation_and_step_bound(self, rng):
        for _ in range(50):
            h = random_hypergraph(rng)
            seed = int(rng.integers(h.n_nodes))
            result = sir_run(h, seed, SirParams(beta=float(rng.uniform())), rng, record_timeline=True)
            assert all(s + i + r == h.n_nodes for s, i, r in result.timeline)
            assert result.timeline[-1][1] == 0
            assert result.steps <= h.n_nodes + 1
            assert 1 <= result.outbreak_size <= h.n_nodes

    def test_recovery_below_one_keeps_conservation(self, two_triangles):
        result = sir_run(two_triangles, 0, SirParams(beta=0.7, gamma=0.3), np.random.default_rng(4),
                         record_timeline=True)
        assert all(sum(row) == 5 for row in result.timeline)
        assert result.timeline[-1][1] == 0

    def test_deterministic_stream(self, two_triangles):
        params = SirParams(beta=0.5, gamma=0.5)
        first = sir_run(two_triangles, 2, params, replica_rng(1, 2, 3), record_timeline=True)
        second = sir_run(two_triangles, 2, params, replica_rng(1, 2, 3), record_timeline=True)
        assert first == second


class TestExactOracle:
    """Closed-form and dual-oracle checks."""

    def test_no_transmission(self, two_triangles):
        assert exact_influence_small(two_triangles, 0, SirParams(beta=0.0)) == 1.0

    @pytest.mark.parametrize("k,beta", [(2, 0.3), (4, 0.5), (6, 0.9)])
    def test_single_hyperedge(self, k, beta):
        h = Hypergraph.from_members(k, [list(range(k))])
        assert exact_influence_small(h, 0, SirParams(beta=beta)) == pytest.approx(1 + (k - 1) * beta, abs=1e-12)

    @pytest.mark.parametrize("seed", [0, 2, 3])
    def test_agrees_with_trajectory_enumeration(self, seed):
        h = Hypergraph.from_members(5, [[0, 1, 2], [2, 3], [1, 3, 4]])
        for beta in (0.3, 0.5, 1.0):
            exact = exact_influence_small(h, seed, SirParams(beta=beta))
            assert exact == pytest.approx(enumerate_outbreaks(h, seed, beta), abs=1e-12)

    def test_slow_recovery_exceeds_one_step_infectiousness(self):
        h = Hypergraph.from_members(3, [[0, 1], [1, 2]])
        fast = exact_influence_small(h, 0, SirParams(beta=0.5, gamma=1.0))
        slow = exact_influence_small(h, 0, SirParams(beta=0.5, gamma=0.5))
        assert slow > fast

    def test_too_many_nodes(self, chain30):
        with pytest.raises(BudgetExceededError):
            exact_influence_small(chain30, 0, SirParams(beta=0.5))

    def test_budget(self, two_triangles):
        with pytest.raises(BudgetExceededError):
            exact_influence_small(two_triangles, 0, SirParams(beta=0.5), budget=1)


class TestInfluenceLabels:
    """Per-node Monte Carlo labels."""

    def test_no_transmission_gives_ones(self, two_triangles):
        labels = influence_labels(two_triangles, SirParams(beta=0.0), replicas=5)
        assert labels.values.tolist() == [1.0] * 5

    def test_single_hyperedge_full_infection(self):
        h = Hypergraph.from_members(4, [[0, 1, 2, 3]])
        labels = influence_labels(h, SirParams(beta=1.0), replicas=3)
        assert labels.values.tolist() == [4.0] * 4

    def test_subset_and_restrict(self, two_triangles):
        params = SirParams(beta=0.4)
        full = influence_labels(two_triangles, params, replicas=50, master_seed=9)
        subset = influence_labels(two_triangles, params, replicas=50, master_seed=9, nodes=[3, 1])
        np.testing.assert_array_equal(subset.values, full.values[[3, 1]])
        np.testing.assert_array_equal(full.restrict([3, 1]).values, subset.values)

    def test_worker_count_does_not_change_values(self, two_triangles):
        params = SirParams(beta=0.4)
        serial = influence_labels(two_triangles, params, replicas=40, master_seed=3, threads=1)
        pooled = influence_labels(two_triangles, params, replicas=40, master_seed=3, threads=2)
        np.testing.assert_array_equal(serial.values, pooled.values)

    def test_frame_and_provenance(self, triangle):
        labels = influence_labels(triangle, SirParams(beta=0.2), replicas=10, master_seed=5)
        assert list(labels.to_frame().columns) == ['node_id', 'label', 'stderr']
        assert labels.provenance()['master_seed'] == 5
        assert all(1.0 <= value <= 3.0 for value in labels.values)

    def test_mean_matches_exact_value(self):
        h = Hypergraph.from_members(4, [[0, 1, 2], [2, 3]])
        params = SirParams(beta=0.5)
        labels = influence_labels(h, params, replicas=20_000, master_seed=2024, nodes=[0])
        exact = exact_influence_small(h, 0, params)
        assert abs(labels.values[0] - exact) <= 4 * labels.stderr[0] + 1e-9

    @pytest.mark.slow
    def test_mean_within_three_standard_errors(self):
        fixtures = [
            Hypergraph.from_members(4, [[0, 1, 2], [2, 3]]),
            Hypergraph.from_members(5, [[0, 1], [1, 2, 3], [3, 4], [0, 4]]),
            Hypergraph.from_members(6, [[0, 1, 2], [2, 3, 4], [4, 5, 0], [1, 3, 5]]),
        ]
        for h in fixtures:
            for beta in (0.3, 0.5, 1.0):
                params = SirParams(beta=beta)
                labels = influence_labels(h, params, replicas=100_000, master_seed=7, nodes=[0])
                exact = exact_influence_small(h, 0, params)
                assert abs(labels.values[0] - exact) <= 3 * labels.stderr[0] + 1e-9
