import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from seads.assignment import assignment_cost, hungarian


def brute_force(cost):
    n, m = cost.shape
    return min(sum(cost[i, c] for i, c in enumerate(cols)) for cols in itertools.permutations(range(m), n))


class TestHungarian:
    def test_small_square(self):
        cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
        col = hungarian(cost)
        assert assignment_cost(cost, col) == 5.0
        assert sorted(col) == [0, 1, 2]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 3), st.integers(0, 2**31 - 1))
    def test_matches_brute_force(self, n, extra, seed):
        cost = np.random.default_rng(seed).normal(size=(n, n + extra))
        assert assignment_cost(cost, hungarian(cost)) == pytest.approx(brute_force(cost))

    @pytest.mark.parametrize("n", [20, 100, 288])
    def test_matches_scipy_on_larger_matrices(self, n):
        cost = np.random.default_rng(n).normal(size=(n, n))
        rows, cols = linear_sum_assignment(cost)
        assert assignment_cost(cost, hungarian(cost)) == pytest.approx(cost[rows, cols].sum())

    def test_integer_ties_resolved_deterministically(self):
        cost = np.zeros((3, 3))
        np.testing.assert_array_equal(hungarian(cost), hungarian(cost.copy()))
        assert sorted(hungarian(cost)) == [0, 1, 2]

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            hungarian(np.zeros((3, 2)))
        with pytest.raises(ValueError):
            hungarian(np.array([[np.inf, 0.0]]))
        with pytest.raises(ValueError):
            hungarian(np.zeros(3))

    def test_empty(self):
        assert hungarian(np.zeros((0, 4))).shape == (0,)
