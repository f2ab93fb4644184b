import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from obbtrack.association import CostMatrix, gate_by_riou, max_weight_matching, solve_lap
from oracles import brute_force_lap


def _check_partition(a, n, m, forbidden=None):
    rows = [r for r, _ in a.matches] + a.unmatched_rows
    cols = [c for _, c in a.matches] + a.unmatched_cols
    assert sorted(rows) == list(range(n))
    assert sorted(cols) == list(range(m))
    if forbidden is not None:
        assert not any(forbidden[r, c] for r, c in a.matches)


def test_solve_lap_examples():
    a = solve_lap(CostMatrix(np.array([[1.0, 2.0], [2.0, 1.0]])))
    assert a.matches == [(0, 0), (1, 1)]
    assert a.total(np.array([[1.0, 2.0], [2.0, 1.0]])) == 2.0
    empty = solve_lap(CostMatrix(np.zeros((0, 3))))
    assert empty.matches == [] and empty.unmatched_cols == [0, 1, 2]


def test_all_forbidden():
    a = solve_lap(CostMatrix(np.ones((2, 3)), np.ones((2, 3), dtype=bool)))
    assert a.matches == [] and a.unmatched_rows == [0, 1] and a.unmatched_cols == [0, 1, 2]


def test_cost_matrix_validation():
    with pytest.raises(ValueError):
        CostMatrix(np.array([[np.nan, 1.0]]))
    # non-finite entries are fine where forbidden
    CostMatrix(np.array([[np.inf, 1.0]]), np.array([[True, False]]))


def test_gate_by_riou_examples():
    sim = np.array([[0.8, 0.1], [0.05, 0.9]])
    cm = gate_by_riou(sim, 0.3)
    assert cm.forbidden.tolist() == [[False, True], [True, False]]
    assert np.allclose(cm.values, 1 - sim)
    assert not gate_by_riou(sim, 0.0).forbidden.any()
    assert solve_lap(cm).matches == [(0, 0), (1, 1)]


def test_random_5x6_against_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(100):
        values = rng.random((5, 6))
        forbidden = np.zeros_like(values, dtype=bool)
        a = solve_lap(CostMatrix(values, forbidden))
        card, cost = brute_force_lap(values, forbidden)
        assert len(a.matches) == card
        assert a.total(values) == pytest.approx(cost, abs=1e-12)


def test_random_gated_against_brute_force():
    rng = np.random.default_rng(12)
    for _ in range(100):
        n, m = rng.integers(1, 6, size=2)
        values = rng.random((n, m))
        forbidden = rng.random((n, m)) < 0.4
        a = solve_lap(CostMatrix(values, forbidden))
        _check_partition(a, n, m, forbidden)
        card, cost = brute_force_lap(values, forbidden)
        assert len(a.matches) == card
        assert a.total(values) == pytest.approx(cost, abs=1e-12)


matrices = st.integers(1, 6).flatmap(
    lambda n: st.integers(1, 6).flatmap(
        lambda m: arrays(np.float64, (n, m), elements=st.floats(0, 1, allow_nan=False))
    )
)


@given(matrices)
def test_not_worse_than_greedy(values):
    a = solve_lap(CostMatrix(values))
    used, greedy = set(), 0.0
    n, m = values.shape
    count = 0
    for r in range(n):
        free = [c for c in range(m) if c not in used]
        if not free:
            break
        c = min(free, key=lambda j: values[r, j])
        used.add(c)
        greedy += values[r, c]
        count += 1
    assert len(a.matches) == count
    assert a.total(values) <= greedy + 1e-12


@given(matrices, st.randoms())
def test_row_permutation_equivariance(values, rnd):
    n = values.shape[0]
    perm = list(range(n))
    rnd.shuffle(perm)
    a = solve_lap(CostMatrix(values))
    b = solve_lap(CostMatrix(values[perm]))
    assert b.total(values[perm]) == pytest.approx(a.total(values), abs=1e-12)


def test_permutation_with_unique_optimum_maps_rows():
    rng = np.random.default_rng(5)
    values = rng.random((6, 6))
    perm = rng.permutation(6)
    a = dict(solve_lap(CostMatrix(values)).matches)
    b = dict(solve_lap(CostMatrix(values[perm])).matches)
    for new_row, old_row in enumerate(perm):
        assert b[new_row] == a[old_row]


def test_deterministic():
    values = np.ones((4, 4))
    assert solve_lap(CostMatrix(values)).matches == solve_lap(CostMatrix(values)).matches


def test_max_weight_matching_prefers_weight_over_count():
    w = np.array([[0.9, 0.8], [0.8, 0.0]])
    assert max_weight_matching(w) == [(0, 1), (1, 0)]
    w = np.array([[1.0, 0.3], [0.3, 0.0]])
    assert max_weight_matching(w) == [(0, 0)]
    with pytest.raises(ValueError):
        max_weight_matching(np.array([[-1.0]]))
