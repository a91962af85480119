import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edvcm.grid import (
    CoefficientGrid,
    LagCoefficientGrid,
    grid_index,
    inverse_grid_index,
    lag_cells,
    lag_index,
    n_cells,
    triangle_cells,
)


def test_first_cell():
    assert grid_index(1, 1, 3) == 0


def test_enumerated_triangle():
    assert grid_index(3, 2, 3) == 4
    assert triangle_cells(3) == [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (3, 3)]


def test_largest_grid():
    assert grid_index(14, 14, 14) == 104
    assert n_cells(14) == 105


@pytest.mark.parametrize("d,t,D", [(0, 1, 3), (2, 3, 3), (4, 1, 3), (2, 0, 3)])
def test_out_of_range_rejected(d, t, D):
    with pytest.raises(IndexError, match=r"\(d, t\)|outside|range"):
        grid_index(d, t, D)


@given(st.integers(1, 30).flatmap(lambda D: st.tuples(st.just(D), st.integers(0, n_cells(D) - 1))))
def test_index_round_trip(args):
    D, k = args
    d, t = inverse_grid_index(k, D)
    assert 1 <= t <= d <= D
    assert grid_index(d, t, D) == k


@given(st.integers(1, 40))
def test_row_lengths_sum(D):
    assert sum(range(1, D + 1)) == n_cells(D) == len(triangle_cells(D))


def test_lag_index_duration_major():
    assert [lag_index(d, l, 3, 2) for d, l in lag_cells(3, 2)] == list(range(6))


def test_grid_accessors():
    g = CoefficientGrid.from_function(3, lambda d, t: 10 * d + t)
    assert g[3, 2] == 32
    np.testing.assert_array_equal(g.row(2), [21, 22])
    m = g.to_matrix()
    assert np.isnan(m[0, 1]) and m[2, 0] == 31
    with pytest.raises(ValueError):
        g.values[0] = 1.0


def test_grid_length_checked():
    with pytest.raises(ValueError, match="needs 6 values"):
        CoefficientGrid(3, np.zeros(5))
    with pytest.raises(ValueError):
        LagCoefficientGrid(2, 3, np.zeros(5))


def test_lag_grid_lookup():
    g = LagCoefficientGrid(2, 3, np.arange(6.0))
    assert g[2, 1] == 3.0
    assert g.to_matrix().shape == (2, 3)
