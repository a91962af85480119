"""Triangular and rectangular coefficient grids.

Exposure coefficients live on the triangle ``{(d, t): 1 <= t <= d <= D}``
and are stored as a flat vector in duration-major order::

    (1,1), (2,1), (2,2), (3,1), (3,2), (3,3), ...

so that all coefficients of one duration are contiguous. Lag coefficients
live on the full ``D x L`` rectangle, again duration-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def n_cells(D: int) -> int:
    """Number of cells in the triangle of maximum duration ``D``."""
    return D * (D + 1) // 2


def grid_index(d: int, t: int, D: int) -> int:
    """Flat index of cell ``(d, t)`` in a triangle of size ``D``.

    Raises
    ------
    IndexError
        If ``(d, t)`` is not in the triangle.
    """
    if not (1 <= t <= d <= D):
        raise IndexError(f"cell (d={d}, t={t}) outside triangle 1 <= t <= d <= {D}")
    return d * (d - 1) // 2 + (t - 1)


def inverse_grid_index(index: int, D: int) -> tuple[int, int]:
    """Inverse of :func:`grid_index`."""
    if not (0 <= index < n_cells(D)):
        raise IndexError(f"index {index} outside [0, {n_cells(D)})")
    d = int((1 + np.sqrt(1 + 8 * index)) // 2)
    # guard the float sqrt at row boundaries
    while d * (d - 1) // 2 > index:
        d -= 1
    while (d + 1) * d // 2 <= index:
        d += 1
    return d, index - d * (d - 1) // 2 + 1


def triangle_cells(D: int) -> list[tuple[int, int]]:
    """All ``(d, t)`` cells in storage order."""
    return [(d, t) for d in range(1, D + 1) for t in range(1, d + 1)]


def lag_index(d: int, l: int, D: int, L: int) -> int:
    if not (1 <= d <= D and 1 <= l <= L):
        raise IndexError(f"lag cell (d={d}, l={l}) outside 1..{D} x 1..{L}")
    return (d - 1) * L + (l - 1)


def lag_cells(D: int, L: int) -> list[tuple[int, int]]:
    return [(d, l) for d in range(1, D + 1) for l in range(1, L + 1)]


@dataclass(frozen=True, eq=False)
class CoefficientGrid:
    """Exposure coefficients ``beta[d, t]`` on the triangle."""

    D: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (n_cells(self.D),):
            raise ValueError(
                f"grid of D={self.D} needs {n_cells(self.D)} values, got shape {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, D: int) -> CoefficientGrid:
        return cls(D, np.zeros(n_cells(D)))

    @classmethod
    def from_function(cls, D: int, fn) -> CoefficientGrid:
        return cls(D, np.array([fn(d, t) for d, t in triangle_cells(D)], dtype=float))

    def __getitem__(self, cell: tuple[int, int]) -> float:
        d, t = cell
        return float(self.values[grid_index(d, t, self.D)])

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CoefficientGrid)
            and self.D == other.D
            and np.array_equal(self.values, other.values)
        )

    def cells(self) -> list[tuple[int, int]]:
        return triangle_cells(self.D)

    def row(self, d: int) -> np.ndarray:
        start = grid_index(d, 1, self.D)
        return self.values[start : start + d]

    def to_matrix(self) -> np.ndarray:
        """``D x D`` matrix with NaN above the diagonal."""
        out = np.full((self.D, self.D), np.nan)
        for k, (d, t) in enumerate(self.cells()):
            out[d - 1, t - 1] = self.values[k]
        return out


@dataclass(frozen=True, eq=False)
class LagCoefficientGrid:
    """Lag coefficients ``theta[d, l]`` on the ``D x L`` rectangle."""

    D: int
    L: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.D * self.L,):
            raise ValueError(
                f"lag grid {self.D}x{self.L} needs {self.D * self.L} values, got shape {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, D: int, L: int) -> LagCoefficientGrid:
        return cls(D, L, np.zeros(D * L))

    def __getitem__(self, cell: tuple[int, int]) -> float:
        d, l = cell
        return float(self.values[lag_index(d, l, self.D, self.L)])

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LagCoefficientGrid)
            and (self.D, self.L) == (other.D, other.L)
            and np.array_equal(self.values, other.values)
        )

    def cells(self) -> list[tuple[int, int]]:
        return lag_cells(self.D, self.L)

    def to_matrix(self) -> np.ndarray:
        return self.values.reshape(self.D, self.L).copy()
