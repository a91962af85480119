"""Ground-truth coefficient surfaces from a thin-plate radial basis."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..grid import CoefficientGrid, LagCoefficientGrid, lag_cells, triangle_cells


@dataclass(frozen=True)
class SurfaceSpec:
    """Settings for a random smooth surface plus iid noise.

    Parameters
    ----------
    D : int
        Maximum duration.
    noise_fraction : float
        Noise variance as a fraction of the spline's sample variance.
    n_tps_basis : int
        Number of radial basis functions (knots).
    seed : int
    surface_sd : float
        Sample SD the spline values are rescaled to (log-rate scale).
    """

    D: int
    noise_fraction: float = 0.25
    n_tps_basis: int = 5
    seed: int = 0
    surface_sd: float = 0.1

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("D must be at least 1")
        if not self.noise_fraction >= 0:
            raise ValueError("noise_fraction must be non-negative")
        if self.n_tps_basis < 1:
            raise ValueError("n_tps_basis must be positive")
        if not self.surface_sd > 0:
            raise ValueError("surface_sd must be positive")


def tps_kernel(r: np.ndarray) -> np.ndarray:
    """``r^2 log r`` with the removable singularity at 0 set to 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = r[pos] ** 2 * np.log(r[pos])
    return out


def farthest_point_knots(points: np.ndarray, k: int) -> np.ndarray:
    """Deterministic space-filling subset of ``points``.

    Starts at the point nearest the centroid, then repeatedly adds the
    point farthest from those already chosen (first index wins ties).
    """
    points = np.asarray(points, dtype=float)
    first = int(np.argmin(np.linalg.norm(points - points.mean(axis=0), axis=1)))
    chosen = [first]
    dist = np.linalg.norm(points - points[first], axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return points[chosen]


def _surface(points: np.ndarray, spec: SurfaceSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    k = spec.n_tps_basis
    if k > len(points):
        warnings.warn(
            f"{k} knots requested but only {len(points)} cells; using {len(points)}",
            RuntimeWarning,
            stacklevel=3,
        )
        k = len(points)
    rng = np.random.default_rng(seed)
    knots = farthest_point_knots(points, k)
    basis = tps_kernel(np.linalg.norm(points[:, None, :] - knots[None, :, :], axis=2))
    spline = basis @ rng.standard_normal(k)
    sd = spline.std()
    if sd > 0:
        spline = spline * (spec.surface_sd / sd)
    noise_sd = np.sqrt(spec.noise_fraction * spline.var())
    return spline + noise_sd * rng.standard_normal(len(points)), spline


def generate_true_surface(spec: SurfaceSpec, *, return_spline: bool = False):
    """Exposure coefficients on the triangle ``1 <= t <= d <= D``.

    Returns a :class:`CoefficientGrid`, or ``(surface, spline)`` grids when
    ``return_spline`` is set. The spline is not centered.
    """
    pts = np.array(triangle_cells(spec.D), dtype=float)
    values, spline = _surface(pts, spec, spec.seed)
    grid = CoefficientGrid(spec.D, values)
    return (grid, CoefficientGrid(spec.D, spline)) if return_spline else grid


def generate_lag_surface(spec: SurfaceSpec, L: int, *, seed: int | None = None) -> LagCoefficientGrid:
    """Lag coefficients on the ``D x L`` rectangle, built the same way."""
    if L < 1:
        raise ValueError("L must be positive")
    pts = np.array(lag_cells(spec.D, L), dtype=float)
    values, _ = _surface(pts, spec, spec.seed if seed is None else seed)
    return LagCoefficientGrid(spec.D, L, values)
