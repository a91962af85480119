"""Posterior summaries: means, percentile intervals, rate ratios and
cumulative rate ratios per duration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AnalyticDataset, Role
from .grid import grid_index, n_cells

PROTECTIVE, HARMFUL, NULL = "protective", "harmful", "null"


@dataclass(frozen=True)
class Summary:
    mean: float
    lower: float
    upper: float

    def __iter__(self):
        return iter((self.mean, self.lower, self.upper))


def posterior_mean_ci(draws, level: float = 0.95, *, min_draws: int = 100) -> Summary:
    """Mean and equal-tailed percentile interval (linear interpolation)."""
    x = np.asarray(draws, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("no draws")
    if x.size < min_draws:
        raise ValueError(f"need at least {min_draws} draws for an interval, got {x.size}")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    alpha = (1 - level) / 2
    lo, hi = np.quantile(x, [alpha, 1 - alpha], method="linear")
    return Summary(float(x.mean()), float(lo), float(hi))


def rate_ratio(draws, level: float = 0.95) -> tuple[np.ndarray, Summary]:
    """Draws of ``exp(coef)`` and their summary.

    Apart from interpolation between adjacent order statistics, the
    interval equals the exponentiated interval of the coefficient.
    """
    rr = np.exp(np.asarray(draws, dtype=float))
    return rr, posterior_mean_ci(rr, level)


def _beta_draws_row(beta_draws: np.ndarray, d: int) -> np.ndarray:
    beta_draws = np.atleast_2d(np.asarray(beta_draws, dtype=float))
    n = beta_draws.shape[1]
    D = int((np.sqrt(8 * n + 1) - 1) / 2)
    if n_cells(D) != n:
        raise ValueError(f"{n} columns is not a triangular coefficient count")
    if not 1 <= d <= D:
        raise ValueError(f"duration {d} outside 1..{D}")
    start = grid_index(d, 1, D)
    return beta_draws[:, start : start + d]


def cumulative_rr_no_covariates(beta_draws, d: int) -> np.ndarray:
    """Per-draw average of ``exp(beta[d, t])`` over ``t = 1..d``.

    ``beta_draws`` is ``(n_draws, D(D+1)/2)`` in grid order.
    """
    return np.exp(_beta_draws_row(beta_draws, d)).mean(axis=1)


def exposed_covariates(dataset: AnalyticDataset, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Day indices and covariate rows of exposed units of duration ``d``."""
    rows = [(u.t, u.z) for u in dataset.units() if u.role is Role.EXPOSURE and u.d == d]
    if not rows:
        raise ValueError(f"no exposed units of duration {d} in the dataset")
    t = np.array([r[0] for r in rows], dtype=int)
    Z = np.array([r[1] for r in rows], dtype=float).reshape(len(rows), dataset.covariate_dim)
    return t, Z


def cumulative_rr_with_covariates(
    beta_draws, zeta_draws, d: int, dataset: AnalyticDataset | None = None, *, t=None, Z=None
) -> np.ndarray:
    """Covariate-weighted average of ``exp(beta[d, t(i)])`` over exposed units.

    Weights are ``exp(zeta . z_i)`` for each exposed unit ``i`` of duration
    ``d``. Units come from ``dataset``, or directly from ``t`` and ``Z``.
    """
    if dataset is not None:
        t, Z = exposed_covariates(dataset, d)
    if t is None or Z is None or len(t) == 0:
        raise ValueError(f"no exposed units of duration {d}")
    t = np.asarray(t, dtype=int)
    if np.any((t < 1) | (t > d)):
        raise ValueError("exposed day index outside 1..d")
    row = _beta_draws_row(beta_draws, d)
    zeta_draws = np.atleast_2d(np.asarray(zeta_draws, dtype=float))
    Z = np.asarray(Z, dtype=float).reshape(len(t), -1)
    lin = zeta_draws @ Z.T  # (draws, units)
    # stabilise the weights per draw; the ratio is unchanged
    w = np.exp(lin - lin.max(axis=1, keepdims=True))
    return (np.exp(row[:, t - 1]) * w).sum(axis=1) / w.sum(axis=1)


def classify_direction(summary) -> str:
    """``harmful`` if the rate-ratio interval is above 1, ``protective`` if
    below, otherwise ``null``. Accepts a :class:`Summary` or ``(lo, hi)``."""
    lo, hi = tuple(summary)[-2:]
    if lo > 1:
        return HARMFUL
    if hi < 1:
        return PROTECTIVE
    return NULL
