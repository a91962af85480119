"""Natural cubic spline expansion of continuous covariates."""

from __future__ import annotations

import numpy as np


def natural_spline_basis(x, knots) -> np.ndarray:
    """Truncated-power natural cubic spline basis without the constant.

    With ``K`` knots the result has ``K - 1`` columns: ``x`` followed by
    ``d_k(x) - d_{K-1}(x)`` for ``k = 1..K-2``, where
    ``d_k(x) = ((x - xi_k)_+^3 - (x - xi_K)_+^3) / (xi_K - xi_k)``.
    The basis is linear outside the boundary knots.
    """
    x = np.asarray(x, dtype=float)
    knots = np.asarray(knots, dtype=float)
    K = len(knots)
    if K < 2:
        raise ValueError("need at least two knots")
    if np.any(np.diff(knots) <= 0):
        raise ValueError("knots must be strictly increasing")

    def d(k):
        return (np.clip(x - knots[k], 0, None) ** 3 - np.clip(x - knots[-1], 0, None) ** 3) / (
            knots[-1] - knots[k]
        )

    cols = [x]
    if K > 2:
        last = d(K - 2)
        cols += [d(k) - last for k in range(K - 2)]
    return np.column_stack(cols)


def quantile_knots(x, df: int) -> np.ndarray:
    """``df + 1`` knots at equally spaced empirical quantiles (min and max at the ends)."""
    return np.quantile(np.asarray(x, dtype=float), np.linspace(0, 1, df + 1))


def build_covariate_design(values, df: int = 3, names=None) -> tuple[np.ndarray, list[str]]:
    """Expand each covariate column into ``df`` centered spline columns.

    Each covariate is scaled to ``[0, 1]`` over the sample, knots are placed
    at empirical quantiles (for ``df=3``: min, 33.3%, 66.7%, max) and the
    columns are centered. ``df=1`` gives a single centered linear column.

    Returns the ``(n, k * df)`` design and its column names
    ``name(1)..name(df)``.

    Raises
    ------
    ValueError
        For a constant covariate, or too few distinct values for ``df``.
    """
    X = np.asarray(values, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if df < 1:
        raise ValueError("df must be at least 1")
    if not np.all(np.isfinite(X)):
        raise ValueError("covariates must be finite")
    names = list(names) if names is not None else [f"cov_{j + 1}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValueError(f"{len(names)} names for {X.shape[1]} covariates")
    blocks, out_names = [], []
    for j, name in enumerate(names):
        x = X[:, j]
        lo, hi = x.min(), x.max()
        if hi == lo:
            raise ValueError(f"covariate {name!r} is constant; spline basis is degenerate")
        u = (x - lo) / (hi - lo)
        knots = quantile_knots(u, df)
        if np.any(np.diff(knots) <= 0):
            raise ValueError(f"covariate {name!r} has too few distinct values for df={df}")
        B = natural_spline_basis(u, knots)
        blocks.append(B - B.mean(axis=0))
        out_names += [f"{name}({k + 1})" for k in range(df)]
    return np.hstack(blocks), out_names
