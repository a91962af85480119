"""Bias, RMSE and interval coverage across simulation replicates."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

ZERO_TRUTH = 1e-8

_CELL = re.compile(r"^(\w+)\[(\d+),(\d+)\]$")


@dataclass
class SimulationReport:
    """Per-coefficient metrics for one method.

    ``bias`` is percent bias, except where ``bias_is_absolute`` is set
    (truth within ``1e-8`` of zero), where it is the mean error.
    Replicates with a missing estimate are left out per coefficient;
    ``n_used`` counts the rest.
    """

    method: str
    names: list[str]
    truth: np.ndarray
    bias: np.ndarray
    bias_is_absolute: np.ndarray
    abs_bias: np.ndarray
    rmse: np.ndarray
    coverage: np.ndarray
    n_used: np.ndarray
    n_replicates: int
    n_failed: int = 0

    def rows(self, scenario: str = "") -> list[tuple]:
        """Long-format rows ``(scenario, method, parameter, d, t, metric, value)``."""
        out = []
        for k, name in enumerate(self.names):
            m = _CELL.match(name)
            block, d, t = (m.group(1), int(m.group(2)), int(m.group(3))) if m else (name, "", "")
            bias_name = "abs_bias" if self.bias_is_absolute[k] else "percent_bias"
            for metric, value in (
                ("truth", self.truth[k]),
                (bias_name, self.bias[k]),
                ("rmse", self.rmse[k]),
                ("coverage", self.coverage[k]),
                ("n_used", self.n_used[k]),
            ):
                out.append((scenario, self.method, block, d, t, metric, value))
        return out

    def subset(self, prefix: str) -> np.ndarray:
        return np.array([n.startswith(prefix + "[") for n in self.names])


def compute_metrics(
    estimates,
    lower,
    upper,
    truth,
    *,
    method: str = "",
    names: list[str] | None = None,
    n_failed: int = 0,
) -> SimulationReport:
    """Metrics over replicates.

    ``estimates``, ``lower`` and ``upper`` are ``(n_replicates, n_coef)``;
    NaN marks a missing estimate.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    lo = np.atleast_2d(np.asarray(lower, dtype=float))
    hi = np.atleast_2d(np.asarray(upper, dtype=float))
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if est.shape[0] < 1:
        raise ValueError("need at least one replicate")
    if est.shape[1] != len(truth) or lo.shape != est.shape or hi.shape != est.shape:
        raise ValueError("estimate, interval and truth shapes disagree")
    ok = np.isfinite(est)
    n_used = ok.sum(axis=0)
    err = np.where(ok, est - truth, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_err = err.sum(axis=0) / n_used
        rmse = np.sqrt((err**2).sum(axis=0) / n_used)
        covered = ok & np.isfinite(lo) & np.isfinite(hi) & (lo <= truth) & (truth <= hi)
        coverage = covered.sum(axis=0) / n_used
        absolute = np.abs(truth) < ZERO_TRUTH
        bias = np.where(absolute, mean_err, 100.0 * mean_err / np.where(absolute, 1.0, truth))
    return SimulationReport(
        method=method,
        names=list(names) if names is not None else [f"x[{k + 1}]" for k in range(len(truth))],
        truth=truth,
        bias=bias,
        bias_is_absolute=absolute,
        abs_bias=mean_err,
        rmse=rmse,
        coverage=coverage,
        n_used=n_used,
        n_replicates=est.shape[0],
        n_failed=n_failed,
    )
