"""The three estimators compared in the simulation studies.

Each returns a :class:`CoefficientEstimates` over the exposure and lag
coefficients of the full grid, so results line up across methods.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import AnalyticDataset
from ..frequentist import NonIdentifiableError, conditional_mle
from ..grid import grid_index, lag_cells, lag_index, triangle_cells
from ..hmc import PosteriorDraws, SamplerConfig, run_hmc
from ..priors import PriorSpec, resolve_priors
from ..summaries import posterior_mean_ci

METHODS = ("edvcm", "indep-normal", "freq-glm")


def coefficient_names(D: int, L: int = 0) -> list[str]:
    names = [f"beta[{d},{t}]" for d, t in triangle_cells(D)]
    return names + [f"theta[{d},{l}]" for d, l in lag_cells(D, L)]


@dataclass
class CoefficientEstimates:
    """Point estimates and 95% intervals; NaN where a method gave none."""

    method: str
    names: list[str]
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    flags: dict[str, str] = field(default_factory=dict)
    draws: PosteriorDraws | None = field(default=None, repr=False)

    def __getitem__(self, name: str) -> tuple[float, float, float]:
        k = self.names.index(name)
        return float(self.mean[k]), float(self.lower[k]), float(self.upper[k])


def _from_draws(method: str, draws: PosteriorDraws, names: list[str], level: float) -> CoefficientEstimates:
    mean, lo, hi = np.empty(len(names)), np.empty(len(names)), np.empty(len(names))
    for k, n in enumerate(names):
        mean[k], lo[k], hi[k] = posterior_mean_ci(draws[n], level)
    flags = {"warning": "; ".join(draws.warnings)} if draws.warnings else {}
    return CoefficientEstimates(method, names, mean, lo, hi, flags, draws)


def fit_edvcm(
    dataset: AnalyticDataset,
    priors: str | PriorSpec = "simulation",
    config: SamplerConfig = SamplerConfig(),
    *,
    level: float = 0.95,
    jobs: int = 1,
) -> CoefficientEstimates:
    """GP-prior model: posterior means and percentile intervals."""
    draws = run_hmc(dataset, resolve_priors(priors), config, prior="gp", jobs=jobs)
    return _from_draws("edvcm", draws, coefficient_names(dataset.D, dataset.L_max), level)


def fit_independent_normal(
    dataset: AnalyticDataset,
    config: SamplerConfig = SamplerConfig(),
    *,
    prior_sd: float = 1.0,
    priors: str | PriorSpec = "simulation",
    level: float = 0.95,
    jobs: int = 1,
) -> CoefficientEstimates:
    """Same likelihood with iid ``N(0, prior_sd^2)`` coefficients."""
    spec = resolve_priors(priors)
    draws = run_hmc(dataset, spec, config, prior="independent", independent_sd=prior_sd, jobs=jobs)
    return _from_draws("indep-normal", draws, coefficient_names(dataset.D, dataset.L_max), level)


def _duration_positions(dataset: AnalyticDataset, d: int) -> list[int]:
    D, L = dataset.D, dataset.L_max
    pos = [grid_index(d, t, D) for t in range(1, d + 1)]
    nb = len(triangle_cells(D))
    return pos + [nb + lag_index(d, l, D, L) for l in range(1, L + 1)]


def fit_frequentist_glm(
    dataset: AnalyticDataset,
    d: int | None = None,
    *,
    level: float = 0.95,
) -> CoefficientEstimates:
    """Conditional MLE with Wald intervals, fit separately per duration.

    With ``d`` given only that duration is fit and a singular information
    matrix raises :class:`NonIdentifiableError`. With ``d=None`` every
    observed duration is fit and failures are recorded in ``flags``.
    Separated coefficients have NaN estimates and a ``separated`` flag.
    """
    names = coefficient_names(dataset.D, dataset.L_max)
    n = len(names)
    mean, lo, hi = np.full(n, np.nan), np.full(n, np.nan), np.full(n, np.nan)
    flags: dict[str, str] = {}
    targets = [d] if d is not None else list(dataset.durations)
    for dd in targets:
        sub = dataset.restrict_to_duration(dd)
        pos = _duration_positions(dataset, dd)
        try:
            res = conditional_mle(sub)
        except NonIdentifiableError as exc:
            if d is not None:
                raise
            for k in pos:
                flags[names[k]] = f"failed: {exc}"
            continue
        if not res.identifiable:
            if d is not None:
                flags["identifiable"] = "false"
            for k in pos:
                flags[names[k]] = "non-identifiable"
            continue
        l, u = res.wald_ci(level)
        mean[pos], lo[pos], hi[pos] = res.estimate[pos], l[pos], u[pos]
        for k in res.separated:
            if k < n:
                flags[names[k]] = "separated"
        if not res.converged:
            for k in pos:
                flags.setdefault(names[k], "not converged")
    return CoefficientEstimates("freq-glm", names, mean, lo, hi, flags)
