"""Rank-normalized split R-hat and bulk effective sample size."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


def _split(chains: np.ndarray) -> np.ndarray:
    n = chains.shape[1] // 2
    return np.concatenate([chains[:, :n], chains[:, -n:]], axis=0)


def _z_scale(x: np.ndarray) -> np.ndarray:
    ranks = stats.rankdata(x, method="average", axis=None).reshape(x.shape)
    return stats.norm.ppf((ranks - 0.375) / (x.size + 0.25))


def _rhat(chains: np.ndarray) -> float:
    m, n = chains.shape
    between = n * np.var(chains.mean(axis=1), ddof=1)
    within = np.mean(np.var(chains, axis=1, ddof=1))
    if within == 0:
        return float("inf") if between > 0 else float("nan")
    var_hat = (n - 1) / n * within + between / n
    return float(np.sqrt(var_hat / within))


def _autocov(chains: np.ndarray) -> np.ndarray:
    n = chains.shape[1]
    x = chains - chains.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size, axis=1)
    return np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n


def _ess(chains: np.ndarray) -> float:
    """ESS with Geyer's initial monotone sequence estimator."""
    m, n = chains.shape
    if n < 4:
        return float("nan")
    acov = _autocov(chains)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += np.var(chains.mean(axis=1), ddof=1)
    if var_plus == 0:
        return float("nan")
    rho = np.zeros(n)
    rho_even, rho_odd = 1.0, 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[0], rho[1] = rho_even, rho_odd
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1], rho[t + 2] = rho_even, rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even
    # enforce monotone decrease of paired sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = (rho[t - 1] + rho[t]) / 2
        t += 2
    total = m * n
    tau = -1 + 2 * rho[: max_t + 1].sum() + rho[max_t + 1]
    tau = max(tau, 1 / np.log10(total))
    return float(total / tau)


def split_rhat(chains: np.ndarray) -> float:
    """Rank-normalized split R-hat: the larger of the bulk and folded values.

    ``chains`` is ``(n_chains, n_draws)``. Returns NaN for a single chain.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2:
        return float("nan")
    split = _split(chains)
    bulk = _rhat(_z_scale(split))
    folded = _rhat(_z_scale(np.abs(split - np.median(split))))
    if np.isnan(bulk) and np.isnan(folded):
        # all draws identical across chains
        return 1.0 if np.ptp(chains) == 0 else float("nan")
    return float(np.nanmax([bulk, folded]))


def ess_bulk(chains: np.ndarray) -> float:
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    if chains.shape[1] < 8:
        return float("nan")
    return _ess(_z_scale(_split(chains)))


@dataclass
class Diagnostics:
    names: list[str]
    rhat: np.ndarray
    ess_bulk: np.ndarray

    @property
    def max_rhat(self) -> float:
        return float(np.nanmax(self.rhat)) if np.any(np.isfinite(self.rhat)) else float("nan")

    def flagged(self, threshold: float = 1.05) -> list[str]:
        return [n for n, r in zip(self.names, self.rhat) if not r <= threshold]


def diagnostics(draws, names: list[str] | None = None) -> Diagnostics:
    """R-hat and bulk ESS for every parameter.

    ``draws`` is a :class:`~edvcm.hmc.PosteriorDraws` or an array shaped
    ``(n_chains, n_draws, n_params)``. With a single chain R-hat is NaN.
    """
    if hasattr(draws, "constrained"):
        names = list(draws.names)
        arr = draws.constrained
    else:
        arr = np.asarray(draws, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        names = names or [f"x[{k + 1}]" for k in range(arr.shape[2])]
    rhat = np.array([split_rhat(arr[:, :, k]) for k in range(arr.shape[2])])
    ess = np.array([ess_bulk(arr[:, :, k]) for k in range(arr.shape[2])])
    return Diagnostics(names, rhat, ess)
