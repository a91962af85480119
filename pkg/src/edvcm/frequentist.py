"""Maximum likelihood for the conditional model by Newton-Raphson."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import AnalyticDataset
from .likelihood import design_matrix, fisher_information, loglik_and_grad

Z_975 = float(stats.norm.ppf(0.975))


class NonIdentifiableError(np.linalg.LinAlgError):
    pass


@dataclass
class MLEResult:
    """Estimates over the full ``(beta, theta, zeta)`` vector.

    Parameters that no data inform, or that are separated, are NaN.
    """

    estimate: np.ndarray
    se: np.ndarray
    converged: bool
    n_iter: int
    loglik: float
    separated: list[int] = field(default_factory=list)
    identifiable: bool = True

    def wald_ci(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        z = float(stats.norm.ppf(0.5 + level / 2))
        return self.estimate - z * self.se, self.estimate + z * self.se


def _separated_columns(arr, X: np.ndarray, cols: np.ndarray) -> list[int]:
    """Indicator columns whose units carry none, or all, of their strata's counts."""
    out = []
    for j in cols:
        on = X[:, j] != 0
        if not np.all((X[on, j] == 1)):
            continue  # covariate column
        y_on = arr.y[on].sum()
        strata = np.unique(arr.stratum[on])
        if y_on == 0 or y_on == arr.W[strata].sum():
            out.append(int(j))
    return out


def conditional_mle(
    dataset: AnalyticDataset,
    *,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> MLEResult:
    """Newton-Raphson on the conditional log-likelihood.

    Converges when the max-norm of the score drops below ``tol``. Standard
    errors come from the inverse observed information.

    Raises
    ------
    NonIdentifiableError
        If the information matrix over the informed parameters is singular.
    """
    arr = dataset.arrays
    nb, nt, nz = arr.n_beta, arr.n_theta, arr.Z.shape[1]
    p = nb + nt + nz
    nan = np.full(p, np.nan)
    if len(arr.y) == 0:
        return MLEResult(nan, nan.copy(), False, 0, 0.0, identifiable=False)

    X = design_matrix(arr)
    informed = np.flatnonzero(np.any(X != 0, axis=0))
    separated = _separated_columns(arr, X, informed)
    free = np.array([j for j in informed if j not in set(separated)], dtype=np.intp)

    x = np.zeros(p)

    def unpack(v):
        return v[:nb], v[nb : nb + nt], v[nb + nt :]

    def evaluate(v):
        ll, g = loglik_and_grad(arr, *unpack(v))
        return ll, np.concatenate([g.beta, g.theta, g.zeta])[free]

    ll, g = evaluate(x)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g), initial=0.0) < tol:
            converged = True
            it -= 1
            break
        H = fisher_information(arr, *unpack(x))[np.ix_(free, free)]
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise NonIdentifiableError("singular information matrix") from None
        t = 1.0
        while True:
            x_new = x.copy()
            x_new[free] += t * step
            ll_new, g_new = evaluate(x_new)
            if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        x, ll, g = x_new, ll_new, g_new
    else:
        converged = np.max(np.abs(g), initial=0.0) < tol

    H = fisher_information(arr, *unpack(x))[np.ix_(free, free)]
    if free.size and np.linalg.cond(H) > 1e14:
        raise NonIdentifiableError("singular information matrix")
    cov = np.linalg.inv(H) if free.size else np.zeros((0, 0))
    est = nan.copy()
    se = nan.copy()
    est[free] = x[free]
    se[free] = np.sqrt(np.clip(np.diag(cov), 0, None))
    if not converged:
        warnings.warn(f"Newton-Raphson did not converge in {max_iter} iterations", RuntimeWarning, stacklevel=2)
    return MLEResult(est, se, bool(converged), it, float(ll), separated, identifiable=bool(informed.size))
