"""Separable exponential product kernels over the coefficient grids.

Covariance between cells ``(d, t)`` and ``(d', t')``::

    sigma^2 * exp(-|d - d'| / phi) * exp(-|t - t'| / tau)

The same construction is used for lag coefficients with ``(d, l)``
coordinates and lengthscales ``(gamma, eta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .grid import lag_cells, triangle_cells
from .priors import HYPER_NAMES, PriorSpec

DEFAULT_JITTER = 1e-8
_LOG_2PI = math.log(2 * math.pi)


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class GPHyperparameters:
    sigma_beta: float
    phi: float
    tau: float
    sigma_theta: float | None = None
    gamma: float | None = None
    eta: float | None = None

    def __post_init__(self):
        for name in HYPER_NAMES:
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise ValueError(f"hyperparameter {name}={v} must be positive and finite")

    def present(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in HYPER_NAMES if getattr(self, n) is not None}


@dataclass(frozen=True)
class KernelSpec:
    """Coordinates of one coefficient block and its numerical jitter."""

    coords: np.ndarray  # (n, 2) integer coordinates, duration first
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")

    @classmethod
    def beta(cls, D: int, jitter: float = DEFAULT_JITTER) -> KernelSpec:
        return cls(np.array(triangle_cells(D), dtype=float).reshape(-1, 2), jitter)

    @classmethod
    def theta(cls, D: int, L: int, jitter: float = DEFAULT_JITTER) -> KernelSpec:
        return cls(np.array(lag_cells(D, L), dtype=float).reshape(-1, 2), jitter)

    def distances(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.coords
        return (
            np.abs(c[:, 0, None] - c[None, :, 0]),
            np.abs(c[:, 1, None] - c[None, :, 1]),
        )


def _check_positive(**kw):
    for k, v in kw.items():
        if not (v > 0):
            raise ValueError(f"{k} must be positive, got {v}")


def kernel_value(sigma2, phi, tau, d, t, d2, t2) -> float:
    _check_positive(sigma2=sigma2, phi=phi, tau=tau)
    return sigma2 * math.exp(-abs(d - d2) / phi) * math.exp(-abs(t - t2) / tau)


def correlation_matrix(spec: KernelSpec, ls_duration: float, ls_day: float) -> np.ndarray:
    """Unit-variance kernel matrix without jitter."""
    _check_positive(ls_duration=ls_duration, ls_day=ls_day)
    dd, dt = spec.distances()
    return np.exp(-dd / ls_duration) * np.exp(-dt / ls_day)


def build_covariance(
    hyper: GPHyperparameters,
    D: int,
    L: int | None = None,
    *,
    jitter: float = DEFAULT_JITTER,
    tie_gamma: bool = False,
) -> np.ndarray:
    """Prior covariance of the exposure block, or of the lag block if ``L`` is given.

    The diagonal carries an extra ``jitter * sigma^2``.
    """
    if L is None:
        spec = KernelSpec.beta(D, jitter)
        sigma, ls1, ls2 = hyper.sigma_beta, hyper.phi, hyper.tau
    else:
        spec = KernelSpec.theta(D, L, jitter)
        ls1 = hyper.phi if tie_gamma else hyper.gamma
        sigma, ls2 = hyper.sigma_theta, hyper.eta
        if sigma is None or ls1 is None or ls2 is None:
            raise ValueError("lag covariance needs sigma_theta, gamma (or tie_gamma) and eta")
    K = correlation_matrix(spec, ls1, ls2)
    K[np.diag_indices_from(K)] += spec.jitter
    return sigma**2 * K


def _smallest_pivot(S: np.ndarray) -> tuple[int, float]:
    """Row and value of the first non-positive pivot of an unblocked Cholesky."""
    n = S.shape[0]
    L = np.zeros_like(S, dtype=float)
    for k in range(n):
        piv = S[k, k] - L[k, :k] @ L[k, :k]
        if not piv > 0:
            return k, float(piv)
        L[k, k] = math.sqrt(piv)
        L[k + 1 :, k] = (S[k + 1 :, k] - L[k + 1 :, :k] @ L[k, :k]) / L[k, k]
    return -1, float("nan")


def cholesky_with_jitter(
    S: np.ndarray,
    *,
    initial_jitter: float = 1e-10,
    max_jitter: float = 1e-4,
    return_jitter: bool = False,
):
    """Lower Cholesky factor of ``S``, adding diagonal jitter only on failure.

    Jitter is relative to the mean diagonal and grows tenfold per attempt
    from ``initial_jitter`` up to ``max_jitter``.

    Raises
    ------
    NotPositiveDefiniteError
        If the factorization still fails at ``max_jitter``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    try:
        L = np.linalg.cholesky(S)
        return (L, 0.0) if return_jitter else L
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.abs(np.diag(S)))) or 1.0
    jitter = initial_jitter
    eye = np.eye(S.shape[0])
    while jitter <= max_jitter * (1 + 1e-12):
        try:
            L = np.linalg.cholesky(S + jitter * scale * eye)
            return (L, jitter * scale) if return_jitter else L
        except np.linalg.LinAlgError:
            jitter *= 10
    row, piv = _smallest_pivot(S + max_jitter * scale * eye)
    raise NotPositiveDefiniteError(
        f"matrix not positive definite after jitter {max_jitter:g} (relative); "
        f"pivot {piv:.3g} at row {row}"
    )


def noncentered_transform(z: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Map iid standard normals to ``L @ z``."""
    z = np.asarray(z, dtype=float)
    if L.shape[1] != z.shape[-1]:
        raise ValueError(f"factor is {L.shape}, z has length {z.shape[-1]}")
    return z @ L.T if z.ndim > 1 else L @ z


def log_mvn_centered(x: np.ndarray, L: np.ndarray) -> float:
    """log N(x; 0, L L^T)."""
    w = solve_triangular(L, x, lower=True)
    return float(-0.5 * w @ w - np.log(np.diag(L)).sum() - 0.5 * len(x) * _LOG_2PI)


def log_prior(
    z: np.ndarray,
    hyper: GPHyperparameters,
    prior_spec: PriorSpec,
) -> tuple[float, np.ndarray, dict[str, float]]:
    """Prior log density in the sampler's coordinates.

    Covers the standard-normal latent vector ``z`` and every hyperparameter
    present in ``hyper`` (on the log scale, Jacobian included). Returns the
    value, the gradient with respect to ``z`` and a dict of gradients with
    respect to each log-hyperparameter.
    """
    z = np.asarray(z, dtype=float)
    value = -0.5 * float(z @ z) - 0.5 * len(z) * _LOG_2PI
    grads = {}
    for name, x in hyper.present().items():
        if name == "gamma" and prior_spec.tie_gamma:
            continue
        prior = getattr(prior_spec, name)
        if not hasattr(prior, "log_density_log"):
            raise TypeError(f"unsupported prior family for {name}: {prior!r}")
        v, g = prior.log_density_log(math.log(x))
        value += v
        grads[name] = g
    return value, -z, grads


def cholesky_derivative_contraction(
    Lk: np.ndarray, dK: np.ndarray, v: np.ndarray, z: np.ndarray
) -> float:
    """``v^T (dL) z`` where ``dL`` is the change in the Cholesky factor of
    ``K = Lk Lk^T`` induced by the symmetric perturbation ``dK``.

    Uses ``dL = Lk * Phi(Lk^-1 dK Lk^-T)`` with ``Phi`` taking the lower
    triangle and halving the diagonal. ``v`` here is already ``Lk^T g``.
    """
    X = solve_triangular(Lk, dK, lower=True, check_finite=False)
    M = solve_triangular(Lk, X.T, lower=True, check_finite=False).T
    P = np.tril(M)
    P[np.diag_indices_from(P)] *= 0.5
    return float(v @ P @ z)
