"""Conditional (multinomial) likelihood of the stratified Poisson model.

Within a stratum the outcome total ``W`` is conditioned on, which removes
the stratum intercepts and leaves a multinomial with probabilities

    pi_i = exp(eta_i) / sum_j exp(eta_j),
    eta_i = beta[d, t] * A_i + theta[d, l] * L_i + zeta . z_i + log P_i.

The parameter-free multinomial coefficient is dropped throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import AnalyticDataset, ExposureUnit, Role, Stratum, UnitArrays
from .grid import CoefficientGrid, LagCoefficientGrid, grid_index, lag_index


@dataclass(frozen=True)
class ParameterSet:
    beta: CoefficientGrid
    theta: LagCoefficientGrid | None = None
    zeta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "zeta", np.asarray(self.zeta, dtype=float).reshape(-1))

    @classmethod
    def zeros(cls, dataset: AnalyticDataset) -> ParameterSet:
        return cls.from_vectors(
            dataset,
            np.zeros(dataset.arrays.n_beta),
            np.zeros(dataset.arrays.n_theta),
            np.zeros(dataset.covariate_dim),
        )

    @classmethod
    def from_vectors(cls, dataset: AnalyticDataset, beta, theta=None, zeta=None) -> ParameterSet:
        theta_grid = None
        if dataset.L_max:
            theta = np.zeros(dataset.D * dataset.L_max) if theta is None else theta
            theta_grid = LagCoefficientGrid(dataset.D, dataset.L_max, theta)
        zeta = np.zeros(dataset.covariate_dim) if zeta is None else zeta
        return cls(CoefficientGrid(dataset.D, beta), theta_grid, zeta)

    def vectors(self, dataset: AnalyticDataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coefficient vectors checked against the dataset dimensions."""
        if self.beta.D != dataset.D:
            raise ValueError(f"beta grid has D={self.beta.D}, dataset has D={dataset.D}")
        if dataset.L_max:
            if self.theta is None or (self.theta.D, self.theta.L) != (dataset.D, dataset.L_max):
                raise ValueError("theta grid does not match dataset lag dimensions")
            theta = self.theta.values
        else:
            theta = np.zeros(0)
        if self.zeta.shape != (dataset.covariate_dim,):
            raise ValueError(
                f"zeta has length {len(self.zeta)}, dataset has {dataset.covariate_dim} covariates"
            )
        return self.beta.values, theta, self.zeta


@dataclass(frozen=True)
class Gradient:
    beta: np.ndarray
    theta: np.ndarray
    zeta: np.ndarray


def unit_linear_predictor(unit: ExposureUnit, params: ParameterSet) -> float:
    eta = math.log(unit.p)
    if len(params.zeta) != len(unit.z):
        raise ValueError(f"unit {unit.unit_id}: {len(unit.z)} covariates, zeta has {len(params.zeta)}")
    eta += float(np.dot(params.zeta, unit.z)) if len(unit.z) else 0.0
    if unit.role is Role.EXPOSURE:
        eta += params.beta.values[grid_index(unit.d, unit.t, params.beta.D)]
    elif unit.role is Role.LAG:
        if params.theta is None:
            raise IndexError(f"unit {unit.unit_id} is a lag day but no lag coefficients given")
        eta += params.theta.values[lag_index(unit.d, unit.l, params.theta.D, params.theta.L)]
    return eta


def stratum_log_probabilities(stratum: Stratum, params: ParameterSet) -> np.ndarray:
    """Log allocation probabilities for each unit of a stratum."""
    eta = np.array([unit_linear_predictor(u, params) for u in stratum.units])
    if len(eta) < 2:
        warnings.warn(
            f"stratum {stratum.stratum_id} has a single unit; its probability is 1",
            stacklevel=2,
        )
    return eta - logsumexp(eta)


def linear_predictor(arr: UnitArrays, beta, theta, zeta) -> np.ndarray:
    eta = arr.log_p.copy()
    if arr.n_beta:
        eta += np.append(beta, 0.0)[arr.beta_idx]
    if arr.n_theta:
        eta += np.append(theta, 0.0)[arr.theta_idx]
    if arr.Z.shape[1]:
        eta += arr.Z @ zeta
    return eta


def _log_probs(arr: UnitArrays, eta: np.ndarray) -> np.ndarray:
    m = np.maximum.reduceat(eta, arr.starts)
    s = np.add.reduceat(np.exp(eta - m[arr.stratum]), arr.starts)
    return eta - (np.log(s) + m)[arr.stratum]


def loglik_and_grad(
    arr: UnitArrays, beta, theta, zeta, *, want_grad: bool = True
) -> tuple[float, Gradient | None]:
    """Vectorized log-likelihood and score over all strata with ``W > 0``."""
    if len(arr.y) == 0:
        zero = Gradient(np.zeros(arr.n_beta), np.zeros(arr.n_theta), np.zeros(arr.Z.shape[1]))
        return 0.0, (zero if want_grad else None)
    logp = _log_probs(arr, linear_predictor(arr, beta, theta, zeta))
    ll = float(arr.y @ logp)
    if not want_grad:
        return ll, None
    resid = arr.y - arr.W[arr.stratum] * np.exp(logp)
    g_beta = np.bincount(arr.beta_idx, resid, minlength=arr.n_beta + 1)[: arr.n_beta]
    g_theta = np.bincount(arr.theta_idx, resid, minlength=arr.n_theta + 1)[: arr.n_theta]
    g_zeta = arr.Z.T @ resid
    return ll, Gradient(g_beta, g_theta, g_zeta)


def conditional_log_likelihood(dataset: AnalyticDataset, params: ParameterSet) -> float:
    beta, theta, zeta = params.vectors(dataset)
    return loglik_and_grad(dataset.arrays, beta, theta, zeta, want_grad=False)[0]


def log_likelihood_gradient(dataset: AnalyticDataset, params: ParameterSet) -> Gradient:
    beta, theta, zeta = params.vectors(dataset)
    return loglik_and_grad(dataset.arrays, beta, theta, zeta)[1]


def design_matrix(arr: UnitArrays) -> np.ndarray:
    """Dense unit-by-parameter design over ``(beta, theta, zeta)``."""
    n = len(arr.y)
    X = np.zeros((n, arr.n_beta + arr.n_theta + arr.Z.shape[1]))
    rows = np.arange(n)
    mb = arr.beta_idx < arr.n_beta
    X[rows[mb], arr.beta_idx[mb]] = 1.0
    mt = arr.theta_idx < arr.n_theta
    X[rows[mt], arr.n_beta + arr.theta_idx[mt]] = 1.0
    X[:, arr.n_beta + arr.n_theta :] = arr.Z
    return X


def fisher_information(arr: UnitArrays, beta, theta, zeta) -> np.ndarray:
    """Negative Hessian of the conditional log-likelihood.

    Equals ``sum_s W_s (X_s' diag(pi) X_s - (X_s' pi)(X_s' pi)')``; observed
    and expected information coincide for this exponential family.
    """
    X = design_matrix(arr)
    if len(arr.y) == 0:
        return np.zeros((X.shape[1], X.shape[1]))
    pi = np.exp(_log_probs(arr, linear_predictor(arr, beta, theta, zeta)))
    wpi = arr.W[arr.stratum] * pi
    info = (X * wpi[:, None]).T @ X
    # per-stratum weighted means of the design rows
    xbar = np.add.reduceat(X * pi[:, None], arr.starts, axis=0)
    info -= (xbar * arr.W[:, None]).T @ xbar
    return info
