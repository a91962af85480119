"""Joint log posterior in unconstrained coordinates.

Layout of the unconstrained vector::

    [z_beta | z_theta | zeta | log sigma_beta, log phi, log tau |
     log sigma_theta, log gamma, log eta]

``z_*`` are standard-normal latents mapped to coefficients through the
Cholesky factor of the kernel matrix (non-centered form). With the
``independent`` prior the latents *are* the coefficients (scaled by a fixed
prior SD) and there are no hyperparameters.
"""

from __future__ import annotations

import math
import numpy as np
from scipy.linalg.lapack import dtrtri

from .data import AnalyticDataset
from .gp import DEFAULT_JITTER, KernelSpec
from .grid import lag_cells, triangle_cells
from .likelihood import loglik_and_grad
from .priors import PriorSpec

_LOG_2PI = math.log(2 * math.pi)


class _GPBlock:
    """Kernel bookkeeping for one coefficient block."""

    def __init__(self, dist_duration: np.ndarray, dist_day: np.ndarray, jitter: float):
        self.dist_duration = dist_duration
        self.dist_day = dist_day
        self.jitter = jitter
        n = len(dist_duration)
        self._diag = np.arange(n)
        # lower triangle with halved diagonal, as needed by the Cholesky derivative
        self._phi_mask = np.tril(np.ones((n, n))) - 0.5 * np.eye(n)

    def factor(self, log_ls1: float, log_ls2: float):
        K0 = np.exp(-self.dist_duration * np.exp(-log_ls1) - self.dist_day * np.exp(-log_ls2))
        K = K0.copy()
        K[self._diag, self._diag] += self.jitter
        return K0, np.linalg.cholesky(K)

    def forward(self, z, log_sigma, log_ls1, log_ls2):
        K0, Lk = self.factor(log_ls1, log_ls2)
        return K0, Lk, np.exp(log_sigma) * (Lk @ z)

    def lengthscale_grads(self, K0, Lk, z, v, log_ls1, log_ls2) -> tuple[float, float]:
        """``v' dL z`` for each log-lengthscale, with ``v = Lk' g``."""
        Linv, info = dtrtri(Lk, lower=1)
        if info:
            raise np.linalg.LinAlgError("singular kernel factor")
        out = []
        for dist, log_ls in ((self.dist_duration, log_ls1), (self.dist_day, log_ls2)):
            dK = K0 * dist * np.exp(-log_ls)
            M = Linv @ dK @ Linv.T
            out.append(float(v @ ((M * self._phi_mask) @ z)))
        return out[0], out[1]


class PosteriorModel:
    """Log posterior and gradient for one dataset.

    Parameters
    ----------
    dataset : AnalyticDataset
    prior_spec : PriorSpec
        Hyperpriors (ignored by the independent prior except ``zeta_sd``).
    prior : {"gp", "independent"}
        GP product-kernel prior or iid normal coefficients.
    independent_sd : float
        Prior SD of each coefficient under the independent prior.
    """

    def __init__(
        self,
        dataset: AnalyticDataset,
        prior_spec: PriorSpec,
        *,
        prior: str = "gp",
        independent_sd: float = 1.0,
        jitter: float = DEFAULT_JITTER,
    ):
        if prior not in ("gp", "independent"):
            raise ValueError(f"prior must be 'gp' or 'independent', got {prior!r}")
        self.dataset = dataset
        self.prior_spec = prior_spec
        self.prior = prior
        self.independent_sd = float(independent_sd)
        self.arrays = dataset.arrays
        D, L = dataset.D, dataset.L_max
        self.n_beta = self.arrays.n_beta
        self.n_theta = self.arrays.n_theta
        self.n_zeta = dataset.covariate_dim
        self.has_lags = L > 0

        names = [f"beta[{d},{t}]" for d, t in triangle_cells(D)]
        names += [f"theta[{d},{l}]" for d, l in lag_cells(D, L)]
        names += [f"zeta[{k + 1}]" for k in range(self.n_zeta)]
        self.coef_names = list(names)
        self.hyper_names: list[str] = []
        if prior == "gp":
            self.hyper_names = ["sigma_beta", "phi", "tau"]
            if self.has_lags:
                self.hyper_names += ["sigma_theta"]
                if not prior_spec.tie_gamma:
                    self.hyper_names += ["gamma"]
                self.hyper_names += ["eta"]
            dd, dt = KernelSpec.beta(D).distances()
            self._beta_block = _GPBlock(dd, dt, jitter)
            if self.has_lags:
                dd, dl = KernelSpec.theta(D, L).distances()
                self._theta_block = _GPBlock(dd, dl, jitter)
        self.n_coef = len(names)
        self.dim = self.n_coef + len(self.hyper_names)
        self._hyper_pos = {h: self.n_coef + k for k, h in enumerate(self.hyper_names)}

        nb, nt = self.n_beta, self.n_theta
        self.sl_beta = slice(0, nb)
        self.sl_theta = slice(nb, nb + nt)
        self.sl_zeta = slice(nb + nt, nb + nt + self.n_zeta)

    # ------------------------------------------------------------------
    @property
    def unconstrained_names(self) -> list[str]:
        latent = [n.replace("beta[", "z_beta[").replace("theta[", "z_theta[") for n in self.coef_names]
        if self.prior == "independent":
            latent = list(self.coef_names)
        return latent + [f"log_{h}" for h in self.hyper_names]

    @property
    def constrained_names(self) -> list[str]:
        return self.coef_names + self.hyper_names

    def _log_hyper(self, u, name):
        if name == "gamma" and self.prior_spec.tie_gamma:
            name = "phi"
        return float(u[self._hyper_pos[name]])

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        """Latents uniform on (-0.5, 0.5), hyperparameters at their prior medians."""
        u = np.empty(self.dim)
        u[: self.n_coef] = rng.uniform(-0.5, 0.5, self.n_coef)
        for h in self.hyper_names:
            u[self._hyper_pos[h]] = math.log(getattr(self.prior_spec, h).median())
        return u

    # ------------------------------------------------------------------
    def coefficients(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float)
        zeta = u[self.sl_zeta]
        if self.prior == "independent":
            s = self.independent_sd
            return s * u[self.sl_beta], s * u[self.sl_theta], zeta
        beta = self._beta_block.forward(
            u[self.sl_beta],
            self._log_hyper(u, "sigma_beta"),
            self._log_hyper(u, "phi"),
            self._log_hyper(u, "tau"),
        )[2]
        theta = np.zeros(0)
        if self.has_lags:
            theta = self._theta_block.forward(
                u[self.sl_theta],
                self._log_hyper(u, "sigma_theta"),
                self._log_hyper(u, "gamma"),
                self._log_hyper(u, "eta"),
            )[2]
        return beta, theta, zeta

    def constrain(self, u: np.ndarray) -> np.ndarray:
        """Coefficients followed by hyperparameters on their natural scale."""
        beta, theta, zeta = self.coefficients(u)
        hyper = [math.exp(u[self._hyper_pos[h]]) for h in self.hyper_names]
        return np.concatenate([beta, theta, zeta, hyper])

    def constrain_many(self, U: np.ndarray) -> np.ndarray:
        return np.array([self.constrain(u) for u in U]).reshape(len(U), self.dim)

    # ------------------------------------------------------------------
    def log_density(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        u = np.asarray(u, dtype=float)
        grad = np.zeros(self.dim)
        spec = self.prior_spec
        zeta = u[self.sl_zeta]

        # covariate coefficients: N(0, zeta_sd^2)
        zsd = spec.zeta_sd
        lp = -0.5 * float(zeta @ zeta) / zsd**2 - self.n_zeta * (math.log(zsd) + 0.5 * _LOG_2PI)
        grad[self.sl_zeta] = -zeta / zsd**2

        latent = u[: self.n_beta + self.n_theta]
        if self.prior == "independent":
            s = self.independent_sd
            beta, theta = s * u[self.sl_beta], s * u[self.sl_theta]
            ll, g = loglik_and_grad(self.arrays, beta, theta, zeta)
            lp += ll - 0.5 * float(latent @ latent) - len(latent) * (0.5 * _LOG_2PI + math.log(s))
            grad[self.sl_beta] = s * g.beta - u[self.sl_beta]
            grad[self.sl_theta] = s * g.theta - u[self.sl_theta]
            grad[self.sl_zeta] += g.zeta
            return lp, grad

        lp += -0.5 * float(latent @ latent) - len(latent) * 0.5 * _LOG_2PI
        grad[: len(latent)] = -latent

        hyper_u = {h: float(u[self._hyper_pos[h]]) for h in self.hyper_names}
        for h, val in hyper_u.items():
            v, gh = getattr(spec, h).log_density_log(val)
            lp += v
            grad[self._hyper_pos[h]] += gh

        zb = u[self.sl_beta]
        lsb, lphi, ltau = hyper_u["sigma_beta"], hyper_u["phi"], hyper_u["tau"]
        Kb, Lb, beta = self._beta_block.forward(zb, lsb, lphi, ltau)
        theta = np.zeros(0)
        if self.has_lags:
            zt = u[self.sl_theta]
            lst, lgam, leta = hyper_u["sigma_theta"], self._log_hyper(u, "gamma"), hyper_u["eta"]
            Kt, Lt, theta = self._theta_block.forward(zt, lst, lgam, leta)

        ll, g = loglik_and_grad(self.arrays, beta, theta, zeta)
        lp += ll
        grad[self.sl_zeta] += g.zeta

        sb = np.exp(lsb)
        vb = Lb.T @ g.beta
        grad[self.sl_beta] += sb * vb
        grad[self._hyper_pos["sigma_beta"]] += float(beta @ g.beta)
        g_phi, g_tau = self._beta_block.lengthscale_grads(Kb, Lb, zb, vb, lphi, ltau)
        grad[self._hyper_pos["phi"]] += sb * g_phi
        grad[self._hyper_pos["tau"]] += sb * g_tau

        if self.has_lags:
            st = np.exp(lst)
            vt = Lt.T @ g.theta
            grad[self.sl_theta] += st * vt
            grad[self._hyper_pos["sigma_theta"]] += float(theta @ g.theta)
            gpos = self._hyper_pos["phi" if spec.tie_gamma else "gamma"]
            g_gam, g_eta = self._theta_block.lengthscale_grads(Kt, Lt, zt, vt, lgam, leta)
            grad[gpos] += st * g_gam
            grad[self._hyper_pos["eta"]] += st * g_eta
        return lp, grad

    def __call__(self, u):
        return self.log_density(u)


def log_posterior(u: np.ndarray, dataset: AnalyticDataset, prior_spec: PriorSpec, **kw):
    """Value and gradient of the log posterior at unconstrained ``u``."""
    return PosteriorModel(dataset, prior_spec, **kw).log_density(u)
