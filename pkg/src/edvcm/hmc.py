"""Static-trajectory Hamiltonian Monte Carlo with warmup adaptation.

Each transition draws the number of leapfrog steps uniformly from
``1..n_max`` where ``n_max = ceil(trajectory_length / step_size)`` (capped at
``max_leapfrog_steps``). Warmup runs dual-averaging step-size adaptation
throughout; a diagonal inverse metric is estimated from draws in the
second half of warmup, after which the step size is re-tuned.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .data import AnalyticDataset
from .posterior import PosteriorModel
from .priors import PriorSpec

log = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1000.0

LogDensityGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


class SamplerError(RuntimeError):
    pass


class Target(Protocol):
    dim: int

    def log_density(self, u: np.ndarray) -> tuple[float, np.ndarray]: ...

    def initial_point(self, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    n_warmup: int = 1000
    n_samples: int = 1000
    target_accept: float = 0.8
    max_leapfrog_steps: int = 1024
    seed: int = 0
    trajectory_length: float = math.pi

    def __post_init__(self):
        for name in ("n_chains", "n_warmup", "n_samples", "max_leapfrog_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if not self.trajectory_length > 0:
            raise ValueError("trajectory_length must be positive")


@dataclass
class PosteriorDraws:
    """Post-warmup draws, shaped ``(n_chains, n_samples, dim)``."""

    unconstrained: np.ndarray
    constrained: np.ndarray
    unconstrained_names: list[str]
    names: list[str]
    accept_prob: np.ndarray
    divergent: np.ndarray
    n_leapfrog: np.ndarray
    step_size: np.ndarray
    inv_mass: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def n_chains(self) -> int:
        return self.constrained.shape[0]

    @property
    def n_samples(self) -> int:
        return self.constrained.shape[1]

    @property
    def chain_labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_chains), self.n_samples)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no parameter named {name!r}") from None

    def chains(self, name: str) -> np.ndarray:
        """``(n_chains, n_samples)`` draws of one constrained parameter."""
        return self.constrained[:, :, self.index(name)]

    def __getitem__(self, name: str) -> np.ndarray:
        """Pooled draws of one constrained parameter."""
        return self.chains(name).reshape(-1)

    def matrix(self) -> np.ndarray:
        return self.constrained.reshape(-1, self.constrained.shape[2])

    def block(self, prefix: str) -> np.ndarray:
        """Pooled draws of all parameters whose name starts with ``prefix[``."""
        cols = [i for i, n in enumerate(self.names) if n.startswith(prefix + "[")]
        return self.matrix()[:, cols]

    @property
    def divergence_fraction(self) -> float:
        return float(self.divergent.mean())

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header:
                fh.write(header.rstrip("\n") + "\n")
            w = csv.writer(fh)
            w.writerow(["chain", "draw", *self.names])
            for c in range(self.n_chains):
                for k in range(self.n_samples):
                    w.writerow([c, k, *(repr(float(v)) for v in self.constrained[c, k])])


def leapfrog(
    position: np.ndarray,
    momentum: np.ndarray,
    step_size: float,
    n_steps: int,
    log_density_grad: LogDensityGrad,
    inv_mass: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate Hamiltonian dynamics for ``n_steps`` leapfrog steps."""
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    q, p, *_ = _integrate(
        np.array(position, dtype=float),
        np.array(momentum, dtype=float),
        *log_density_grad(position),
        step_size,
        n_steps,
        log_density_grad,
        np.ones(len(position)) if inv_mass is None else inv_mass,
    )
    return q, p


def _integrate(q, p, lp, g, eps, n, f, inv_mass):
    """Leapfrog carrying the log density and gradient; flags non-finite states."""
    p = p + 0.5 * eps * g
    for k in range(n):
        q = q + eps * inv_mass * p
        try:
            with np.errstate(all="ignore"):
                lp, g = f(q)
        except (ArithmeticError, np.linalg.LinAlgError):
            return q, p, -np.inf, np.full_like(q, np.nan), True
        if not (np.isfinite(lp) and np.all(np.isfinite(g))):
            return q, p, lp, g, True
        if k < n - 1:
            p = p + eps * g
    p = p + 0.5 * eps * g
    return q, p, lp, g, False


class DualAveraging:
    def __init__(self, step_size: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10 * step_size)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.t = 0
        self.h_bar = 0.0
        self.log_eps_bar = 0.0

    def update(self, accept_prob: float) -> float:
        self.t += 1
        w = 1.0 / (self.t + self.t0)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept_prob)
        log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        eta = self.t ** (-self.kappa)
        self.log_eps_bar = eta * log_eps + (1 - eta) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final(self) -> float:
        return math.exp(self.log_eps_bar)


def _hamiltonian(lp, p, inv_mass):
    with np.errstate(over="ignore", invalid="ignore"):
        return -lp + 0.5 * float(np.sum(inv_mass * p * p))


def _initial_step_size(q, lp, g, f, inv_mass, rng, eps=1.0):
    """Double or halve ``eps`` until one-step acceptance crosses 0.5."""
    p = rng.normal(size=len(q)) / np.sqrt(inv_mass)
    h0 = _hamiltonian(lp, p, inv_mass)

    def log_ratio(e):
        q1, p1, lp1, _, bad = _integrate(q, p, lp, g, e, 1, f, inv_mass)
        if bad:
            return -np.inf
        return h0 - _hamiltonian(lp1, p1, inv_mass)

    r = log_ratio(eps)
    a = 1 if r > math.log(0.5) else -1
    for _ in range(60):
        if not a * r > -a * math.log(2.0):
            break
        eps *= 2.0**a
        r = log_ratio(eps)
    return eps


def _regularized_variance(x: np.ndarray) -> np.ndarray:
    n = len(x)
    var = x.var(axis=0, ddof=1)
    return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def run_chain(target: Target, config: SamplerConfig, seed_seq: np.random.SeedSequence) -> dict:
    """One chain; returns post-warmup unconstrained draws and statistics."""
    rng = np.random.default_rng(seed_seq)
    f = target.log_density
    q = np.asarray(target.initial_point(rng), dtype=float)
    lp, g = f(q)
    if not (np.isfinite(lp) and np.all(np.isfinite(g))):
        raise SamplerError("non-finite log posterior at the initial point")
    dim = len(q)
    inv_mass = np.ones(dim)
    eps = _initial_step_size(q, lp, g, f, inv_mass, rng)
    da = DualAveraging(eps, config.target_accept)

    n_warm = config.n_warmup
    adapt_metric = n_warm >= 20
    metric_start, metric_end = n_warm // 2, int(0.85 * n_warm)
    window = []

    total = n_warm + config.n_samples
    draws = np.empty((config.n_samples, dim))
    accept = np.empty(config.n_samples)
    divergent = np.zeros(config.n_samples, dtype=bool)
    n_leap = np.empty(config.n_samples, dtype=np.int64)
    for it in range(total):
        n_max = int(min(config.max_leapfrog_steps, max(1, math.ceil(config.trajectory_length / eps))))
        n = int(rng.integers(1, n_max + 1))
        p0 = rng.normal(size=dim) / np.sqrt(inv_mass)
        h0 = _hamiltonian(lp, p0, inv_mass)
        q1, p1, lp1, g1, bad = _integrate(q, p0, lp, g, eps, n, f, inv_mass)
        if bad:
            alpha, diverged = 0.0, True
        else:
            dh = _hamiltonian(lp1, p1, inv_mass) - h0
            diverged = not np.isfinite(dh) or dh > DIVERGENCE_THRESHOLD
            alpha = 0.0 if diverged else min(1.0, math.exp(-dh)) if dh > 0 else 1.0
        if rng.uniform() < alpha:
            q, lp, g = q1, lp1, g1

        if it < n_warm:
            eps = da.update(alpha)
            if adapt_metric and metric_start <= it < metric_end:
                window.append(q)
            if adapt_metric and it == metric_end - 1:
                inv_mass = _regularized_variance(np.array(window))
                eps = _initial_step_size(q, lp, g, f, inv_mass, rng)
                da = DualAveraging(eps, config.target_accept)
            if it == n_warm - 1:
                eps = da.final
        else:
            k = it - n_warm
            draws[k], accept[k], divergent[k], n_leap[k] = q, alpha, diverged, n
    return dict(
        draws=draws,
        accept=accept,
        divergent=divergent,
        n_leapfrog=n_leap,
        step_size=eps,
        inv_mass=inv_mass,
    )


def sample(target: Target, config: SamplerConfig, *, jobs: int = 1) -> list[dict]:
    """Run all chains, optionally across processes; output is independent of ``jobs``."""
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    if jobs > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, config.n_chains)) as ex:
            return list(ex.map(run_chain, [target] * config.n_chains, [config] * config.n_chains, seeds))
    return [run_chain(target, config, s) for s in seeds]


def draws_from_chains(target, chains: list[dict]) -> PosteriorDraws:
    U = np.stack([c["draws"] for c in chains])
    if hasattr(target, "constrain_many"):
        C = np.stack([target.constrain_many(c["draws"]) for c in chains])
        names = list(target.constrained_names)
        unames = list(target.unconstrained_names)
    else:
        C = U.copy()
        names = unames = [f"x[{k + 1}]" for k in range(U.shape[2])]
    out = PosteriorDraws(
        unconstrained=U,
        constrained=C,
        unconstrained_names=unames,
        names=names,
        accept_prob=np.stack([c["accept"] for c in chains]),
        divergent=np.stack([c["divergent"] for c in chains]),
        n_leapfrog=np.stack([c["n_leapfrog"] for c in chains]),
        step_size=np.array([c["step_size"] for c in chains]),
        inv_mass=np.stack([c["inv_mass"] for c in chains]),
    )
    frac = out.divergence_fraction
    if frac > 0.10:
        msg = f"{100 * frac:.1f}% of post-warmup transitions diverged"
        out.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return out


def run_hmc(
    dataset: AnalyticDataset,
    prior_spec: PriorSpec,
    config: SamplerConfig,
    *,
    prior: str = "gp",
    independent_sd: float = 1.0,
    jobs: int = 1,
) -> PosteriorDraws:
    """Sample the posterior of the exposure model for ``dataset``.

    Raises
    ------
    SamplerError
        If the log posterior is not finite at the initial point.
    """
    model = PosteriorModel(dataset, prior_spec, prior=prior, independent_sd=independent_sd)
    return draws_from_chains(model, sample(model, config, jobs=jobs))


@dataclass
class FunctionTarget:
    """Adapter for sampling an arbitrary log density."""

    fn: LogDensityGrad
    dim: int
    init_scale: float = 0.5

    def log_density(self, u):
        return self.fn(u)

    def initial_point(self, rng):
        return rng.uniform(-self.init_scale, self.init_scale, self.dim)
