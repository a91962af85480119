"""Hyperprior families and the named prior presets.

Positive hyperparameters are sampled as ``u = log(x)``; every family
therefore exposes its log density on that scale, Jacobian included.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import special, stats

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float
    family = "lognormal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"lognormal sigma must be positive, got {self.sigma}")

    def log_density_log(self, u: float) -> tuple[float, float]:
        # density of log(x) is normal, Jacobian already folded in
        r = (u - self.mu) / self.sigma
        return -0.5 * r * r - math.log(self.sigma) - _LOG_SQRT_2PI, -r / self.sigma

    def median(self) -> float:
        return math.exp(self.mu)

    def sample(self, rng: np.random.Generator, size=None):
        return np.exp(rng.normal(self.mu, self.sigma, size))


@dataclass(frozen=True)
class HalfT:
    """Student-t restricted to the positive half line."""

    nu: float
    loc: float = 0.0
    scale: float = 1.0
    family = "half_t"

    def __post_init__(self):
        if not (self.nu > 0 and self.scale > 0):
            raise ValueError("half-t needs nu > 0 and scale > 0")

    @property
    def _log_mass(self) -> float:
        return float(stats.t.logsf(0.0, self.nu, self.loc, self.scale))

    def log_density_log(self, u: float) -> tuple[float, float]:
        x = math.exp(u)
        r = (x - self.loc) / self.scale
        nu = self.nu
        logpdf = (
            special.gammaln((nu + 1) / 2)
            - special.gammaln(nu / 2)
            - 0.5 * math.log(nu * math.pi)
            - math.log(self.scale)
            - (nu + 1) / 2 * math.log1p(r * r / nu)
        )
        dlogpdf_dx = -(nu + 1) * r / (self.scale * (nu + r * r))
        return logpdf - self._log_mass + u, x * dlogpdf_dx + 1.0

    def median(self) -> float:
        lo = stats.t.cdf(0.0, self.nu, self.loc, self.scale)
        return float(stats.t.ppf(lo + (1 - lo) / 2, self.nu, self.loc, self.scale))

    def sample(self, rng: np.random.Generator, size=None):
        lo = stats.t.cdf(0.0, self.nu, self.loc, self.scale)
        q = rng.uniform(lo, 1.0, size)
        return stats.t.ppf(q, self.nu, self.loc, self.scale)


@dataclass(frozen=True)
class Normal:
    """Normal prior; restricted to the positive half line when used for a
    positive hyperparameter."""

    mu: float
    sigma: float
    family = "normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"normal sigma must be positive, got {self.sigma}")

    def log_density(self, x):
        r = (x - self.mu) / self.sigma
        return -0.5 * r * r - math.log(self.sigma) - _LOG_SQRT_2PI

    def log_density_log(self, u: float) -> tuple[float, float]:
        x = math.exp(u)
        r = (x - self.mu) / self.sigma
        log_mass = float(stats.norm.logsf(0.0, self.mu, self.sigma))
        value = -0.5 * r * r - math.log(self.sigma) - _LOG_SQRT_2PI - log_mass + u
        return value, -x * r / self.sigma + 1.0

    def median(self) -> float:
        lo = stats.norm.cdf(0.0, self.mu, self.sigma)
        return float(stats.norm.ppf(lo + (1 - lo) / 2, self.mu, self.sigma))

    def sample(self, rng: np.random.Generator, size=None):
        lo = stats.norm.cdf(0.0, self.mu, self.sigma)
        return stats.norm.ppf(rng.uniform(lo, 1.0, size), self.mu, self.sigma)


Prior = LogNormal | HalfT | Normal

_FAMILIES = {"lognormal": LogNormal, "half_t": HalfT, "t": HalfT, "normal": Normal}

HYPER_NAMES = ("sigma_beta", "phi", "tau", "sigma_theta", "gamma", "eta")


def prior_from_dict(spec: dict) -> Prior:
    spec = dict(spec)
    family = spec.pop("family", None)
    if family not in _FAMILIES:
        raise ValueError(f"unsupported prior family {family!r}; use one of {sorted(_FAMILIES)}")
    try:
        return _FAMILIES[family](**spec)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {family} prior: {exc}") from None


def prior_to_dict(prior: Prior) -> dict:
    return {"family": prior.family, **asdict(prior)}


@dataclass(frozen=True)
class PriorSpec:
    """Hyperpriors for both GP blocks plus the covariate-coefficient prior.

    ``zeta_sd`` is the standard deviation of the normal prior on each
    covariate coefficient. With ``tie_gamma`` the lag block reuses the
    duration lengthscale ``phi`` instead of its own ``gamma``.
    """

    sigma_beta: Prior
    phi: Prior
    tau: Prior
    sigma_theta: Prior
    gamma: Prior
    eta: Prior
    zeta_sd: float = 10.0
    tie_gamma: bool = False
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        for h in HYPER_NAMES:
            if not isinstance(getattr(self, h), (LogNormal, HalfT, Normal)):
                raise TypeError(f"{h}: unsupported prior {getattr(self, h)!r}")
        if not self.zeta_sd > 0:
            raise ValueError("zeta_sd must be positive")

    def to_dict(self) -> dict:
        out = {h: prior_to_dict(getattr(self, h)) for h in HYPER_NAMES}
        out.update(zeta_sd=self.zeta_sd, tie_gamma=self.tie_gamma, name=self.name)
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> PriorSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(spec) - known
        if unknown:
            raise ValueError(f"unknown prior keys {sorted(unknown)}")
        missing = [h for h in HYPER_NAMES if h not in spec]
        if missing:
            raise ValueError(f"missing priors for {missing}")
        kw = {h: prior_from_dict(spec[h]) for h in HYPER_NAMES}
        for k in ("zeta_sd", "tie_gamma", "name"):
            if k in spec:
                kw[k] = spec[k]
        return cls(**kw)


def simulation_priors() -> PriorSpec:
    """Hyperpriors used in the simulation studies."""
    scale = LogNormal(0.5 * math.log(0.3), 0.1)
    length = LogNormal(math.log(0.3), 0.2)
    return PriorSpec(
        sigma_beta=scale,
        phi=length,
        tau=length,
        sigma_theta=scale,
        gamma=length,
        eta=length,
        zeta_sd=10.0,
        name="simulation",
    )


def application_priors() -> PriorSpec:
    """Hyperpriors used for the data application.

    No lag block was fit there; the lag hyperpriors mirror the exposure ones.
    """
    scale = HalfT(3.0, 0.0, 1.0)
    length = LogNormal(0.0, 0.6)
    return PriorSpec(
        sigma_beta=scale,
        phi=length,
        tau=length,
        sigma_theta=scale,
        gamma=length,
        eta=length,
        zeta_sd=10.0,
        name="application",
    )


PRESETS = {"simulation": simulation_priors, "application": application_priors}


def resolve_priors(name_or_path: str | Path | PriorSpec) -> PriorSpec:
    """A preset name, a JSON file path, or an existing spec."""
    if isinstance(name_or_path, PriorSpec):
        return name_or_path
    key = str(name_or_path)
    if key in PRESETS:
        return PRESETS[key]()
    path = Path(key)
    if not path.exists():
        raise ValueError(f"unknown prior preset or missing file: {key}")
    return PriorSpec.from_dict(json.loads(path.read_text()))
