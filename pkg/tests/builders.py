"""Small dataset factories shared by the tests."""

from __future__ import annotations

import numpy as np

from edvcm.data import AnalyticDataset, ExposureUnit, Role, Stratum


def make_stratum(sid, d, counts_exposed, counts_controls, *, lags=(), lag_controls=(), p=1.0, z=None):
    """Stratum with exposed days ``1..d`` and control copies.

    ``counts_controls`` is a list (one per control year) of length-``d``
    count lists. ``z`` maps unit position to a covariate tuple.
    """
    units = []
    k = 0

    def add(role, t, l, y):
        nonlocal k
        cov = z(k) if callable(z) else (() if z is None else tuple(z))
        units.append(ExposureUnit(f"{sid}u{k}", sid, d, role, t, l, int(y), p, cov))
        k += 1

    for t, y in enumerate(counts_exposed, start=1):
        add(Role.EXPOSURE, t, None, y)
    for l, y in enumerate(lags, start=1):
        add(Role.LAG, None, l, y)
    for ctrl in counts_controls:
        for t, y in enumerate(ctrl, start=1):
            add(Role.CONTROL_EXPOSURE, t, None, y)
    for ctrl in lag_controls:
        for l, y in enumerate(ctrl, start=1):
            add(Role.CONTROL_LAG, None, l, y)
    return Stratum(sid, d, tuple(units))


def random_dataset(rng, D=3, n_strata=10, n_cov=0, L=0, n_controls=2, mean_count=3.0, p_range=(0.5, 2.0)):
    """Random strata with random durations, person-time, counts and covariates."""
    strata = []
    for s in range(n_strata):
        d = int(rng.integers(1, D + 1)) if s >= D else s + 1  # every duration appears when possible
        sid = f"s{s}"
        units = []
        roles = [(Role.EXPOSURE, t, None) for t in range(1, d + 1)]
        roles += [(Role.LAG, None, l) for l in range(1, L + 1)]
        for _ in range(n_controls):
            roles += [(Role.CONTROL_EXPOSURE, t, None) for t in range(1, d + 1)]
            roles += [(Role.CONTROL_LAG, None, l) for l in range(1, L + 1)]
        for k, (role, t, l) in enumerate(roles):
            units.append(
                ExposureUnit(
                    f"{sid}u{k}",
                    sid,
                    d,
                    role,
                    t,
                    l,
                    int(rng.poisson(mean_count)),
                    float(rng.uniform(*p_range)),
                    tuple(rng.normal(size=n_cov)),
                )
            )
        strata.append(Stratum(sid, d, tuple(units)))
    return AnalyticDataset(tuple(strata), D, L, n_cov)


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def conjugate_toy(y_exposed=120, y_control=(100, 100), prior_sd=1.0):
    """Single-coefficient dataset and its quadrature posterior mean and SD.

    One stratum of duration 1 with one exposed unit and equal person-time
    controls; the coefficient has an independent normal prior.
    """
    from scipy import integrate

    s = make_stratum("toy", 1, [y_exposed], [[y] for y in y_control])
    ds = AnalyticDataset((s,), 1, 0, 0)
    W = y_exposed + sum(y_control)
    n_ctrl = len(y_control)

    def log_post(b):
        return y_exposed * b - W * np.logaddexp(b, np.log(n_ctrl)) - 0.5 * (b / prior_sd) ** 2

    mode = np.log(y_exposed / np.mean(y_control))
    ref = log_post(mode)

    def dens(b):
        return np.exp(log_post(b) - ref)

    lo, hi = mode - 3.0, mode + 3.0
    z = integrate.quad(dens, lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
    m = integrate.quad(lambda b: b * dens(b), lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0] / z
    v = integrate.quad(lambda b: (b - m) ** 2 * dens(b), lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0] / z
    return ds, m, float(np.sqrt(v))
