import math

import numpy as np
import pytest

from builders import conjugate_toy, random_dataset
from edvcm.diagnostics import ess_bulk, split_rhat
from edvcm.hmc import (
    DualAveraging,
    FunctionTarget,
    SamplerConfig,
    SamplerError,
    draws_from_chains,
    leapfrog,
    run_hmc,
    sample,
)
from edvcm.priors import simulation_priors


def std_normal(q):
    return -0.5 * float(q @ q), -q


def test_free_particle():
    q0, p0 = np.array([0.5, -1.0]), np.array([2.0, 0.3])
    q, p = leapfrog(q0, p0, 0.1, 7, lambda q: (0.0, np.zeros_like(q)))
    np.testing.assert_allclose(q, q0 + 0.7 * p0, atol=1e-14)
    np.testing.assert_array_equal(p, p0)


def test_energy_drift_small_step():
    q0, p0 = np.array([1.0, -0.5, 0.2]), np.array([0.3, 0.8, -1.1])
    q, p = leapfrog(q0, p0, 0.01, 100, std_normal)
    h = lambda q, p: 0.5 * (q @ q + p @ p)  # noqa: E731
    assert abs(h(q, p) - h(q0, p0)) < 1e-4


def test_reversibility_quadratic():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    P = A @ A.T + 4 * np.eye(4)

    def f(q):
        return -0.5 * float(q @ P @ q), -P @ q

    q0, p0 = rng.normal(size=4), rng.normal(size=4)
    q1, p1 = leapfrog(q0, p0, 0.05, 40, f)
    q2, p2 = leapfrog(q1, -p1, 0.05, 40, f)
    np.testing.assert_allclose(q2, q0, atol=1e-10)
    np.testing.assert_allclose(-p2, p0, atol=1e-10)


def test_step_size_must_be_positive():
    with pytest.raises(ValueError):
        leapfrog(np.zeros(1), np.zeros(1), 0.0, 1, std_normal)


def test_dual_averaging_moves_towards_target():
    da = DualAveraging(1.0, 0.8)
    for _ in range(50):
        eps = da.update(0.1)
    assert eps < 1.0
    da = DualAveraging(0.01, 0.8)
    for _ in range(50):
        eps = da.update(1.0)
    assert eps > 0.01


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(n_chains=0)
    with pytest.raises(ValueError):
        SamplerConfig(target_accept=1.0)


def test_two_dimensional_normal_moments():
    t = FunctionTarget(std_normal, 2)
    d = draws_from_chains(t, sample(t, SamplerConfig(n_chains=4, seed=1)))
    x = d.matrix()
    assert x.shape == (4000, 2)
    assert np.all(np.abs(x.mean(axis=0)) < 0.05)
    assert np.all(np.abs(x.var(axis=0) - 1) < 0.1)


def test_conjugate_toy_matches_quadrature():
    ds, m, sd = conjugate_toy()
    cfg = SamplerConfig(n_chains=4, n_warmup=500, n_samples=1000, seed=3)
    d = run_hmc(ds, simulation_priors(), cfg, prior="independent", independent_sd=1.0)
    ch = d.chains("beta[1,1]")
    mcse = ch.std() / math.sqrt(ess_bulk(ch))
    assert abs(ch.mean() - m) < 3 * mcse
    assert split_rhat(ch) < 1.01


def test_fixed_seed_bit_identical():
    ds = random_dataset(np.random.default_rng(0), D=2, n_strata=4)
    cfg = SamplerConfig(n_chains=2, n_warmup=60, n_samples=40, seed=11)
    a = run_hmc(ds, simulation_priors(), cfg)
    b = run_hmc(ds, simulation_priors(), cfg)
    assert np.array_equal(a.constrained, b.constrained)


def test_parallel_chains_match_serial():
    ds = random_dataset(np.random.default_rng(1), D=2, n_strata=4)
    cfg = SamplerConfig(n_chains=2, n_warmup=40, n_samples=20, seed=5)
    a = run_hmc(ds, simulation_priors(), cfg, jobs=1)
    b = run_hmc(ds, simulation_priors(), cfg, jobs=2)
    assert np.array_equal(a.constrained, b.constrained)


def test_prior_only_marginal_sd_and_positivity():
    ds = random_dataset(np.random.default_rng(2), D=2, n_strata=4, mean_count=0.0)
    spec = simulation_priors()
    d = run_hmc(ds, spec, SamplerConfig(n_chains=4, n_warmup=500, n_samples=1000, seed=2))
    # Monte Carlo prior oracle: beta = sigma * z with unit kernel diagonal plus jitter
    rng = np.random.default_rng(0)
    sig = spec.sigma_beta.sample(rng, 200_000)
    target_sd = float(np.std(sig * rng.standard_normal(sig.size)) * math.sqrt(1 + 1e-8))
    for k in range(3):
        assert d.block("beta")[:, k].std() == pytest.approx(target_sd, rel=0.10)
    for h in ("sigma_beta", "phi", "tau"):
        assert np.all(d[h] > 0)


def test_chains_use_distinct_streams():
    t = FunctionTarget(std_normal, 1)
    d = draws_from_chains(t, sample(t, SamplerConfig(n_chains=2, n_warmup=100, n_samples=500, seed=0)))
    a, b = d.constrained[0, :, 0], d.constrained[1, :, 0]
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.15


def test_nonfinite_initial_point():
    t = FunctionTarget(lambda q: (float("nan"), q), 1)
    with pytest.raises(SamplerError, match="initial point"):
        sample(t, SamplerConfig(n_chains=1, n_warmup=5, n_samples=5))


def test_divergence_warning():
    # density with a hard wall: any step past |q| > 1 is non-finite
    def wall(q):
        if np.any(np.abs(q) > 1):
            return -np.inf, np.zeros_like(q)
        return 0.0, np.zeros_like(q)

    t = FunctionTarget(wall, 1, init_scale=0.1)
    cfg = SamplerConfig(n_chains=1, n_warmup=10, n_samples=200, trajectory_length=20.0, seed=0)
    with pytest.warns(RuntimeWarning, match="diverged"):
        d = draws_from_chains(t, sample(t, cfg))
    assert d.warnings and d.divergence_fraction > 0.1
