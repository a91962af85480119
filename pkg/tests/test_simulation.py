import math

import numpy as np
import pytest

from builders import random_dataset
from edvcm.grid import CoefficientGrid, LagCoefficientGrid
from edvcm.hmc import SamplerConfig
from edvcm.likelihood import ParameterSet, stratum_log_probabilities
from edvcm.simulation import (
    LayoutSpec,
    StudyProtocol,
    SurfaceSpec,
    compute_metrics,
    farthest_point_knots,
    fit_edvcm,
    fit_frequentist_glm,
    fit_independent_normal,
    generate_lag_surface,
    generate_true_surface,
    paper_main_protocol,
    remove_durations,
    resolve_protocol,
    run_study,
    simulate_dataset,
    unit_probabilities,
)

TINY = SamplerConfig(n_chains=2, n_warmup=60, n_samples=100, seed=0)


def _zero_truth(D, L=0):
    th = LagCoefficientGrid(D, L, np.zeros(D * L)) if L else None
    return ParameterSet(CoefficientGrid(D, np.zeros(D * (D + 1) // 2)), th)


# ---- surfaces -------------------------------------------------------------
def test_zero_noise_is_pure_spline():
    surf, spline = generate_true_surface(SurfaceSpec(D=5, noise_fraction=0.0, seed=3), return_spline=True)
    np.testing.assert_array_equal(surf.values, spline.values)
    assert spline.values.std() == pytest.approx(0.1)


def test_surface_deterministic_by_seed():
    a = generate_true_surface(SurfaceSpec(D=6, seed=9))
    b = generate_true_surface(SurfaceSpec(D=6, seed=9))
    c = generate_true_surface(SurfaceSpec(D=6, seed=10))
    assert np.array_equal(a.values, b.values) and not np.array_equal(a.values, c.values)


def test_noise_variance_ratio_d14():
    ratios = []
    for seed in range(200):
        surf, spline = generate_true_surface(SurfaceSpec(D=14, noise_fraction=1.0, seed=seed), return_spline=True)
        ratios.append(np.var(surf.values - spline.values, ddof=1) / np.var(spline.values, ddof=1))
    assert np.mean(ratios) == pytest.approx(1.0, rel=0.25)


def test_few_cells_reduce_knots():
    with pytest.warns(RuntimeWarning, match="knots"):
        g = generate_true_surface(SurfaceSpec(D=1, noise_fraction=0.0))
    assert g.values.shape == (1,)


def test_knots_are_distinct_and_deterministic():
    pts = np.array([(d, t) for d in range(1, 8) for t in range(1, d + 1)], dtype=float)
    k1 = farthest_point_knots(pts, 5)
    assert len({tuple(k) for k in k1}) == 5
    np.testing.assert_array_equal(k1, farthest_point_knots(pts, 5))


def test_lag_surface_shape():
    g = generate_lag_surface(SurfaceSpec(D=4), 3, seed=1)
    assert g.values.shape == (12,)


# ---- data generation ------------------------------------------------------
def test_null_truth_one_third_share():
    layout = LayoutSpec(D=1, events_per_duration=(10_000,), baseline_rate=1.0)
    ds = simulate_dataset(layout, _zero_truth(1), 0)
    y = np.array([[u.y for u in s.units] for s in ds.strata])
    share = y[:, 0].sum() / y.sum()
    se = math.sqrt((1 / 3) * (2 / 3) / y.sum())
    assert abs(share - 1 / 3) < 3 * se


def test_two_thirds_share_probability():
    truth = ParameterSet(CoefficientGrid(1, [math.log(2)]))
    _, pi = unit_probabilities(1, truth, 0, 1)
    np.testing.assert_allclose(pi, [2 / 3, 1 / 3], rtol=1e-14)


def test_probabilities_agree_with_likelihood_module():
    truth = ParameterSet(
        CoefficientGrid(3, np.linspace(-0.3, 0.3, 6)), LagCoefficientGrid(3, 2, np.linspace(0.1, 0.6, 6))
    )
    layout = LayoutSpec(D=3, events_per_duration=(1, 1, 1), n_lags=2, baseline_rate=5.0)
    ds = simulate_dataset(layout, truth, 1)
    for s in ds.strata:
        _, pi = unit_probabilities(s.d, truth, 2, 2)
        np.testing.assert_allclose(np.exp(stratum_log_probabilities(s, truth)), pi, rtol=1e-12)


def test_empirical_shares_converge_to_probabilities():
    truth = ParameterSet(CoefficientGrid(2, [0.2, -0.3, 0.5]))
    layout = LayoutSpec(D=2, events_per_duration=(0, 3000), baseline_rate=2.0)
    ds = simulate_dataset(layout, truth, 4)
    y = np.array([[u.y for u in s.units] for s in ds.strata]).sum(axis=0)
    _, pi = unit_probabilities(2, truth, 0, 2)
    se = np.sqrt(pi * (1 - pi) / y.sum())
    assert np.all(np.abs(y / y.sum() - pi) < 3 * se)


def test_zero_baseline_all_zero():
    ds = simulate_dataset(LayoutSpec(D=3, baseline_rate=0.0), _zero_truth(3), 0)
    assert all(u.y == 0 for u in ds.units())


def test_dataset_deterministic_by_seed():
    layout, truth = LayoutSpec(D=3), _zero_truth(3)
    assert simulate_dataset(layout, truth, 5) == simulate_dataset(layout, truth, 5)


def test_layout_counts_and_csv(tmp_path):
    assert LayoutSpec(D=3, n_events=10, decay=0.5).counts() == (10, 5, 2)
    p = tmp_path / "layout.csv"
    p.write_text("d,n_events\n1,4\n3,2\n")
    assert LayoutSpec.from_csv(p).counts() == (4, 0, 2)


def test_truth_dimension_mismatch():
    with pytest.raises(ValueError, match="D="):
        simulate_dataset(LayoutSpec(D=3), _zero_truth(2), 0)


# ---- removal --------------------------------------------------------------
def test_remove_durations():
    ds = simulate_dataset(LayoutSpec(D=14, n_events=3, decay=1.0), _zero_truth(14), 0)
    assert remove_durations(ds, ()) is ds
    out = remove_durations(ds, {4, 7, 11})
    assert not {s.d for s in out.strata} & {4, 7, 11}
    assert out.D == 14 and out.arrays.n_beta == 105
    with pytest.raises(ValueError):
        remove_durations(ds, range(1, 15))
    with pytest.raises(ValueError):
        remove_durations(ds, {15})


def test_edvcm_finite_for_removed_rows():
    ds = simulate_dataset(LayoutSpec(D=3, n_events=10, decay=1.0), _zero_truth(3), 0)
    est = fit_edvcm(remove_durations(ds, {2}), config=TINY)
    for t in (1, 2):
        assert np.all(np.isfinite(est[f"beta[2,{t}]"]))


# ---- metrics --------------------------------------------------------------
def test_metrics_exact_estimates():
    truth = np.array([0.5, -1.0])
    est = np.tile(truth, (4, 1))
    r = compute_metrics(est, est, est, truth)
    assert np.all(r.bias == 0) and np.all(r.rmse == 0) and np.all(r.coverage == 1)


def test_metrics_hand_case():
    r = compute_metrics([[0.9], [1.1]], [[0.0], [0.0]], [[0.5], [0.5]], [1.0])
    assert r.bias[0] == pytest.approx(0.0, abs=1e-12)
    assert r.rmse[0] == pytest.approx(0.1)
    assert r.coverage[0] == 0.0


def test_metrics_zero_truth_absolute_bias():
    r = compute_metrics([[0.1], [0.3]], [[-1], [-1]], [[1], [1]], [0.0])
    assert r.bias_is_absolute[0] and r.bias[0] == pytest.approx(0.2)
    assert r.rows()[1][5] == "abs_bias"


def test_metrics_rmse_identity():
    rng = np.random.default_rng(0)
    est = rng.normal(0.3, 0.2, size=(50, 4))
    truth = np.array([0.1, 0.2, 0.3, 0.4])
    r = compute_metrics(est, est - 1, est + 1, truth)
    np.testing.assert_allclose(r.rmse**2, r.abs_bias**2 + est.var(axis=0), rtol=1e-12)
    assert np.all((0 <= r.coverage) & (r.coverage <= 1))


def test_metrics_skip_missing():
    r = compute_metrics([[1.0], [np.nan]], [[0.0], [np.nan]], [[2.0], [np.nan]], [1.0])
    assert r.n_used[0] == 1 and r.coverage[0] == 1


# ---- comparators ----------------------------------------------------------
def test_independent_prior_only():
    ds = random_dataset(np.random.default_rng(0), D=2, n_strata=4, mean_count=0.0)
    est = fit_independent_normal(ds, SamplerConfig(n_chains=4, n_warmup=300, n_samples=3000, seed=1))
    b = est.draws.block("beta")
    np.testing.assert_allclose(b.std(axis=0), 1.0, rtol=0.10)
    assert abs(np.corrcoef(b[:, 0], b[:, 1])[0, 1]) < 0.05


def test_independent_prior_washes_out():
    truth = ParameterSet(CoefficientGrid(1, [0.4]))
    ds = simulate_dataset(LayoutSpec(D=1, events_per_duration=(2000,), baseline_rate=5.0), truth, 2)
    bayes = fit_independent_normal(ds, SamplerConfig(n_chains=2, n_warmup=200, n_samples=500, seed=0))
    freq = fit_frequentist_glm(ds, 1)
    assert abs(bayes.mean[0] - freq.mean[0]) < 0.02


def test_frequentist_glm_skips_absent_durations():
    ds = simulate_dataset(LayoutSpec(D=3, events_per_duration=(50, 0, 50), baseline_rate=3.0), _zero_truth(3), 0)
    est = fit_frequentist_glm(ds)
    assert np.isnan(est["beta[2,1]"][0]) and np.isfinite(est["beta[3,3]"][0])


# ---- study harness --------------------------------------------------------
def _tiny_protocol(**kw):
    base = dict(D=3, layout=LayoutSpec(D=3, n_events=8), n_sim=1, sampler=TINY, seed=3)
    base.update(kw)
    return StudyProtocol(**base)


def test_single_replicate_study_shapes():
    res = run_study(_tiny_protocol())
    for m in ("edvcm", "indep-normal", "freq-glm"):
        rep = res.report(m)
        assert rep.n_replicates == 1 and len(rep.names) == 6
    assert len(res.rows()) == 3 * 6 * 5


def test_study_deterministic(tmp_path):
    p = _tiny_protocol(n_sim=2, methods=("edvcm", "freq-glm"))
    run_study(p).write(tmp_path / "a")
    run_study(p, jobs=2).write(tmp_path / "b")
    for f in ("report.csv", "provenance.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_study_failures_recorded():
    # removing every duration fails data generation, not the study
    res = run_study(_tiny_protocol(removed_durations=(1, 2, 3), methods=("freq-glm",)))
    assert res.report("freq-glm").n_failed == 1 and res.failures


def test_paper_main_preset():
    p = resolve_protocol("paper-main")
    assert p == paper_main_protocol()
    assert p.D == 14 and p.noise_fractions == (0.25, 1.0) and p.n_sim == 5000
    assert set(p.methods) == {"edvcm", "indep-normal", "freq-glm"}


def test_protocol_round_trip_and_unknown_key(tmp_path):
    import json

    p = _tiny_protocol()
    assert StudyProtocol.from_dict(p.to_dict()) == p
    bad = p.to_dict() | {"colour": 1}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(ValueError, match="colour"):
        resolve_protocol(path)
    with pytest.raises(FileNotFoundError):
        resolve_protocol(tmp_path / "missing.json")
