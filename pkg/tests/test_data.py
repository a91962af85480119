import numpy as np
import pytest

from builders import make_stratum, random_dataset
from edvcm.data import DatasetError, ExposureUnit, Role, unit_from_mapping, validate_dataset
from edvcm.likelihood import ParameterSet, conditional_log_likelihood


def _rec(uid, sid="s", d=1, t=None, l=None, A=0, L=0, Y=0, P=1.0, **kw):
    return dict(unit_id=uid, stratum_id=sid, d=d, t=t, l=l, A=A, L=L, Y=Y, P=P, **kw)


def test_minimal_valid_dataset():
    ds = validate_dataset([_rec("a", t=1, A=1, Y=2), _rec("b", t=1, Y=1), _rec("c", t=1, Y=0)])
    assert ds.D == 1 and len(ds.strata) == 1
    assert ds.strata[0].W == 3
    roles = [u.role for u in ds.units()]
    assert roles == [Role.EXPOSURE, Role.CONTROL_EXPOSURE, Role.CONTROL_EXPOSURE]


def test_day_index_beyond_duration_names_unit():
    with pytest.raises(DatasetError, match="bad_unit"):
        validate_dataset([_rec("ok", d=3, t=1, A=1), _rec("bad_unit", d=3, t=5, A=1)])


def test_both_indices_rejected():
    with pytest.raises(DatasetError, match="both t=1 and l=2"):
        validate_dataset([ExposureUnit("u", "s", 2, Role.EXPOSURE, t=1, l=2)])


@pytest.mark.parametrize("p", [0.0, -1.0])
def test_nonpositive_person_time(p):
    with pytest.raises(DatasetError, match="person-time"):
        validate_dataset([_rec("u", t=1, A=1, P=p)])


def test_negative_count_and_duplicate_ids():
    with pytest.raises(DatasetError, match="count"):
        validate_dataset([ExposureUnit("u", "s", 1, Role.EXPOSURE, t=1, y=-1)])
    with pytest.raises(DatasetError, match="duplicate"):
        validate_dataset([_rec("u", t=1, A=1), _rec("u", t=1)])


def test_stratum_duration_must_agree():
    with pytest.raises(DatasetError, match="disagree"):
        validate_dataset([_rec("a", d=1, t=1, A=1), _rec("b", d=2, t=1)])


def test_repeated_exposure_day_rejected():
    with pytest.raises(DatasetError, match="repeated exposure day"):
        validate_dataset([_rec("a", d=2, t=1, A=1), _rec("b", d=2, t=1, A=1)])


def test_covariate_length_checked():
    with pytest.raises(DatasetError, match="covariates"):
        validate_dataset([_rec("a", t=1, A=1, Z=[1.0]), _rec("b", t=1, Z=[1.0, 2.0])])


def test_role_inferred_from_indicators():
    assert unit_from_mapping(_rec("u", d=2, l=1, L=1)).role is Role.LAG
    assert unit_from_mapping(_rec("u", d=2, l=1)).role is Role.CONTROL_LAG
    with pytest.raises(DatasetError, match="A=1 and L=1"):
        unit_from_mapping(_rec("u", t=1, A=1, L=1))
    with pytest.raises(DatasetError, match="unknown unit fields"):
        unit_from_mapping(_rec("u", t=1, colour="red"))


def test_lag_unit_carries_no_exposure():
    u = unit_from_mapping(_rec("u", d=2, l=1, L=1))
    assert u.A == 0 and u.lag_indicator == 1


def test_zero_total_stratum_flagged_and_contributes_nothing():
    s0 = make_stratum("zero", 1, [0], [[0], [0]])
    s1 = make_stratum("live", 1, [3], [[1], [2]])
    ds = validate_dataset(list(s0.units) + list(s1.units))
    assert ds.zero_total_strata == ("zero",)
    only_live = validate_dataset(list(s1.units))
    params = ParameterSet.from_vectors(ds, [0.4])
    assert conditional_log_likelihood(ds, params) == conditional_log_likelihood(only_live, params)


def test_validation_is_idempotent():
    ds = random_dataset(np.random.default_rng(0), D=3, n_strata=6, n_cov=2, L=2)
    once = validate_dataset(ds)
    assert validate_dataset(once) == once


def test_declared_grid_may_exceed_observed():
    ds = validate_dataset([_rec("a", d=2, t=1, A=1), _rec("b", d=2, t=2, A=1)], D=4)
    assert ds.D == 4 and ds.arrays.n_beta == 10
    with pytest.raises(DatasetError, match="smaller than observed"):
        validate_dataset([_rec("a", d=2, t=1, A=1)], D=1)


def test_restrict_to_duration_keeps_grid():
    ds = random_dataset(np.random.default_rng(1), D=3, n_strata=9)
    sub = ds.restrict_to_duration(2)
    assert sub.D == 3 and {s.d for s in sub.strata} == {2}
