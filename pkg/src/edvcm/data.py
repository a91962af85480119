"""Unit records, strata and the validated analytic dataset."""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .grid import grid_index, lag_index, n_cells


class DatasetError(ValueError):
    """Structural problem in unit records."""


class Role(str, enum.Enum):
    EXPOSURE = "exposure"
    LAG = "lag"
    CONTROL_EXPOSURE = "control_exposure"
    CONTROL_LAG = "control_lag"

    @property
    def uses_day_index(self) -> bool:
        return self in (Role.EXPOSURE, Role.CONTROL_EXPOSURE)


@dataclass(frozen=True)
class ExposureUnit:
    """One area-day inside a stratum.

    Exposure days carry ``t`` (day within the event), lag days carry ``l``
    (days after the event ends); matched control days carry the index of the
    day they are matched to. ``A`` is 1 only for exposure days and the lag
    indicator is 1 only for lag days.
    """

    unit_id: str
    stratum_id: str
    d: int
    role: Role
    t: int | None = None
    l: int | None = None
    y: int = 0
    p: float = 1.0
    z: tuple[float, ...] = ()

    @property
    def A(self) -> int:
        return int(self.role is Role.EXPOSURE)

    @property
    def lag_indicator(self) -> int:
        return int(self.role is Role.LAG)


@dataclass(frozen=True)
class Stratum:
    stratum_id: str
    d: int
    units: tuple[ExposureUnit, ...]

    @property
    def W(self) -> int:
        return sum(u.y for u in self.units)

    @property
    def zero_total(self) -> bool:
        return self.W == 0

    def __len__(self) -> int:
        return len(self.units)


@dataclass(frozen=True)
class UnitArrays:
    """Flat arrays over the units of strata with a positive total.

    Units are grouped by stratum; ``starts`` holds the offset of each
    stratum. ``beta_idx``/``theta_idx`` point one past the end of the
    coefficient vector for units that do not load on that block.
    """

    y: np.ndarray
    log_p: np.ndarray
    Z: np.ndarray
    beta_idx: np.ndarray
    theta_idx: np.ndarray
    stratum: np.ndarray
    starts: np.ndarray
    W: np.ndarray
    n_beta: int
    n_theta: int


@dataclass(frozen=True)
class AnalyticDataset:
    strata: tuple[Stratum, ...]
    D: int
    L_max: int
    covariate_dim: int
    covariate_names: tuple[str, ...] = field(default=(), compare=False)

    @property
    def n_units(self) -> int:
        return sum(len(s) for s in self.strata)

    def units(self) -> Iterable[ExposureUnit]:
        for s in self.strata:
            yield from s.units

    @property
    def zero_total_strata(self) -> tuple[str, ...]:
        return tuple(s.stratum_id for s in self.strata if s.zero_total)

    @property
    def durations(self) -> tuple[int, ...]:
        return tuple(sorted({s.d for s in self.strata}))

    def with_strata(self, strata: Iterable[Stratum]) -> AnalyticDataset:
        """Same grid dimensions, different strata."""
        return AnalyticDataset(
            tuple(strata), self.D, self.L_max, self.covariate_dim, self.covariate_names
        )

    def restrict_to_duration(self, d: int) -> AnalyticDataset:
        return self.with_strata(s for s in self.strata if s.d == d)

    @cached_property
    def arrays(self) -> UnitArrays:
        n_beta = n_cells(self.D)
        n_theta = self.D * self.L_max
        active = [s for s in self.strata if not s.zero_total]
        units = [u for s in active for u in s.units]
        n = len(units)
        y = np.fromiter((u.y for u in units), float, n)
        log_p = np.log(np.fromiter((u.p for u in units), float, n))
        Z = np.array([u.z for u in units], dtype=float).reshape(n, self.covariate_dim)
        beta_idx = np.full(n, n_beta, dtype=np.intp)
        theta_idx = np.full(n, n_theta, dtype=np.intp)
        for i, u in enumerate(units):
            if u.role is Role.EXPOSURE:
                beta_idx[i] = grid_index(u.d, u.t, self.D)
            elif u.role is Role.LAG:
                theta_idx[i] = lag_index(u.d, u.l, self.D, self.L_max)
        sizes = np.array([len(s) for s in active], dtype=np.intp)
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp) if len(active) else np.zeros(0, np.intp)
        stratum = np.repeat(np.arange(len(active)), sizes)
        W = np.array([s.W for s in active], dtype=float)
        for a in (y, log_p, Z, beta_idx, theta_idx, stratum, starts, W):
            a.setflags(write=False)
        return UnitArrays(y, log_p, Z, beta_idx, theta_idx, stratum, starts, W, n_beta, n_theta)


_UNIT_KEYS = {"unit_id", "stratum_id", "d", "role", "t", "l", "A", "L", "y", "Y", "p", "P", "z", "Z"}


def _is_missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v)) or v == ""


def _as_int(v, what: str, unit_id) -> int | None:
    if _is_missing(v):
        return None
    f = float(v)
    if not f.is_integer():
        raise DatasetError(f"unit {unit_id}: {what}={v!r} is not an integer")
    return int(f)


def unit_from_mapping(rec: Mapping) -> ExposureUnit:
    """Build a unit from a loose record.

    The role is taken from ``role`` if present, otherwise inferred from the
    ``A``/``L`` indicators together with which of ``t``/``l`` is set.
    """
    unknown = set(rec) - _UNIT_KEYS
    if unknown:
        raise DatasetError(f"unknown unit fields {sorted(unknown)}")
    uid = rec.get("unit_id")
    if _is_missing(uid):
        raise DatasetError("unit record without unit_id")
    uid = str(uid)
    t = _as_int(rec.get("t"), "t", uid)
    l = _as_int(rec.get("l"), "l", uid)
    if "role" in rec and not _is_missing(rec["role"]):
        try:
            role = Role(rec["role"])
        except ValueError:
            raise DatasetError(f"unit {uid}: unknown role {rec['role']!r}") from None
    else:
        a = _as_int(rec.get("A", 0), "A", uid) or 0
        lag = _as_int(rec.get("L", 0), "L", uid) or 0
        if a not in (0, 1) or lag not in (0, 1):
            raise DatasetError(f"unit {uid}: A and L must be 0/1")
        if a and lag:
            raise DatasetError(f"unit {uid}: A=1 and L=1 together")
        if t is not None and l is None:
            if lag:
                raise DatasetError(f"unit {uid}: lag indicator set on a day-indexed unit")
            role = Role.EXPOSURE if a else Role.CONTROL_EXPOSURE
        elif l is not None and t is None:
            if a:
                raise DatasetError(f"unit {uid}: exposure indicator set on a lag-indexed unit")
            role = Role.LAG if lag else Role.CONTROL_LAG
        else:
            role = Role.EXPOSURE  # let validation report the t/l problem
    y = rec.get("Y", rec.get("y", 0))
    p = rec.get("P", rec.get("p", 1.0))
    z = rec.get("Z", rec.get("z", ()))
    return ExposureUnit(
        unit_id=uid,
        stratum_id=str(rec.get("stratum_id")),
        d=_as_int(rec.get("d"), "d", uid),
        role=role,
        t=t,
        l=l,
        y=_as_int(y, "Y", uid),
        p=float(p),
        z=tuple(float(v) for v in np.atleast_1d(np.asarray(z, dtype=float))),
    )


def _check_unit(u: ExposureUnit) -> None:
    uid = u.unit_id
    if u.t is not None and u.l is not None:
        raise DatasetError(f"unit {uid}: both t={u.t} and l={u.l} defined")
    if u.d is None or u.d < 1:
        raise DatasetError(f"unit {uid}: duration d={u.d} must be >= 1")
    if u.role.uses_day_index:
        if u.t is None:
            raise DatasetError(f"unit {uid}: role {u.role.value} needs a day index t")
        if not (1 <= u.t <= u.d):
            raise DatasetError(f"unit {uid}: day index t={u.t} outside 1..d={u.d}")
    else:
        if u.l is None:
            raise DatasetError(f"unit {uid}: role {u.role.value} needs a lag index l")
        if u.l < 1:
            raise DatasetError(f"unit {uid}: lag index l={u.l} must be >= 1")
    if u.y is None or u.y < 0:
        raise DatasetError(f"unit {uid}: count Y={u.y} must be >= 0")
    if not (u.p > 0 and math.isfinite(u.p)):
        raise DatasetError(f"unit {uid}: person-time P={u.p} must be positive")
    if not all(math.isfinite(v) for v in u.z):
        raise DatasetError(f"unit {uid}: non-finite covariate")


def validate_dataset(
    units: Iterable[ExposureUnit | Mapping] | AnalyticDataset,
    *,
    D: int | None = None,
    L_max: int | None = None,
    covariate_names: Iterable[str] | None = None,
) -> AnalyticDataset:
    """Check unit records and group them into strata.

    ``D`` and ``L_max`` default to the largest duration / lag index seen;
    larger values may be given so that the coefficient grid covers
    durations absent from the data. Strata are kept in order of first
    appearance. Strata whose outcome total is zero are kept and reported by
    :attr:`AnalyticDataset.zero_total_strata`; they carry no likelihood.

    Raises
    ------
    DatasetError
        On any structural violation, naming the offending unit or stratum.
    """
    if isinstance(units, AnalyticDataset):
        src = units
        D = src.D if D is None else D
        L_max = src.L_max if L_max is None else L_max
        if covariate_names is None and src.covariate_names:
            covariate_names = src.covariate_names
        units = list(src.units())

    parsed = [u if isinstance(u, ExposureUnit) else unit_from_mapping(u) for u in units]
    if not parsed:
        raise DatasetError("no units")

    seen_ids: set[str] = set()
    groups: dict[str, list[ExposureUnit]] = {}
    cov_dim = None
    for u in parsed:
        _check_unit(u)
        if u.unit_id in seen_ids:
            raise DatasetError(f"duplicate unit_id {u.unit_id}")
        seen_ids.add(u.unit_id)
        if cov_dim is None:
            cov_dim = len(u.z)
        elif len(u.z) != cov_dim:
            raise DatasetError(
                f"unit {u.unit_id}: {len(u.z)} covariates, expected {cov_dim}"
            )
        groups.setdefault(u.stratum_id, []).append(u)

    strata = []
    for sid, members in groups.items():
        ds = {u.d for u in members}
        if len(ds) != 1:
            raise DatasetError(f"stratum {sid}: units disagree on duration {sorted(ds)}")
        exposed_t = [u.t for u in members if u.role is Role.EXPOSURE]
        if len(exposed_t) != len(set(exposed_t)):
            raise DatasetError(f"stratum {sid}: repeated exposure day index")
        lag_l = [u.l for u in members if u.role is Role.LAG]
        if len(lag_l) != len(set(lag_l)):
            raise DatasetError(f"stratum {sid}: repeated lag day index")
        strata.append(Stratum(sid, ds.pop(), tuple(members)))

    max_d = max(s.d for s in strata)
    max_l = max((u.l for u in parsed if u.l is not None), default=0)
    if D is None:
        D = max_d
    elif D < max_d:
        raise DatasetError(f"D={D} smaller than observed duration {max_d}")
    if L_max is None:
        L_max = max_l
    elif L_max < max_l:
        raise DatasetError(f"L_max={L_max} smaller than observed lag index {max_l}")

    names = tuple(covariate_names) if covariate_names is not None else tuple(
        f"cov_{k + 1}" for k in range(cov_dim)
    )
    if len(names) != cov_dim:
        raise DatasetError(f"{len(names)} covariate names for {cov_dim} covariates")
    return AnalyticDataset(tuple(strata), D, L_max, cov_dim, names)
