"""Stratum layouts and multinomial data generation."""

from __future__ import annotations

import csv
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data import AnalyticDataset, ExposureUnit, Role, Stratum
from ..likelihood import ParameterSet


@dataclass(frozen=True)
class LayoutSpec:
    """Synthetic stratum layout.

    Events per duration are either given explicitly or built from
    ``n_events`` for duration 1 scaled by ``decay ** (d - 1)`` (at least one
    event each). ``decay=1`` gives the same count for every duration.
    Every unit gets person-time ``person_time``; stratum totals are drawn
    with mean ``baseline_rate`` times the stratum's total person-time.
    """

    D: int
    n_events: int = 30
    decay: float = 0.85
    events_per_duration: tuple[int, ...] | None = None
    n_controls: int = 2
    person_time: float = 1.0
    baseline_rate: float = 1.0
    n_lags: int = 0

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("D must be at least 1")
        if self.events_per_duration is not None:
            counts = tuple(int(c) for c in self.events_per_duration)
            if len(counts) != self.D or any(c < 0 for c in counts):
                raise ValueError(f"events_per_duration needs {self.D} non-negative counts")
            object.__setattr__(self, "events_per_duration", counts)
        elif self.n_events < 1 or not self.decay > 0:
            raise ValueError("n_events and decay must be positive")
        if self.n_controls < 1:
            raise ValueError("n_controls must be positive")
        if not self.person_time > 0:
            raise ValueError("person_time must be positive")
        if not self.baseline_rate >= 0:
            raise ValueError("baseline_rate must be non-negative")
        if self.n_lags < 0:
            raise ValueError("n_lags must be non-negative")

    def counts(self) -> tuple[int, ...]:
        if self.events_per_duration is not None:
            return self.events_per_duration
        return tuple(max(1, round(self.n_events * self.decay ** (d - 1))) for d in range(1, self.D + 1))

    @classmethod
    def from_csv(cls, path: str | Path, **kw) -> LayoutSpec:
        """Read ``d,n_events`` rows; durations not listed get zero events."""
        rows: dict[int, int] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            lines = (ln for ln in fh if not ln.startswith("#"))
            for lineno, rec in enumerate(csv.DictReader(lines), start=2):
                try:
                    rows[int(rec["d"])] = int(rec["n_events"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad layout row ({exc})") from None
        if not rows:
            raise ValueError(f"{path}: empty layout")
        D = kw.pop("D", max(rows))
        return cls(D=D, events_per_duration=tuple(rows.get(d, 0) for d in range(1, D + 1)), **kw)


def _stratum_template(d: int, n_lags: int, n_controls: int) -> list[tuple[Role, int | None, int | None]]:
    exposed = [(Role.EXPOSURE, t, None) for t in range(1, d + 1)]
    exposed += [(Role.LAG, None, l) for l in range(1, n_lags + 1)]
    controls = [(Role.CONTROL_EXPOSURE, t, None) for t in range(1, d + 1)]
    controls += [(Role.CONTROL_LAG, None, l) for l in range(1, n_lags + 1)]
    return exposed + controls * n_controls


def unit_probabilities(d: int, truth: ParameterSet, n_lags: int, n_controls: int, person_time=1.0):
    """Multinomial probabilities of the units of a generated stratum, in template order."""
    template = _stratum_template(d, n_lags, n_controls)
    eta = np.full(len(template), np.log(person_time))
    for i, (role, t, l) in enumerate(template):
        if role is Role.EXPOSURE:
            eta[i] += truth.beta[d, t]
        elif role is Role.LAG:
            eta[i] += truth.theta[d, l]
    eta -= eta.max()
    p = np.exp(eta)
    return template, p / p.sum()


def simulate_dataset(layout: LayoutSpec, truth: ParameterSet, seed) -> AnalyticDataset:
    """Draw one dataset: Poisson stratum totals, multinomial allocation.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`.
    No covariates are generated.
    """
    if truth.beta.D != layout.D:
        raise ValueError(f"truth has D={truth.beta.D}, layout has D={layout.D}")
    if layout.n_lags:
        if truth.theta is None or (truth.theta.D, truth.theta.L) != (layout.D, layout.n_lags):
            raise ValueError("truth lag grid does not match the layout")
    rng = np.random.default_rng(seed)
    strata = []
    for d, n_ev in zip(range(1, layout.D + 1), layout.counts()):
        if n_ev == 0:
            continue
        template, pi = unit_probabilities(d, truth, layout.n_lags, layout.n_controls, layout.person_time)
        mean_total = layout.baseline_rate * layout.person_time * len(template)
        W = rng.poisson(mean_total, size=n_ev)
        Y = rng.multinomial(W, pi)
        for e in range(n_ev):
            sid = f"d{d}e{e + 1}"
            units = tuple(
                ExposureUnit(f"{sid}u{i + 1}", sid, d, role, t, l, int(Y[e, i]), layout.person_time)
                for i, (role, t, l) in enumerate(template)
            )
            strata.append(Stratum(sid, d, units))
    return AnalyticDataset(tuple(strata), layout.D, layout.n_lags, 0)


def remove_durations(dataset: AnalyticDataset, durations: Iterable[int]) -> AnalyticDataset:
    """Drop every stratum whose duration is in ``durations``; the grid is unchanged."""
    drop = set(int(d) for d in durations)
    bad = sorted(d for d in drop if not 1 <= d <= dataset.D)
    if bad:
        raise ValueError(f"durations {bad} outside 1..{dataset.D}")
    if not drop:
        return dataset
    kept = [s for s in dataset.strata if s.d not in drop]
    if not kept:
        raise ValueError("removing these durations leaves no strata")
    return dataset.with_strata(kept)
