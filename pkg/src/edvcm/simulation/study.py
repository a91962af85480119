"""Replicated simulation studies comparing the estimators."""

from __future__ import annotations

import csv
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..hmc import SamplerConfig
from ..io import VERSION, config_hash, header_line
from ..likelihood import ParameterSet
from .datagen import LayoutSpec, remove_durations, simulate_dataset
from .fitters import METHODS, coefficient_names, fit_edvcm, fit_frequentist_glm, fit_independent_normal
from .metrics import SimulationReport, compute_metrics
from .surface import SurfaceSpec, generate_lag_surface, generate_true_surface

log = logging.getLogger(__name__)

REPORT_COLUMNS = ["scenario", "method", "parameter", "d", "t", "metric", "value"]


def _strict(cls, data: dict, what: str):
    if not isinstance(data, dict):
        raise ValueError(f"{what} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown {what} keys: {', '.join(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class StudyProtocol:
    """Everything that determines a study's output, apart from ``jobs``.

    One scenario is run per entry of ``noise_fractions``; the truth surface
    for each is drawn once from the master seed and held fixed over
    replicates.
    """

    D: int = 6
    noise_fractions: tuple[float, ...] = (0.25,)
    n_tps_basis: int = 5
    surface_sd: float = 0.1
    layout: LayoutSpec = field(default_factory=lambda: LayoutSpec(D=6))
    methods: tuple[str, ...] = METHODS
    n_sim: int = 100
    seed: int = 0
    sampler: SamplerConfig = field(
        default_factory=lambda: SamplerConfig(n_chains=2, n_warmup=400, n_samples=400)
    )
    priors: str = "simulation"
    independent_sd: float = 1.0
    removed_durations: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "noise_fractions", tuple(float(x) for x in self.noise_fractions))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "removed_durations", tuple(int(d) for d in self.removed_durations))
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if not self.methods:
            raise ValueError("no methods selected")
        if self.n_sim < 1:
            raise ValueError("n_sim must be positive")
        if self.layout.D != self.D:
            raise ValueError(f"layout has D={self.layout.D}, protocol has D={self.D}")
        if any(x < 0 for x in self.noise_fractions) or not self.noise_fractions:
            raise ValueError("noise_fractions must be non-empty and non-negative")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["noise_fractions"] = list(self.noise_fractions)
        out["methods"] = list(self.methods)
        out["removed_durations"] = list(self.removed_durations)
        lay = out["layout"]
        if lay["events_per_duration"] is not None:
            lay["events_per_duration"] = list(lay["events_per_duration"])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> StudyProtocol:
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown protocol keys: {', '.join(unknown)}")
        D = int(data.get("D", 6))
        if "layout" in data:
            lay = dict(data["layout"])
            lay.setdefault("D", D)
            data["layout"] = _strict(LayoutSpec, lay, "layout")
        else:
            data["layout"] = LayoutSpec(D=D)
        if "sampler" in data:
            data["sampler"] = _strict(SamplerConfig, data["sampler"], "sampler")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> StudyProtocol:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def paper_main_protocol(n_sim: int = 5000, seed: int = 0) -> StudyProtocol:
    """Full-size main study: D=14, smooth and noisy surfaces, all methods."""
    return StudyProtocol(
        D=14,
        noise_fractions=(0.25, 1.0),
        layout=LayoutSpec(D=14),
        methods=METHODS,
        n_sim=n_sim,
        seed=seed,
        sampler=SamplerConfig(n_chains=4, n_warmup=1000, n_samples=1000),
    )


PROTOCOL_PRESETS = {"paper-main": paper_main_protocol}


def resolve_protocol(name_or_path: str | Path) -> StudyProtocol:
    key = str(name_or_path)
    if key in PROTOCOL_PRESETS:
        return PROTOCOL_PRESETS[key]()
    path = Path(key)
    if not path.exists():
        raise FileNotFoundError(f"protocol file not found: {key}")
    return StudyProtocol.from_json(path)


# ----------------------------------------------------------------------
def scenario_label(noise_fraction: float) -> str:
    return f"noise={noise_fraction:g}"


def truth_for_scenario(protocol: StudyProtocol, k: int) -> ParameterSet:
    """Fixed truth of scenario ``k``, seeded from the master seed."""
    ss = np.random.SeedSequence(protocol.seed, spawn_key=(0, k))
    beta_seed, theta_seed = (int(s) for s in ss.generate_state(2, dtype=np.uint32))
    spec = SurfaceSpec(
        D=protocol.D,
        noise_fraction=protocol.noise_fractions[k],
        n_tps_basis=protocol.n_tps_basis,
        seed=beta_seed,
        surface_sd=protocol.surface_sd,
    )
    beta = generate_true_surface(spec)
    theta = generate_lag_surface(spec, protocol.layout.n_lags, seed=theta_seed) if protocol.layout.n_lags else None
    return ParameterSet(beta, theta)


def replicate_seeds(master: int, scenario: int, rep: int) -> tuple[int, int]:
    """Data and sampler seeds of one replicate; independent of scheduling."""
    ss = np.random.SeedSequence(master, spawn_key=(1, scenario, rep))
    data_seed, sampler_seed = (int(s) for s in ss.generate_state(2, dtype=np.uint32))
    return data_seed, sampler_seed


def run_replicate(protocol: StudyProtocol, truth: ParameterSet, scenario: int, rep: int) -> dict:
    """Simulate one dataset and fit every method to it.

    Returns ``{method: (mean, lower, upper) | error string}``.
    """
    data_seed, sampler_seed = replicate_seeds(protocol.seed, scenario, rep)
    out: dict[str, object] = {}
    try:
        data = simulate_dataset(protocol.layout, truth, data_seed)
        if protocol.removed_durations:
            data = remove_durations(data, protocol.removed_durations)
    except Exception as exc:  # recorded, not fatal
        return {m: f"data generation: {exc!r}" for m in protocol.methods}
    cfg = replace(protocol.sampler, seed=sampler_seed)
    for m in protocol.methods:
        try:
            if m == "edvcm":
                est = fit_edvcm(data, protocol.priors, cfg)
            elif m == "indep-normal":
                est = fit_independent_normal(data, cfg, prior_sd=protocol.independent_sd, priors=protocol.priors)
            else:
                est = fit_frequentist_glm(data)
            out[m] = (est.mean, est.lower, est.upper)
        except Exception as exc:
            log.debug("replicate %d method %s failed:\n%s", rep, m, traceback.format_exc())
            out[m] = f"{type(exc).__name__}: {exc}"
    return out


def _replicate_job(args):
    protocol, truth, scenario, rep = args
    return run_replicate(protocol, truth, scenario, rep)


@dataclass
class StudyResult:
    protocol: StudyProtocol
    truths: list[ParameterSet]
    reports: dict[tuple[str, str], SimulationReport]
    failures: list[dict]
    estimates: dict[tuple[str, str], tuple[np.ndarray, np.ndarray, np.ndarray]]

    def report(self, method: str, scenario: int | str = 0) -> SimulationReport:
        label = scenario if isinstance(scenario, str) else scenario_label(self.protocol.noise_fractions[scenario])
        return self.reports[(label, method)]

    def rows(self) -> list[tuple]:
        out = []
        for (label, _), rep in self.reports.items():
            out.extend(rep.rows(label))
        return out

    def provenance(self) -> dict:
        p = self.protocol.to_dict()
        return {
            "engine": f"edvcm {VERSION}",
            "config_hash": config_hash(p),
            "protocol": p,
            "seed_scheme": "SeedSequence(seed, spawn_key=(1, scenario, replicate)) -> (data_seed, sampler_seed); "
            "truth: SeedSequence(seed, spawn_key=(0, scenario))",
            "truths": {
                scenario_label(nf): {
                    "beta": [float(v) for v in t.beta.values],
                    "theta": [float(v) for v in t.theta.values] if t.theta is not None else [],
                }
                for nf, t in zip(self.protocol.noise_fractions, self.truths)
            },
            "n_failed": len(self.failures),
            "failures": self.failures,
        }

    def write(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "report.csv", "w", newline="", encoding="utf-8") as fh:
            fh.write(header_line(self.protocol.to_dict()) + "\n")
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for row in self.rows():
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        prov = self.provenance()
        prov["header"] = header_line(self.protocol.to_dict())
        (out_dir / "provenance.json").write_text(json.dumps(prov, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_study(protocol: StudyProtocol, *, jobs: int = 1) -> StudyResult:
    """Run every scenario and replicate; output does not depend on ``jobs``."""
    names = coefficient_names(protocol.D, protocol.layout.n_lags)
    truths = [truth_for_scenario(protocol, k) for k in range(len(protocol.noise_fractions))]
    tasks = [(protocol, truths[k], k, r) for k in range(len(truths)) for r in range(protocol.n_sim)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_replicate_job, tasks, chunksize=1))
    else:
        results = [_replicate_job(t) for t in tasks]

    reports, estimates, failures = {}, {}, []
    for k, nf in enumerate(protocol.noise_fractions):
        label = scenario_label(nf)
        truth = truths[k]
        tvec = np.concatenate([truth.beta.values, truth.theta.values if truth.theta is not None else []])
        for m in protocol.methods:
            n = len(names)
            est = np.full((protocol.n_sim, n), np.nan)
            lo, hi = est.copy(), est.copy()
            n_failed = 0
            for r in range(protocol.n_sim):
                res = results[k * protocol.n_sim + r][m]
                if isinstance(res, str):
                    n_failed += 1
                    failures.append({"scenario": label, "replicate": r, "method": m, "error": res})
                    continue
                est[r], lo[r], hi[r] = res
            estimates[(label, m)] = (est, lo, hi)
            reports[(label, m)] = compute_metrics(est, lo, hi, tvec, method=m, names=names, n_failed=n_failed)
    return StudyResult(protocol, truths, reports, failures, estimates)
