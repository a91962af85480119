"""Command-line interface: ``edvcm match | fit | simulate``.

Exit codes: 0 success, 2 input error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import DatasetError
from .diagnostics import diagnostics
from .hmc import SamplerConfig, run_hmc
from .io import VERSION, header_line, read_dataset_csv, write_dataset_csv
from .matching import MatchConfig, MatchInputError, match_events, read_exposures_csv, read_outcomes_csv, write_match_report
from .priors import resolve_priors
from .summaries import (
    classify_direction,
    cumulative_rr_no_covariates,
    cumulative_rr_with_covariates,
    exposed_covariates,
    posterior_mean_ci,
    rate_ratio,
)

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
RHAT_THRESHOLD = 1.05

log = logging.getLogger("edvcm")


class InputError(Exception):
    pass


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file not found: {path}")
    return p


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path: Path, header: str, columns: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# ----------------------------------------------------------------------
def cmd_match(args) -> int:
    exp_path = _require_file(args.exposures)
    out_path = _require_file(args.outcomes)
    cfg_dict = {}
    if args.config:
        cfg_path = _require_file(args.config)
        try:
            cfg_dict = json.loads(cfg_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{cfg_path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    config = MatchConfig.from_dict(cfg_dict)
    events = read_exposures_csv(exp_path)
    panel = read_outcomes_csv(out_path)
    result = match_events(events, panel, config)

    header = header_line(
        {"command": "match", "config": config.to_dict(), "exposures": _file_digest(exp_path),
         "outcomes": _file_digest(out_path)}
    )
    dest = Path(args.out)
    dest.parent.mkdir(parents=True, exist_ok=True)
    report_path = dest.with_name(dest.stem + "_match_report.csv")
    write_match_report(result.report, report_path, header=header)
    if result.dataset is None:
        raise InputError(f"no event could be matched; see {report_path}")
    write_dataset_csv(result.dataset, dest, header=header)
    print(
        f"matched {len(result.matched)} events into {result.dataset.n_units} units; "
        f"{len(result.report)} excluded (see {report_path})"
    )
    return EXIT_OK


# ----------------------------------------------------------------------
def _cell_fields(name: str) -> tuple[str, str, str]:
    block, _, rest = name.partition("[")
    if not rest:
        return name, "", ""
    parts = rest.rstrip("]").split(",")
    if len(parts) == 2:
        return block, parts[0], parts[1]
    return block, "", parts[0]


def _summary_rows(draws, level):
    rows = []
    for name in draws.names:
        block, d, idx = _cell_fields(name)
        x = draws[name]
        s = posterior_mean_ci(x, level)
        if block in ("beta", "theta", "zeta"):
            rr, rs = rate_ratio(x, level)
            rows.append((name, d, idx, s.mean, rs.mean, rs.lower, rs.upper, classify_direction(rs)))
        else:
            rows.append((name, "", "", s.mean, None, s.lower, s.upper, ""))
    return rows


def _cumulative_rows(draws, dataset, level):
    beta = draws.block("beta")
    zeta = draws.block("zeta")
    rows = []
    for d in range(1, dataset.D + 1):
        case = "no_covariates"
        if dataset.covariate_dim:
            try:
                t, Z = exposed_covariates(dataset, d)
                cum = cumulative_rr_with_covariates(beta, zeta, d, t=t, Z=Z)
                case = "with_covariates"
            except ValueError:
                cum = cumulative_rr_no_covariates(beta, d)
        else:
            cum = cumulative_rr_no_covariates(beta, d)
        s = posterior_mean_ci(cum, level)
        rows.append((d, s.mean, s.lower, s.upper, classify_direction(s), case))
    return rows


def _diagnostic_rows(draws, diag):
    rows = []
    for name, r, e in zip(diag.names, diag.rhat, diag.ess_bulk):
        rows.append((name, "rhat", r))
        rows.append((name, "ess_bulk", e))
        rows.append((name, "rhat_flag", int(not r <= RHAT_THRESHOLD)))
    rows.append(("sampler", "max_rhat", diag.max_rhat))
    rows.append(("sampler", "n_rhat_flagged", len(diag.flagged(RHAT_THRESHOLD))))
    rows.append(("sampler", "divergences", int(draws.divergent.sum())))
    rows.append(("sampler", "divergence_fraction", draws.divergence_fraction))
    rows.append(("sampler", "mean_accept_prob", float(draws.accept_prob.mean())))
    for c in range(draws.n_chains):
        rows.append((f"chain[{c}]", "step_size", float(draws.step_size[c])))
        rows.append((f"chain[{c}]", "divergences", int(draws.divergent[c].sum())))
    for k, w in enumerate(draws.warnings):
        rows.append(("sampler", f"warning_{k + 1}", w))
    return rows


def cmd_fit(args) -> int:
    data_path = _require_file(args.data)
    try:
        dataset = read_dataset_csv(data_path)
    except DatasetError as exc:
        raise InputError(str(exc)) from None
    try:
        priors = resolve_priors(args.priors)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"priors: {exc}") from None
    try:
        config = SamplerConfig(
            n_chains=args.chains, n_warmup=args.warmup, n_samples=args.samples, seed=args.seed
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    cfg = {
        "command": "fit",
        "data": _file_digest(data_path),
        "priors": priors.to_dict(),
        "sampler": dataclasses.asdict(config),
        "prior": args.prior,
        "level": args.level,
    }
    header = header_line(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    try:
        draws = run_hmc(dataset, priors, config, prior=args.prior, jobs=args.jobs)
        diag = diagnostics(draws)
        summary = _summary_rows(draws, args.level)
        cumulative = _cumulative_rows(draws, dataset, args.level)
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"error: sampling failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    draws.to_csv(out / "draws.csv", header=header)
    _write_rows(out / "summary.csv", header,
                ["parameter", "d", "t_or_l", "mean", "rr_mean", "ci_lo", "ci_hi", "direction"], summary)
    _write_rows(out / "cumulative.csv", header, ["d", "mean", "ci_lo", "ci_hi", "direction", "case"], cumulative)
    _write_rows(out / "diagnostics.csv", header, ["item", "statistic", "value"], _diagnostic_rows(draws, diag))
    flagged = diag.flagged(RHAT_THRESHOLD)
    if flagged:
        print(f"warning: R-hat above {RHAT_THRESHOLD} for {len(flagged)} parameters: "
              + ", ".join(flagged[:10]), file=sys.stderr)
    for w in draws.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote draws, summary, cumulative and diagnostics to {out}")
    return EXIT_OK


# ----------------------------------------------------------------------
def cmd_simulate(args) -> int:
    from .simulation.study import StudyProtocol, resolve_protocol, run_study

    try:
        protocol = resolve_protocol(args.protocol)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"protocol: {exc}") from None
    overrides = {}
    if args.nsim is not None:
        overrides["n_sim"] = args.nsim
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.methods:
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    try:
        protocol = dataclasses.replace(protocol, **overrides) if overrides else protocol
    except ValueError as exc:
        raise InputError(f"protocol: {exc}") from None
    if args.jobs < 1:
        raise InputError("--jobs must be positive")
    try:
        result = run_study(protocol, jobs=args.jobs)
    except Exception as exc:  # noqa: BLE001 - any engine failure maps to exit 3
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for f in result.failures:
        print(f"warning: replicate {f['replicate']} ({f['scenario']}, {f['method']}) failed: {f['error']}",
              file=sys.stderr)
    result.write(args.out)
    print(f"wrote report.csv and provenance.json to {args.out} ({len(result.failures)} failed fits)")
    return EXIT_OK


# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edvcm", description="Exposure-duration varying coefficient models.")
    p.add_argument("--version", action="version", version=f"edvcm {VERSION}")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("match", help="build an analytic dataset from exposure and outcome panels")
    m.add_argument("--exposures", required=True)
    m.add_argument("--outcomes", required=True)
    m.add_argument("--config", help="JSON match configuration")
    m.add_argument("--out", required=True, help="dataset CSV to write")
    m.set_defaults(func=cmd_match)

    f = sub.add_parser("fit", help="sample the posterior for a dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--priors", default="simulation", help="simulation, application or a JSON file")
    f.add_argument("--chains", type=int, default=4)
    f.add_argument("--warmup", type=int, default=1000)
    f.add_argument("--samples", type=int, default=1000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--prior", choices=["gp", "independent"], default="gp")
    f.add_argument("--level", type=float, default=0.95)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run a replicated simulation study")
    s.add_argument("--protocol", required=True, help="JSON protocol or preset name (paper-main)")
    s.add_argument("--nsim", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--methods", help="comma-separated subset of edvcm,indep-normal,freq-glm")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, MatchInputError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
