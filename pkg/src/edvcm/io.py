"""CSV serialization of analytic datasets and output-file headers."""

from __future__ import annotations

import csv
import hashlib
import json
import re
from pathlib import Path

from .data import AnalyticDataset, DatasetError, unit_from_mapping, validate_dataset

VERSION = "0.1.0"

BASE_COLUMNS = ["unit_id", "stratum_id", "d", "t", "l", "A", "L", "Y", "P"]
_GRID = re.compile(r"^#\s*grid\s+D=(\d+)\s+L_max=(\d+)\s*$")


def config_hash(config) -> str:
    """Short stable hash of a JSON-serializable configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def header_line(config) -> str:
    return f"# edvcm {VERSION} config={config_hash(config)}"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_dataset_csv(dataset: AnalyticDataset, path: str | Path, *, header: str | None = None) -> None:
    """One row per unit; the grid size goes in a comment line.

    Unnamed covariates are written as ``cov_1..cov_k``.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        fh.write(f"# grid D={dataset.D} L_max={dataset.L_max}\n")
        w = csv.writer(fh)
        names = list(dataset.covariate_names) or [f"cov_{k + 1}" for k in range(dataset.covariate_dim)]
        w.writerow(BASE_COLUMNS + names)
        for u in dataset.units():
            w.writerow(
                [u.unit_id, u.stratum_id, u.d, _fmt(u.t), _fmt(u.l), u.A, u.lag_indicator, u.y, _fmt(float(u.p))]
                + [_fmt(float(v)) for v in u.z]
            )


def read_dataset_csv(path: str | Path) -> AnalyticDataset:
    """Read and validate a dataset written by :func:`write_dataset_csv`.

    Columns beyond the base set are covariates, in file order. Lines
    starting with ``#`` are comments. Errors name the file and line.
    """
    path = Path(path)
    D = L_max = None
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = []
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                m = _GRID.match(line.strip())
                if m:
                    D, L_max = int(m.group(1)), int(m.group(2))
                continue
            if line.strip():
                rows.append((lineno, line))
    if not rows:
        raise DatasetError(f"{path}: no header row")
    reader = csv.reader([ln for _, ln in rows])
    header = next(reader)
    missing = [c for c in BASE_COLUMNS if c not in header]
    if missing:
        raise DatasetError(f"{path}:{rows[0][0]}: missing columns {missing}")
    cov_names = [c for c in header if c not in BASE_COLUMNS]
    for (lineno, _), values in zip(rows[1:], reader):
        if len(values) != len(header):
            raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(values)}")
        rec = dict(zip(header, values))
        try:
            z = [float(rec.pop(c)) for c in cov_names]
            rec["Z"] = z
            records.append(unit_from_mapping(rec))
        except (DatasetError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return validate_dataset(records, D=D, L_max=L_max, covariate_names=cov_names)
