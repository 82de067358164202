"""CSV and JSON report writers.

Reports are assembled in memory and written only after a run finished, each
file through a temporary name and an atomic rename, so an aborted run never
leaves partial outputs behind. Floats are written with ``repr`` precision and
no timestamps are recorded: the same config always yields identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, sanitize

COLUMNS = ("t", "s", "statistic", "mc", "se", "oracle", "z", "n", "R", "seed")


def versions() -> dict:
    return {
        "emproc": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _cell(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([_cell(row.get(c, "")) for c in COLUMNS])
    return buf.getvalue()


@dataclass
class Report:
    """Everything one subcommand produced for one config."""

    config: ExperimentConfig
    subcommand: str
    rows: list = field(default_factory=list)
    body: dict = field(default_factory=dict)
    passed: bool = True

    @property
    def digest(self) -> str:
        return self.config.digest()

    def stem(self) -> str:
        return f"{self.config.name}-{self.subcommand}-{self.digest}"

    def json_text(self) -> str:
        doc = {
            "config": self.config.dump(),
            "config_digest": self.digest,
            "subcommand": self.subcommand,
            "passed": bool(self.passed),
            "versions": versions(),
            **self.body,
        }
        return json.dumps(sanitize(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def files(self, formats) -> dict:
        out = {}
        if "csv" in formats:
            out[self.stem() + ".csv"] = csv_text(self.rows)
        if "json" in formats:
            out[self.stem() + ".json"] = self.json_text()
        return out


def write_reports(reports, directory, formats) -> list[Path]:
    """Render every report first, then write them all; returns the paths."""
    rendered = {}
    for rep in reports:
        rendered.update(rep.files(formats))
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(rendered):
        path = root / name
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(rendered[name])
        os.replace(tmp, path)
        paths.append(path)
    return paths
