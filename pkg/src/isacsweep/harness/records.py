"""Curve records and their CSV / manifest serialisation."""
from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..units import lin_to_db

HEADER = ("experiment", "sweep_key", "sweep_value", "metric", "linear", "db", "stderr",
          "method", "dl_mask", "gamma_req_db", "seed")


@dataclass(frozen=True)
class CurveRecord:
    experiment: str
    sweep_key: str
    sweep_value: float
    metric: str
    linear: float
    stderr: float = math.nan
    method: str = ""
    dl_mask: str = ""
    gamma_req_db: float = math.nan
    seed: int = 0

    @property
    def db(self) -> float:
        return float(lin_to_db(self.linear)) if self.linear >= 0 else math.nan

    def row(self) -> list:
        return [self.experiment, self.sweep_key, _num(self.sweep_value), self.metric, _num(self.linear),
                _num(self.db), _num(self.stderr), self.method, self.dl_mask, _num(self.gamma_req_db),
                str(self.seed)]


def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def sort_key(rec: CurveRecord):
    return (rec.experiment, rec.method, rec.dl_mask, _nan_last(rec.gamma_req_db), rec.sweep_key,
            rec.sweep_value, rec.metric)


def _nan_last(x):
    return (1, 0.0) if math.isnan(x) else (0, x)


def write_csv(records, path: str | Path) -> Path:
    """Write records sorted by a fixed key so output never depends on evaluation order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for rec in sorted(records, key=sort_key):
            w.writerow(rec.row())
    return path


def read_csv(path: str | Path) -> list:
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))


def write_manifest(out_dir: str | Path, cfg, command: str, extra: dict | None = None) -> Path:
    """Resolved configuration plus code and library versions."""
    from .. import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.txt").write_text(cfg.to_text())
    manifest = {
        "command": command,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": cfg.seed,
        "config": cfg.to_text().splitlines()[1:],
        **(extra or {}),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
