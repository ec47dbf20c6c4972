"""Scenario results and their on-disk layout.

A run directory holds

* ``result.json``: scenario name, summary, checks and per-point records,
* ``sweep.csv``: one row per record, columns in the order of ``columns``,
* ``spectra/*.csv``: exported spectra in the DSP CSV format,
* ``provenance.json``: config, config hash, seed and library versions.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..dsp import Spectrum


def _clean(value):
    """JSON-safe copy: numpy scalars become floats, non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


@dataclass
class Check:
    """A pass/fail comparison of a measured quantity against an expectation."""

    name: str
    value: Optional[float]
    expected: Optional[float]
    tolerance: Optional[float]
    passed: bool
    note: str = ""

    @classmethod
    def relative(cls, name, value, expected, tolerance, note=""):
        ok = value is not None and math.isfinite(value) and abs(value / expected - 1) <= tolerance
        return cls(name, value, expected, tolerance, bool(ok), note)

    @classmethod
    def below(cls, name, value, bound, note=""):
        ok = value is not None and math.isfinite(value) and value < bound
        return cls(name, value, bound, None, bool(ok), note)

    @classmethod
    def above(cls, name, value, bound, note=""):
        ok = value is not None and math.isfinite(value) and value > bound
        return cls(name, value, bound, None, bool(ok), note)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        tol = f" tol={self.tolerance:g}" if self.tolerance is not None else ""
        val = "-" if self.value is None else f"{self.value:.4g}"
        exp = "-" if self.expected is None else f"{self.expected:.4g}"
        return f"{tag} {self.name}: {val} (expected {exp}{tol}) {self.note}".rstrip()


@dataclass
class ScenarioResult:
    scenario: str
    records: list
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    spectra: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def columns(self) -> list:
        cols: list = []
        for rec in self.records:
            for key in rec:
                if key not in cols:
                    cols.append(key)
        return cols

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return _clean({
            "scenario": self.scenario,
            "summary": self.summary,
            "checks": [c.__dict__ for c in self.checks],
            "columns": self.columns,
            "records": self.records,
        })

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        cols = self.columns
        with (out / "sweep.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for rec in self.records:
                row = []
                for c in cols:
                    v = _clean(rec.get(c))
                    row.append("" if v is None else (repr(v) if isinstance(v, float) else v))
                w.writerow(row)
        if self.spectra:
            sdir = out / "spectra"
            sdir.mkdir(exist_ok=True)
            for name, spec in self.spectra.items():
                spec.to_csv(sdir / f"{name}.csv")
        (out / "provenance.json").write_text(json.dumps(_clean(self.provenance), indent=2) + "\n")
        return out


def provenance(cfg, argv=None) -> dict:
    import numba
    import scipy

    return {
        "scenario": cfg.scenario,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "package_version": __version__,
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "argv": list(argv) if argv is not None else None,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def spectrum_from_arrays(omega, density, resolution, n_averages) -> Spectrum:
    return Spectrum(np.asarray(omega), np.asarray(density), resolution, int(n_averages),
                    n_averages < 4)
