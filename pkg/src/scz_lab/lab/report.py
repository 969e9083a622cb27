"""Run reports: one record per check, JSON round-trip and tidy CSV plot data.

CSV columns (stable): ``scenario, check, series, x, y``. Each row is one
observation of a plotted series; ``x`` is the abscissa (radius, ladder
index, probe count, ...) and ``y`` the measured value.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

CSV_COLUMNS = ("scenario", "check", "series", "x", "y")


def jsonable(obj):
    """Plain JSON types; non-finite floats become the strings ``"inf"``, ``"-inf"``, ``"nan"``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


@dataclass
class Record:
    name: str
    anchor: str
    passed: bool
    constants: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    runtime: float = 0.0
    error: str | None = None
    series: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


@dataclass
class Report:
    scenario: str
    config: dict
    records: list
    tolerance_scale: float = 1.0
    plot_data: str | None = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def pass_vector(self) -> list:
        return [r.passed for r in self.records]

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "passed": self.passed, "tolerance_scale": self.tolerance_scale,
                "config": jsonable(self.config), "plot_data": self.plot_data,
                "records": [r.to_dict() for r in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        recs = [Record(**r) for r in data["records"]]
        return cls(data["scenario"], data["config"], recs, data.get("tolerance_scale", 1.0), data.get("plot_data"))

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))

    def csv_rows(self):
        for rec in self.records:
            for series, points in rec.series.items():
                for x, y in points:
                    yield {"scenario": self.scenario, "check": rec.name, "series": series, "x": x, "y": y}

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.scenario}.csv"
        self.plot_data = csv_path.name
        with csv_path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            writer.writerows(self.csv_rows())
        json_path = out / f"{self.scenario}.json"
        json_path.write_text(self.to_json() + "\n")
        return json_path, csv_path
