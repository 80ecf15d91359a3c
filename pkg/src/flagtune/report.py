"""Run report document and the convergence/comparison text emitters."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence, Union

from . import __version__
from .ga import GAResult


@dataclass
class RunReport:
    tool_version: str
    catalog_digest: str
    config: dict
    stopping: dict
    protocol: dict
    best_flags: list
    best_arguments: list
    best_genome: str
    best_fitness: float
    history: list
    stop_reason: str
    baselines: list = field(default_factory=list)
    external: list = field(default_factory=list)
    wall_clock: float = 0.0
    evaluations: int = 0
    clock: str = "monotonic"
    fitness_source: str = "compiler"
    workload_n: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        return cls(**doc)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path: Union[str, Path]):
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def history_rows(result: GAResult) -> list[dict]:
    return [asdict(entry) for entry in result.history]


def emit_convergence(report: RunReport) -> str:
    """Tab-separated (tuning seconds, best runtime so far), one row per generation."""
    if not report.history:
        raise ValueError("report has no history")
    lines = ["wall_clock_s\tbest_runtime_s"]
    best = float("inf")
    for entry in report.history:
        best = min(best, entry["best_fitness"])
        lines.append(f"{entry['timestamp']:.6f}\t{best:.9g}")
    return "\n".join(lines) + "\n"


def comparison_table(rows: Sequence[dict]) -> str:
    """Plot-ready columns: configuration, N, runtime, speedup vs the slowest configuration."""
    lines = ["configuration\tN\truntime_s\tspeedup"]
    for row in rows:
        n = "-" if row["workload_n"] is None else str(row["workload_n"])
        if row["runtime"] is None:
            lines.append(f"{row['configuration']}\t{n}\tFAILED\t-")
        else:
            lines.append(f"{row['configuration']}\t{n}\t{row['runtime']:.6f}\t{row['speedup']:.4f}")
    return "\n".join(lines) + "\n"


def add_speedups(rows: list[dict]) -> list[dict]:
    """Fill ``speedup`` = slowest runtime at the same N / this runtime."""
    slowest: dict = {}
    for row in rows:
        if row["runtime"] is not None:
            n = row["workload_n"]
            slowest[n] = max(slowest.get(n, 0.0), row["runtime"])
    for row in rows:
        if row["runtime"] is None or row["runtime"] <= 0:
            row["speedup"] = None
        else:
            row["speedup"] = slowest[row["workload_n"]] / row["runtime"]
    return rows


def new_report(**kwargs) -> RunReport:
    return RunReport(tool_version=__version__, **kwargs)
