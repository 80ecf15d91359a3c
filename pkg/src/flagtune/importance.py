"""One-hot flag importance.

Each flag is measured enabled on its own on top of the baseline arguments.
Its raw contribution is the speedup it buys over the baseline,
``max(t_baseline / t_flag - 1, 0)``, and contributions are normalized so the
whole catalog sums to 100 percent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import BaselineFailure, HarnessError
from .flagspace import FlagCatalog
from .harness import CompilerProfile, MeasurementProtocol, time_arguments

ArgumentTimer = Callable[[Sequence[str]], float]


@dataclass
class ImportanceReport:
    rows: list[tuple[str, float]]
    baseline_fitness: float
    top_k: int = 5
    degenerate: bool = False
    # flag name -> one-hot runtime, None when it failed
    runtimes: dict = field(default_factory=dict)
    annotations: dict = field(default_factory=dict)

    @property
    def residual_row(self) -> Optional[tuple[str, float]]:
        if len(self.rows) <= self.top_k:
            return None
        return render_rows(self, self.top_k)[-1]

    def to_dict(self) -> dict:
        return {
            "rows": [{"flag": name, "importance": pct} for name, pct in self.rows],
            "baseline_fitness": self.baseline_fitness,
            "top_k": self.top_k,
            "degenerate": self.degenerate,
            "runtimes": self.runtimes,
            "annotations": self.annotations,
            "display_rows": [{"flag": n, "importance": p} for n, p in render_rows(self, self.top_k)],
        }


def importance_from_timer(
    catalog: FlagCatalog,
    timer: ArgumentTimer,
    baseline_arguments: Sequence[str] = (),
    top_k: int = 5,
) -> ImportanceReport:
    """``timer(args)`` returns seconds for an argument list or raises HarnessError."""
    if catalog.genome_length() == 0:
        raise ValueError("catalog has no flags")
    baseline_arguments = list(baseline_arguments)
    try:
        t0 = timer(baseline_arguments)
    except HarnessError as exc:
        raise BaselineFailure(f"baseline {baseline_arguments} failed: {exc}") from exc

    contributions, runtimes, notes = [], {}, {}
    for spec in catalog.flags:
        try:
            t = timer(baseline_arguments + [spec.on_form])
        except HarnessError as exc:
            runtimes[spec.name] = None
            notes[spec.name] = f"{exc.status}: {exc}"
            contributions.append(0.0)
            continue
        runtimes[spec.name] = t
        contributions.append(max(t0 / t - 1.0, 0.0) if t > 0 else 0.0)

    total = math.fsum(contributions)
    if total > 0:
        percents = [100.0 * c / total for c in contributions]
    else:
        percents = [0.0] * len(contributions)
    order = sorted(range(len(percents)), key=lambda i: -percents[i])
    rows = [(catalog.flags[i].name, percents[i]) for i in order]
    return ImportanceReport(rows, t0, top_k, degenerate=total == 0, runtimes=runtimes, annotations=notes)


def one_hot_importance(
    catalog: FlagCatalog,
    profile: CompilerProfile,
    protocol: MeasurementProtocol,
    baseline_arguments: Sequence[str] = (),
    *,
    workload_n: Optional[int] = None,
    top_k: int = 5,
    scratch_dir=None,
) -> ImportanceReport:
    def timer(args):
        return time_arguments(args, profile, protocol, workload_n, scratch_dir)[0]

    return importance_from_timer(catalog, timer, baseline_arguments, top_k)


def render_rows(report: ImportanceReport, top_k: int) -> list[tuple[str, float]]:
    """Top ``top_k`` rows plus an "(N - top_k) other flags" residual row."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    named = list(report.rows[:top_k])
    rest = len(report.rows) - len(named)
    if rest > 0:
        if report.degenerate:
            residual = 0.0
        else:
            residual = 100.0 - math.fsum(p for _, p in named)
        named.append((f"{rest} other flags", residual))
    return named


def render_importance(report: ImportanceReport, top_k: int) -> tuple[str, list[tuple[str, float]]]:
    rows = render_rows(report, top_k)
    width = max(len("Flags"), *(len(name) for name, _ in rows))
    lines = [f"{'Flags':<{width}}  Importance", "-" * (width + 12)]
    for name, pct in rows:
        lines.append(f"{name:<{width}}  {pct:9.2f}%")
    if report.degenerate:
        lines.append("(degenerate: no flag sped up the baseline)")
    return "\n".join(lines), rows
