"""The five headline metrics and their report formats."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

METRICS = ("SS", "AA", "TR", "SR", "RS")


@dataclass(frozen=True)
class Ratio:
    num: int
    den: int

    def __post_init__(self):
        if self.den <= 0 or not 0 <= self.num <= self.den:
            raise ValueError(f"bad ratio {self.num}/{self.den}")

    @property
    def percent(self) -> float:
        return round(100 * self.num / self.den, 2)

    def __str__(self) -> str:
        return f"{self.num}/{self.den} ({self.percent:.2f}%)"

    def to_dict(self) -> dict:
        return {"num": self.num, "den": self.den, "percent": self.percent}


def ratio(num: int, den: int) -> Optional[Ratio]:
    return Ratio(num, den) if den > 0 else None


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    status: str
    rubrics: tuple[int, int] = (0, 0)
    actions: tuple[int, int] = (0, 0)
    recoveries: tuple[int, int] = (0, 0)

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "status": self.status, "rubrics": list(self.rubrics),
                "actions": list(self.actions), "recoveries": list(self.recoveries)}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskResult":
        return cls(d["task_id"], d["status"], tuple(d.get("rubrics", (0, 0))),
                   tuple(d.get("actions", (0, 0))), tuple(d.get("recoveries", (0, 0))))


def _metrics(results: Sequence[TaskResult]) -> dict[str, Optional[Ratio]]:
    n = len(results)
    return {
        "SS": ratio(sum(r.rubrics[0] for r in results), sum(r.rubrics[1] for r in results)),
        "AA": ratio(sum(r.actions[0] for r in results), sum(r.actions[1] for r in results)),
        "TR": ratio(sum(r.status == "terminated" for r in results), n),
        "SR": ratio(sum(r.status == "success" for r in results), n),
        "RS": ratio(sum(r.recoveries[0] for r in results), sum(r.recoveries[1] for r in results)),
    }


@dataclass
class MetricsReport:
    aggregate: dict[str, Optional[Ratio]]
    per_task: dict[str, dict[str, Optional[Ratio]]] = field(default_factory=dict)

    def percent(self, metric: str) -> Optional[float]:
        r = self.aggregate.get(metric)
        return r.percent if r else None

    def to_dict(self) -> dict:
        def dump(ms):
            return {k: v.to_dict() for k, v in ms.items() if v is not None}
        return {"aggregate": dump(self.aggregate),
                "per_task": {t: dump(ms) for t, ms in self.per_task.items()}}

    def to_text(self) -> str:
        lines = [f"{'task':<28}" + "".join(f"{m:>10}" for m in METRICS)]
        rows = list(self.per_task.items()) + [("ALL", self.aggregate)]
        for name, ms in rows:
            cells = "".join(f"{ms[m].percent:>10.2f}" if ms.get(m) else f"{'-':>10}" for m in METRICS)
            lines.append(f"{name:<28}{cells}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task", "metric", "num", "den", "percent"])
        for name, ms in list(self.per_task.items()) + [("ALL", self.aggregate)]:
            for m in METRICS:
                if ms.get(m):
                    w.writerow([name, m, ms[m].num, ms[m].den, f"{ms[m].percent:.2f}"])
        return buf.getvalue()


def compute_metrics(results: Sequence[TaskResult]) -> MetricsReport:
    if not results:
        raise ValueError("compute_metrics needs at least one task record")
    return MetricsReport(_metrics(results), {r.task_id: _metrics([r]) for r in results})


def load_results(path: Union[str, Path]) -> list[TaskResult]:
    """Grader-filled results JSON: a list of TaskResult documents (live runs)."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    items = doc["results"] if isinstance(doc, dict) else doc
    return [TaskResult.from_dict(d) for d in items]
