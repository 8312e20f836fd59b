"""Benchmark task documents: one JSON file per task."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from ..errors import SchemaError


@dataclass(frozen=True)
class Rubric:
    text: str
    predicate: Optional[str] = None


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    instruction: str
    type: str = ""
    apps: tuple[str, ...] = ()
    rubrics: tuple[Rubric, ...] = ()
    human_reference_operations: tuple[str, ...] = ()
    judge_rubric: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "instruction": self.instruction,
            "type": self.type,
            "apps": list(self.apps),
            "rubrics": [{"text": r.text, "predicate": r.predicate} if r.predicate else r.text
                        for r in self.rubrics],
            "human_reference_operations": list(self.human_reference_operations),
            **({"judge_rubric": self.judge_rubric} if self.judge_rubric else {}),
        }


def _text(doc: dict, key: str) -> str:
    value = doc.get(key)
    if not isinstance(value, str) or not value.strip():
        raise SchemaError(key, "missing or empty")
    return value


def _strings(doc: dict, key: str) -> tuple[str, ...]:
    value = doc.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaError(key, "expected a list of strings")
    return tuple(value)


def _rubric(raw, i: int) -> Rubric:
    if isinstance(raw, str):
        return Rubric(raw)
    if isinstance(raw, dict) and isinstance(raw.get("text"), str):
        pred = raw.get("predicate")
        if pred is not None and not isinstance(pred, str):
            raise SchemaError(f"rubrics[{i}].predicate", "expected a string")
        return Rubric(raw["text"], pred or None)
    raise SchemaError(f"rubrics[{i}]", "expected a string or {text, predicate}")


def load_task(document: Union[dict, str, Path]) -> TaskSpec:
    if isinstance(document, (str, Path)):
        document = json.loads(Path(document).read_text(encoding="utf-8"))
    if not isinstance(document, dict):
        raise SchemaError("", "task document must be an object")
    rubrics = document.get("rubrics", [])
    if not isinstance(rubrics, list):
        raise SchemaError("rubrics", "expected a list")
    judge = document.get("judge_rubric")
    return TaskSpec(
        task_id=_text(document, "task_id"),
        instruction=_text(document, "instruction"),
        type=document.get("type", ""),
        apps=_strings(document, "apps"),
        rubrics=tuple(_rubric(r, i) for i, r in enumerate(rubrics)),
        human_reference_operations=_strings(document, "human_reference_operations"),
        judge_rubric=judge if isinstance(judge, str) and judge.strip() else None,
    )


def load_suite(path: Union[str, Path]) -> list[TaskSpec]:
    """Tasks from ``<path>/tasks/*.json`` (or ``<path>/*.json``), ordered by task id."""
    root = Path(path)
    if not root.is_dir():
        raise SchemaError(str(root), "suite directory not found")
    folder = root / "tasks" if (root / "tasks").is_dir() else root
    specs = [load_task(p) for p in sorted(folder.glob("*.json"))]
    if not specs:
        raise SchemaError(str(folder), "no task files")
    ids = [s.task_id for s in specs]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise SchemaError("task_id", f"duplicate ids {dupes}")
    return sorted(specs, key=lambda s: s.task_id)
