"""Plain data passed between the agents and written to traces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..actions import AtomicAction, action_from_dict, action_to_dict
from ..verdict import Verdict

PLAN_SOURCES = ("fresh", "revised", "recovery-fallback")


@dataclass(frozen=True)
class PlanItem:
    subtask: str
    rationale: str = ""

    def __post_init__(self):
        if not self.subtask.strip():
            raise ValueError("plan items need subtask text")


@dataclass(frozen=True)
class Plan:
    items: tuple[PlanItem, ...]
    source: str = "fresh"
    intent: str = ""

    def __post_init__(self):
        if not self.items:
            raise ValueError("a plan needs at least one item")
        if self.source not in PLAN_SOURCES:
            raise ValueError(f"unknown plan source {self.source!r}")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def subtasks(self) -> list[str]:
        return [i.subtask for i in self.items]

    def render(self) -> str:
        return "\n".join(f"{n}. {i.subtask} | {i.rationale}" if i.rationale else f"{n}. {i.subtask}"
                         for n, i in enumerate(self.items, 1))

    def to_dict(self) -> dict:
        return {"source": self.source, "intent": self.intent,
                "items": [{"subtask": i.subtask, "rationale": i.rationale} for i in self.items]}


@dataclass(frozen=True)
class RecoveryPlan:
    thought: str
    steps: tuple[str, ...]
    current_subtask: str
    target: str
    goal: str = ""

    def __post_init__(self):
        if not self.steps:
            raise ValueError("recovery plan has no steps")
        if self.current_subtask not in self.steps:
            raise ValueError("current_subtask must be one of the steps")

    def to_dict(self) -> dict:
        return {"goal": self.goal, "thought": self.thought, "plan": list(self.steps),
                "current_subtask": self.current_subtask, "target": self.target}


@dataclass(frozen=True)
class StepRecord:
    index: int
    phase: str  # main | recovery | retry
    subtask: str
    action: AtomicAction
    verdict: Verdict
    state_before: str
    state_after: str
    perception_before: str
    perception_after: str
    shot_before: str
    shot_after: str
    time: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "phase": self.phase,
            "subtask": self.subtask,
            "action": action_to_dict(self.action),
            "verdict": self.verdict.to_dict(),
            "state_before": self.state_before,
            "state_after": self.state_after,
            "perception_before": self.perception_before,
            "perception_after": self.perception_after,
            "shot_before": self.shot_before,
            "shot_after": self.shot_after,
            "time": self.time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(d["index"], d["phase"], d["subtask"], action_from_dict(d["action"]),
                   Verdict.from_dict(d["verdict"]), d["state_before"], d["state_after"],
                   d["perception_before"], d["perception_after"], d["shot_before"],
                   d["shot_after"], d["time"])


@dataclass
class RecoveryRound:
    opened_at_step: int
    subtask: str
    reason: str
    target: Optional[str]
    target_verified: bool = False
    steps: list[str] = field(default_factory=list)
    recovered: bool = False

    def to_dict(self) -> dict:
        return {"opened_at_step": self.opened_at_step, "subtask": self.subtask,
                "reason": self.reason, "target": self.target,
                "target_verified": self.target_verified, "steps": list(self.steps),
                "recovered": self.recovered}


STATUSES = ("success", "terminated", "step-budget-exhausted")


@dataclass
class Trace:
    task_id: str
    steps: list[StepRecord] = field(default_factory=list)
    plans: list[Plan] = field(default_factory=list)
    recoveries: list[RecoveryRound] = field(default_factory=list)
    replans: int = 0
    status: str = ""
    reason: str = ""

    def append(self, record: StepRecord) -> None:
        if self.steps and record.index <= self.steps[-1].index:
            raise ValueError("step indices must increase")
        self.steps.append(record)

    @property
    def errors(self) -> list[tuple[int, Verdict]]:
        return [(s.index, s.verdict) for s in self.steps if not s.verdict.ok]

    def summary(self) -> dict:
        return {
            "task_id": self.task_id,
            "status": self.status,
            "reason": self.reason,
            "steps": len(self.steps),
            "replans": self.replans,
            "plans": [p.to_dict() for p in self.plans],
            "recoveries": [r.to_dict() for r in self.recoveries],
        }
