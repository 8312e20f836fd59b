from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Outcome(str, Enum):
    SUCCESS = "Success"
    NO_CHANGE = "NoChange"
    FAIL = "Fail"


@dataclass(frozen=True)
class Verdict:
    """Reflection output for one executed action."""

    outcome: Outcome
    reason: str = ""

    def __post_init__(self):
        object.__setattr__(self, "outcome", Outcome(self.outcome))
        if self.outcome is Outcome.SUCCESS and self.reason:
            raise ValueError("a Success verdict carries no reason")
        if self.outcome is not Outcome.SUCCESS and not self.reason.strip():
            raise ValueError(f"{self.outcome.value} verdict requires a reason")

    @classmethod
    def success(cls) -> "Verdict":
        return cls(Outcome.SUCCESS)

    @classmethod
    def no_change(cls, reason: str) -> "Verdict":
        return cls(Outcome.NO_CHANGE, reason)

    @classmethod
    def fail(cls, reason: str) -> "Verdict":
        return cls(Outcome.FAIL, reason)

    @property
    def ok(self) -> bool:
        return self.outcome is Outcome.SUCCESS

    def to_dict(self) -> dict:
        return {"outcome": self.outcome.value, "reason": self.reason}

    @classmethod
    def from_dict(cls, data: dict) -> "Verdict":
        return cls(Outcome(data["outcome"]), data.get("reason", ""))
