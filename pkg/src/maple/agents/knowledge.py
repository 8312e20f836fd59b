"""Persistent knowledge: guidance cues, annotated action sequences and stored FSMs."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from ..actions import AtomicAction, action_from_dict, action_to_dict, describe
from ..fsm import AppFsm
from ..errors import SchemaError

KB_SCHEMA_VERSION = 1


def _fold(names: Iterable[str]) -> set[str]:
    return {n.strip().casefold() for n in names}


@dataclass(frozen=True)
class Cue:
    text: str
    apps: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"text": self.text, "apps": list(self.apps)}


@dataclass(frozen=True)
class ActionSequence:
    precondition: str
    actions: tuple[AtomicAction, ...]
    label: str
    apps: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"precondition": self.precondition, "label": self.label, "apps": list(self.apps),
                "actions": [action_to_dict(a) for a in self.actions]}

    @classmethod
    def from_dict(cls, d: dict) -> "ActionSequence":
        return cls(d.get("precondition", ""), tuple(action_from_dict(a) for a in d.get("actions", [])),
                   d.get("label", ""), tuple(d.get("apps", [])))


@dataclass
class KnowledgeBase:
    cues: list[Cue] = field(default_factory=list)
    sequences: list[ActionSequence] = field(default_factory=list)
    fsms: dict[str, AppFsm] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not (self.cues or self.sequences or self.fsms)

    def counts(self) -> str:
        return f"{len(self.cues)} cues, {len(self.sequences)} sequences, {len(self.fsms)} fsms"

    def select(self, apps: Iterable[str]) -> "KnowledgeBase":
        """Entries whose apps intersect ``apps``."""
        wanted = _fold(apps)
        return KnowledgeBase(
            [c for c in self.cues if _fold(c.apps) & wanted],
            [s for s in self.sequences if _fold(s.apps) & wanted],
            {k: v for k, v in self.fsms.items() if k.casefold() in wanted},
        )

    def beacons(self) -> list[str]:
        return [s.beacon for fsm in self.fsms.values() for s in fsm.states.values()]

    def render(self) -> str:
        """Prompt block; empty string when there is nothing to say."""
        lines = []
        if self.cues:
            lines.append("Guidance cues:")
            lines += [f"- {c.text}" for c in self.cues]
        if self.sequences:
            lines.append("Known action sequences:")
            for s in self.sequences:
                steps = "; ".join(describe(a) for a in s.actions)
                lines.append(f"- {s.label} (when: {s.precondition}): {steps}")
        return "\n".join(lines)

    def merge(self, delta: "KnowledgeBase") -> None:
        seen = {c.text for c in self.cues}
        for cue in delta.cues:
            if cue.text not in seen:
                self.cues.append(cue)
                seen.add(cue.text)
        for seq in delta.sequences:
            if seq not in self.sequences:
                self.sequences.append(seq)
        self.fsms.update(delta.fsms)

    def to_dict(self) -> dict:
        return {
            "version": KB_SCHEMA_VERSION,
            "cues": [c.to_dict() for c in self.cues],
            "sequences": [s.to_dict() for s in self.sequences],
            "fsms": {k: v.to_dict() for k, v in sorted(self.fsms.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeBase":
        if d.get("version") != KB_SCHEMA_VERSION:
            raise SchemaError("version", f"expected {KB_SCHEMA_VERSION}")
        return cls(
            [Cue(c["text"], tuple(c.get("apps", []))) for c in d.get("cues", [])],
            [ActionSequence.from_dict(s) for s in d.get("sequences", [])],
            {k: AppFsm.from_dict(v) for k, v in d.get("fsms", {}).items()},
        )


class KnowledgeStore:
    """One JSON document on disk. Writers are serialized; files are replaced atomically."""

    _locks: dict[str, threading.Lock] = {}
    _guard = threading.Lock()

    def __init__(self, path):
        self.path = Path(path)
        with self._guard:
            self._lock = self._locks.setdefault(str(self.path.resolve()), threading.Lock())

    def load(self) -> KnowledgeBase:
        if not self.path.exists():
            return KnowledgeBase()
        return KnowledgeBase.from_dict(json.loads(self.path.read_text(encoding="utf-8")))

    def _write(self, kb: KnowledgeBase) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".kb-", suffix=".json")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(kb.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, self.path)

    def merge(self, delta: KnowledgeBase) -> KnowledgeBase:
        with self._lock:
            kb = self.load()
            kb.merge(delta)
            self._write(kb)
            return kb

    def clear(self) -> None:
        with self._lock:
            self._write(KnowledgeBase())

    def digest(self) -> Optional[str]:
        if not self.path.exists():
            return None
        return hashlib.sha256(self.path.read_bytes()).hexdigest()
