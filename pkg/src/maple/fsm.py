"""Per-app UI state machines built incrementally while a task runs.

States are keyed by beacon: a short screen label such as ``"Search Page of
Maps"``. Two observations with the same canonical beacon in the same app are
the same state, whatever their free-text descriptions say.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .actions import AtomicAction, action_from_dict, action_to_dict
from .errors import AppMismatch, EmptyKey, UnknownState, UnsupportedFormat
from .verdict import Outcome, Verdict

FSM_SCHEMA_VERSION = 1

# Home screen, app drawer and other system UI live in their own machine.
SYSTEM_APP = "System Operation"

_WS = re.compile(r"\s+")


def canonical_beacon(text: str) -> str:
    """Trim and collapse whitespace; display casing is preserved."""
    return _WS.sub(" ", text or "").strip()


def beacon_key(text: str) -> str:
    return canonical_beacon(text).casefold()


def state_id(app: str, beacon: str) -> str:
    app_key, b_key = beacon_key(app), beacon_key(beacon)
    if not app_key or not b_key:
        raise EmptyKey(f"empty app or beacon: app={app!r} beacon={beacon!r}")
    return hashlib.md5(f"{app_key}\x1f{b_key}".encode("utf-8")).hexdigest()


@dataclass
class UiState:
    app: str
    beacon: str
    description: str = ""
    predicted_next: str = ""
    precondition: str = ""
    postcondition: str = ""
    verified: bool = False
    first_seen_step: int = 0
    last_seen_step: int = 0
    id: str = ""

    def __post_init__(self):
        self.beacon = canonical_beacon(self.beacon)
        self.app = canonical_beacon(self.app)
        self.id = state_id(self.app, self.beacon)
        if self.last_seen_step < self.first_seen_step:
            self.last_seen_step = self.first_seen_step
        if self.first_seen_step < 0:
            raise ValueError("step indices are non-negative")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "app": self.app,
            "beacon": self.beacon,
            "description": self.description,
            "predicted_next": self.predicted_next,
            "precondition": self.precondition,
            "postcondition": self.postcondition,
            "verified": self.verified,
            "first_seen_step": self.first_seen_step,
            "last_seen_step": self.last_seen_step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UiState":
        node = cls(
            app=data["app"],
            beacon=data["beacon"],
            description=data.get("description", ""),
            predicted_next=data.get("predicted_next", ""),
            precondition=data.get("precondition", ""),
            postcondition=data.get("postcondition", ""),
            verified=bool(data.get("verified", False)),
            first_seen_step=int(data.get("first_seen_step", 0)),
            last_seen_step=int(data.get("last_seen_step", 0)),
        )
        if "id" in data and data["id"] != node.id:
            raise ValueError(f"state id {data['id']} does not match its app/beacon")
        return node


@dataclass(frozen=True)
class Transition:
    src: str
    action: AtomicAction
    dst: str
    pre_next: str = ""
    post_current: str = ""
    step: int = 0

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.src, self.action.canonical(), self.dst)

    def to_dict(self) -> dict:
        return {
            "from": self.src,
            "action": action_to_dict(self.action),
            "to": self.dst,
            "pre_next": self.pre_next,
            "post_current": self.post_current,
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Transition":
        return cls(
            src=data["from"],
            action=action_from_dict(data["action"]),
            dst=data["to"],
            pre_next=data.get("pre_next", ""),
            post_current=data.get("post_current", ""),
            step=int(data.get("step", 0)),
        )


@dataclass
class AppFsm:
    app: str
    states: dict[str, UiState] = field(default_factory=dict)
    transitions: list[Transition] = field(default_factory=list)
    initial: Optional[str] = None
    current_goal: Optional[str] = None
    beacon_index: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.app = canonical_beacon(self.app)
        if not self.app:
            raise EmptyKey("app name is empty")

    def __contains__(self, sid: str) -> bool:
        return sid in self.states

    def __len__(self) -> int:
        return len(self.states)

    def get(self, sid: str) -> UiState:
        try:
            return self.states[sid]
        except KeyError:
            raise UnknownState(sid) from None

    def by_beacon(self, beacon: str) -> Optional[UiState]:
        sid = self.beacon_index.get(beacon_key(beacon))
        return self.states.get(sid) if sid else None

    def upsert_state(self, node: UiState) -> str:
        """Insert ``node`` or refresh the existing state with the same beacon."""
        if beacon_key(node.app) != beacon_key(self.app):
            raise AppMismatch(f"state for {node.app!r} offered to the {self.app!r} machine")
        key = beacon_key(node.beacon)
        existing_id = self.beacon_index.get(key)
        if existing_id is None:
            self.states[node.id] = node
            self.beacon_index[key] = node.id
            if self.initial is None:
                self.initial = node.id
            return node.id
        old = self.states[existing_id]
        old.description = node.description
        old.predicted_next = node.predicted_next
        old.precondition = node.precondition
        old.postcondition = node.postcondition
        old.verified = old.verified or node.verified
        old.last_seen_step = max(old.last_seen_step, node.last_seen_step)
        return existing_id

    def record_transition(
        self,
        src: str,
        action: AtomicAction,
        dst: str,
        pre_next: str = "",
        post_current: str = "",
        step: int = 0,
    ) -> Transition:
        for sid in (src, dst):
            if sid not in self.states:
                raise UnknownState(sid)
        edge = Transition(src, action, dst, pre_next, post_current, step)
        for existing in self.transitions:
            if existing.key == edge.key:
                return existing
        self.transitions.append(edge)
        return edge

    def mark_verified(self, sid: str, verdict: Verdict) -> None:
        node = self.get(sid)
        if verdict.outcome is Outcome.SUCCESS:
            node.verified = True

    def out_degree(self, sid: str) -> int:
        return sum(1 for t in self.transitions if t.src == sid)

    def to_dict(self) -> dict:
        return {
            "version": FSM_SCHEMA_VERSION,
            "app": self.app,
            "initial": self.initial,
            "current_goal": self.current_goal,
            "states": [s.to_dict() for s in self.states.values()],
            "transitions": [t.to_dict() for t in self.transitions],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AppFsm":
        if data.get("version") != FSM_SCHEMA_VERSION:
            raise ValueError(f"unsupported FSM document version {data.get('version')!r}")
        fsm = cls(app=data["app"], current_goal=data.get("current_goal"))
        for raw in data.get("states", []):
            node = UiState.from_dict(raw)
            if beacon_key(node.app) != beacon_key(fsm.app):
                raise AppMismatch(f"state {node.id} belongs to {node.app!r}")
            if beacon_key(node.beacon) in fsm.beacon_index:
                raise ValueError(f"duplicate beacon {node.beacon!r}")
            fsm.states[node.id] = node
            fsm.beacon_index[beacon_key(node.beacon)] = node.id
        initial = data.get("initial")
        if initial is not None and initial not in fsm.states:
            raise UnknownState(initial)
        fsm.initial = initial if initial is not None else next(iter(fsm.states), None)
        for raw in data.get("transitions", []):
            t = Transition.from_dict(raw)
            fsm.record_transition(t.src, t.action, t.dst, t.pre_next, t.post_current, t.step)
        return fsm


@dataclass(frozen=True)
class JournalEntry:
    step: int
    app: str
    state_id: str
    action: Optional[AtomicAction]
    verdict: Optional[Verdict]
    verified: bool

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "app": self.app,
            "state_id": self.state_id,
            "action": action_to_dict(self.action) if self.action else None,
            "verdict": self.verdict.to_dict() if self.verdict else None,
            "verified": self.verified,
        }


@dataclass(frozen=True)
class CrossAppEdge:
    from_app: str
    from_id: str
    action: AtomicAction
    to_app: str
    to_id: str

    def to_dict(self) -> dict:
        return {
            "from_app": self.from_app,
            "from": self.from_id,
            "action": action_to_dict(self.action),
            "to_app": self.to_app,
            "to": self.to_id,
        }


@dataclass
class TaskJournal:
    entries: list[JournalEntry] = field(default_factory=list)
    cross_app_edges: list[CrossAppEdge] = field(default_factory=list)

    def append(self, entry: JournalEntry) -> None:
        if self.entries and entry.step <= self.entries[-1].step:
            raise ValueError(f"journal step {entry.step} is not after {self.entries[-1].step}")
        self.entries.append(entry)

    def add_cross_app(self, edge: CrossAppEdge) -> None:
        if edge not in self.cross_app_edges:
            self.cross_app_edges.append(edge)

    def last_step_of(self, sid: str) -> Optional[int]:
        for entry in reversed(self.entries):
            if entry.state_id == sid:
                return entry.step
        return None

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "cross_app_edges": [e.to_dict() for e in self.cross_app_edges],
        }


class RecoveryTarget(NamedTuple):
    state_id: str
    path: list[Transition]


def _undirected_adjacency(fsm: AppFsm) -> dict[str, list[tuple[str, Transition]]]:
    adj: dict[str, list[tuple[str, Transition]]] = {sid: [] for sid in fsm.states}
    for t in fsm.transitions:
        adj[t.src].append((t.dst, t))
        if t.dst != t.src:
            adj[t.dst].append((t.src, t))
    for sid in adj:
        adj[sid].sort(key=lambda item: (item[0], item[1].action.canonical(), item[1].src))
    return adj


def find_recovery_target(
    fsm: AppFsm, failed_at: str, journal: Optional[TaskJournal] = None
) -> Optional[RecoveryTarget]:
    """Most recently seen verified state connected to ``failed_at``.

    Recorded edges are walked in either direction: a forward edge can be
    replayed, a backward one undone with Back. Ties on recency go to the
    shorter path, then the smaller state id. The returned path runs from
    ``failed_at`` to the target and is empty when they coincide.
    """
    if failed_at not in fsm.states:
        raise UnknownState(failed_at)
    adj = _undirected_adjacency(fsm)
    parent: dict[str, Optional[tuple[str, Transition]]] = {failed_at: None}
    dist = {failed_at: 0}
    queue = deque([failed_at])
    while queue:
        cur = queue.popleft()
        for nxt, edge in adj[cur]:
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                parent[nxt] = (cur, edge)
                queue.append(nxt)

    def recency(sid: str) -> int:
        seen = fsm.states[sid].last_seen_step
        if journal is not None:
            last = journal.last_step_of(sid)
            if last is not None:
                seen = max(seen, last)
        return seen

    candidates = [sid for sid in dist if fsm.states[sid].verified]
    if not candidates:
        return None
    target = min(candidates, key=lambda sid: (-recency(sid), dist[sid], sid))
    path: list[Transition] = []
    cur = target
    while parent[cur] is not None:
        prev, edge = parent[cur]
        path.append(edge)
        cur = prev
    path.reverse()
    return RecoveryTarget(target, path)


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_fsm(fsm: AppFsm, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(fsm.to_dict(), indent=2, sort_keys=True)
    if fmt != "dot":
        raise UnsupportedFormat(fmt)
    lines = [f"digraph {_dot_quote(fsm.app)} {{"]
    if fsm.states:
        lines.append("  rankdir=LR;")
    for node in fsm.states.values():
        shape = "doublecircle" if node.verified else "circle"
        lines.append(f"  {_dot_quote(node.id)} [label={_dot_quote(node.beacon)}, shape={shape}];")
    for t in fsm.transitions:
        label = t.action.canonical()
        if getattr(t.action, "label", ""):
            label = f"{t.action.kind}({t.action.label})"
        lines.append(f"  {_dot_quote(t.src)} -> {_dot_quote(t.dst)} [label={_dot_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def import_fsm(document: str) -> AppFsm:
    return AppFsm.from_dict(json.loads(document))


def iter_states(fsms: Iterable[AppFsm]) -> Iterable[UiState]:
    for fsm in fsms:
        yield from fsm.states.values()
