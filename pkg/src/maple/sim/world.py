"""Deterministic simulated handset: apps are scripted screen graphs.

World documents are JSON (``"version": 1``); see ``data/golden/README.md``
for the full schema. A world is loaded once into a :class:`WorldSpec` and run
as a :class:`SimWorld`, which owns all mutable state (current screen,
navigation stacks, variables, fault RNG).
"""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .. import conditions
from ..actions import (
    AtomicAction, Back, Home, OpenApp, SwitchApp, Tap, Type,
)
from ..errors import DanglingScreen, SchemaError
from ..fsm import SYSTEM_APP

WORLD_SCHEMA_VERSION = 1
LAUNCHER = "launcher"
TRIGGERS = ("tap", "type", "enter", "back", "swipe", "wait")


@dataclass(frozen=True)
class ElementScript:
    id: str
    content: str
    bounds: tuple[int, int, int, int]
    kind: str = "text"

    @property
    def center(self) -> tuple[int, int]:
        l, t, r, b = self.bounds
        return ((l + r) // 2, (t + b) // 2)

    def contains(self, x: int, y: int) -> bool:
        l, t, r, b = self.bounds
        return l <= x < r and t <= y < b


@dataclass(frozen=True)
class ScreenScript:
    id: str
    beacon: str
    description: str
    elements: tuple[ElementScript, ...]
    entry: str = ""


@dataclass(frozen=True)
class Rule:
    screen: str
    action: str
    to: str
    element: Optional[str] = None
    misroute: Optional[str] = None
    set: tuple[tuple[str, Any], ...] = ()


@dataclass(frozen=True)
class AppScript:
    name: str
    package: str
    initial: str
    screens: dict[str, ScreenScript]
    rules: tuple[Rule, ...]


@dataclass(frozen=True)
class WorldSpec:
    apps: tuple[AppScript, ...]
    launcher: ScreenScript
    screen_size: tuple[int, int]
    variables: dict[str, Any] = field(default_factory=dict)

    def app(self, name: str) -> Optional[AppScript]:
        key = name.strip().casefold()
        return next((a for a in self.apps if a.name.casefold() == key), None)

    @property
    def app_names(self) -> list[str]:
        return [a.name for a in self.apps]


@dataclass(frozen=True)
class FaultPolicy:
    seed: int = 0
    p_noop: float = 0.0
    p_misroute: float = 0.0
    # explicit tap ordinals to drop, for crafted fixtures
    noop_taps: frozenset[int] = frozenset()

    def __post_init__(self):
        for p in (self.p_noop, self.p_misroute):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"fault probability {p} outside [0, 1]")
        object.__setattr__(self, "noop_taps", frozenset(self.noop_taps))


def _require(doc: dict, key: str, path: str, kind=None):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"{path}.{key}" if path else key, "missing")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return value


def _element(raw: dict, path: str, size: tuple[int, int]) -> ElementScript:
    bounds = _require(raw, "bounds", path, list)
    if len(bounds) != 4 or not all(isinstance(v, int) for v in bounds):
        raise SchemaError(f"{path}.bounds", "expected four integers")
    l, t, r, b = bounds
    if not (0 <= l < r <= size[0] and 0 <= t < b <= size[1]):
        raise SchemaError(f"{path}.bounds", f"{bounds} outside screen {size}")
    kind = raw.get("kind", "text")
    if kind not in ("text", "icon"):
        raise SchemaError(f"{path}.kind", f"unknown kind {kind!r}")
    return ElementScript(_require(raw, "id", path, str), _require(raw, "content", path, str),
                         (l, t, r, b), kind)


def _screen(sid: str, raw: dict, path: str, size) -> ScreenScript:
    elements = tuple(_element(e, f"{path}.elements[{i}]", size)
                     for i, e in enumerate(raw.get("elements", [])))
    ids = [e.id for e in elements]
    if len(ids) != len(set(ids)):
        raise SchemaError(f"{path}.elements", "duplicate element ids")
    return ScreenScript(sid, _require(raw, "beacon", path, str), raw.get("description", ""),
                        elements, raw.get("entry", ""))


def load_world(document: Union[dict, str, Path]) -> WorldSpec:
    if isinstance(document, (str, Path)):
        document = json.loads(Path(document).read_text(encoding="utf-8"))
    if document.get("version") != WORLD_SCHEMA_VERSION:
        raise SchemaError("version", f"expected {WORLD_SCHEMA_VERSION}")
    size_raw = _require(document, "screen_size", "", list)
    if len(size_raw) != 2 or not all(isinstance(v, int) and v > 0 for v in size_raw):
        raise SchemaError("screen_size", "expected [width, height]")
    size = (size_raw[0], size_raw[1])
    apps = []
    seen = set()
    for i, raw in enumerate(_require(document, "apps", "", list)):
        path = f"apps[{i}]"
        name = _require(raw, "name", path, str)
        if name.casefold() in seen or name.casefold() == SYSTEM_APP.casefold():
            raise SchemaError(f"{path}.name", f"duplicate or reserved app name {name!r}")
        seen.add(name.casefold())
        screens = {sid: _screen(sid, s, f"{path}.screens.{sid}", size)
                   for sid, s in _require(raw, "screens", path, dict).items()}
        initial = _require(raw, "initial", path, str)
        if initial not in screens:
            raise DanglingScreen(f"{name}: initial screen {initial!r}")
        rules = []
        for j, r in enumerate(raw.get("rules", [])):
            rpath = f"{path}.rules[{j}]"
            on = _require(r, "on", rpath, dict)
            action = _require(on, "action", f"{rpath}.on", str)
            if action not in TRIGGERS:
                raise SchemaError(f"{rpath}.on.action", f"unknown trigger {action!r}")
            rule = Rule(screen=_require(r, "screen", rpath, str), action=action,
                        to=_require(r, "to", rpath, str), element=on.get("element"),
                        misroute=r.get("misroute"), set=tuple(sorted(r.get("set", {}).items())))
            for ref in (rule.screen, rule.to, rule.misroute):
                if ref is not None and ref not in screens:
                    raise DanglingScreen(f"{name}: rule {j} references missing screen {ref!r}")
            if action == "tap":
                if not rule.element:
                    raise SchemaError(f"{rpath}.on.element", "tap rules name an element")
                if rule.element not in {e.id for e in screens[rule.screen].elements}:
                    raise SchemaError(f"{rpath}.on.element", f"no element {rule.element!r} on {rule.screen}")
            rules.append(rule)
        apps.append(AppScript(name, raw.get("package", f"sim.{name.lower()}"), initial, screens, tuple(rules)))
    launcher_raw = document.get("launcher", {})
    launcher = _launcher(launcher_raw, apps, size)
    return WorldSpec(tuple(apps), launcher, size, dict(document.get("variables", {})))


def _launcher(raw: dict, apps: list[AppScript], size: tuple[int, int]) -> ScreenScript:
    w, _ = size
    cols, cell = 4, w // 4
    elements = []
    for i, app in enumerate(apps):
        col, row = i % cols, i // cols
        l, t = col * cell + 10, 200 + row * (cell + 40)
        elements.append(ElementScript(f"icon:{app.name}", app.name, (l, t, l + cell - 20, t + cell - 20), "icon"))
    return ScreenScript(LAUNCHER, raw.get("beacon", "Home Screen"),
                        raw.get("description", "Device home screen showing app icons."),
                        tuple(elements))


class SimWorld:
    """Mutable run-time state of a loaded :class:`WorldSpec`."""

    def __init__(self, spec: WorldSpec, faults: FaultPolicy = FaultPolicy()):
        self.spec = spec
        self.faults = faults
        self.rng = random.Random(faults.seed)
        self.vars: dict[str, Any] = copy.deepcopy(spec.variables)
        self.app: Optional[str] = None
        self.stacks: dict[str, list[str]] = {}
        self.previous_app: Optional[str] = None
        self.step_count = 0
        self.tap_count = 0
        self.fault_log: list[dict] = []
        self.visited: list[str] = [f"{SYSTEM_APP}/{LAUNCHER}"]
        self.opened: list[str] = []
        self.typed: list[str] = []

    # -- inspection -----------------------------------------------------

    @property
    def foreground_app(self) -> str:
        return self.app or SYSTEM_APP

    @property
    def screen_id(self) -> str:
        return self.stacks[self.app][-1] if self.app else LAUNCHER

    @property
    def screen(self) -> ScreenScript:
        if self.app is None:
            return self.spec.launcher
        return self.spec.app(self.app).screens[self.screen_id]

    @property
    def location(self) -> str:
        return f"{self.foreground_app}/{self.screen_id}"

    def resolve(self, content: str) -> str:
        try:
            return content.format_map(_Blank(self.vars))
        except (ValueError, IndexError):
            return content

    def visible_elements(self) -> list[tuple[ElementScript, str]]:
        return [(e, self.resolve(e.content)) for e in self.screen.elements]

    def snapshot(self) -> dict:
        return {
            "app": self.foreground_app,
            "screen": self.screen_id,
            "vars": dict(self.vars),
            "elements": [text for _, text in self.visible_elements()],
            "opened": list(self.opened),
            "visited": list(self.visited),
            "typed": list(self.typed),
            "steps": self.step_count,
            "faults": [dict(f) for f in self.fault_log],
        }

    def check(self, text: str) -> Optional[bool]:
        return conditions.evaluate(text, self.snapshot())

    # -- dynamics -------------------------------------------------------

    def _goto(self, app: str, target: str) -> bool:
        script = self.spec.app(app)
        entry = script.screens[target].entry
        if entry:
            snap = self.snapshot()
            snap["app"], snap["screen"] = app, target
            if not conditions.evaluate(entry, snap):
                return False
        stack = self.stacks[app]
        if len(stack) >= 2 and stack[-2] == target:
            stack.pop()
        elif stack[-1] != target:
            stack.append(target)
        self._arrive()
        return True

    def _arrive(self) -> None:
        loc = self.location
        if self.visited[-1] != loc:
            self.visited.append(loc)

    def _open(self, name: str) -> None:
        script = self.spec.app(name)
        if script is None:
            return
        if self.app != script.name:
            self.previous_app = self.app
        self.app = script.name
        self.stacks[script.name] = [script.initial]
        self.opened.append(script.name)
        self._arrive()

    def _home(self) -> None:
        if self.app is not None:
            self.previous_app = self.app
        self.app = None
        self._arrive()

    def _apply_set(self, rule: Rule, action: AtomicAction) -> None:
        for key, value in rule.set:
            if isinstance(value, str) and value == "$text" and isinstance(action, Type):
                self.vars[key] = action.text
            elif isinstance(value, str) and value[:1] in "+-" and value[1:].isdigit():
                self.vars[key] = int(self.vars.get(key, 0)) + int(value)
            else:
                self.vars[key] = value

    def _rule_for(self, action: AtomicAction) -> Optional[Rule]:
        script = self.spec.app(self.app)
        sid = self.screen_id
        for rule in script.rules:
            if rule.screen != sid or rule.action != action.kind:
                continue
            if rule.action == "tap":
                el = next(e for e in script.screens[sid].elements if e.id == rule.element)
                if not el.contains(action.x, action.y):
                    continue
            return rule
        return None

    def step(self, action: AtomicAction) -> None:
        """Apply one action. Unknown or unmatched actions leave the screen as is."""
        index = self.step_count
        self.step_count += 1
        if isinstance(action, Tap):
            ordinal = self.tap_count
            self.tap_count += 1
            draw = self.rng.random()
            if ordinal in self.faults.noop_taps or draw < self.faults.p_noop:
                self.fault_log.append({"step": index, "tap": ordinal, "kind": "noop",
                                       "at": self.location})
                return
        if isinstance(action, Type):
            self.typed.append(action.text)
        if isinstance(action, Home):
            self._home()
            return
        if isinstance(action, SwitchApp):
            if self.previous_app is not None and self.previous_app in self.stacks:
                target = self.previous_app
                self.previous_app = self.app
                self.app = target
                self._arrive()
            return
        if self.app is None:
            if isinstance(action, OpenApp):
                self._open(action.name)
            elif isinstance(action, Tap):
                for el in self.spec.launcher.elements:
                    if el.contains(action.x, action.y):
                        self._open(el.content)
                        break
            return
        rule = self._rule_for(action)
        if rule is None:
            if isinstance(action, Back):
                stack = self.stacks[self.app]
                if len(stack) > 1:
                    stack.pop()
                    self._arrive()
                else:
                    self._home()
            return
        target = rule.to
        if rule.misroute is not None:
            if self.rng.random() < self.faults.p_misroute:
                self.fault_log.append({"step": index, "tap": self.tap_count - 1, "kind": "misroute",
                                       "at": self.location, "to": rule.misroute})
                target = rule.misroute
        before = dict(self.vars)
        self._apply_set(rule, action)
        if not self._goto(self.app, target):
            self.vars = before


class _Blank(dict):
    def __missing__(self, key):
        return ""
