"""The nine atomic actions of the Actor toolbox."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, ClassVar, Union

from .errors import InvalidCoordinates


def _check_point(*coords: int) -> None:
    for c in coords:
        if not isinstance(c, int) or isinstance(c, bool):
            raise InvalidCoordinates(f"coordinate {c!r} is not an integer")
        if c < 0:
            raise InvalidCoordinates(f"negative coordinate {c}")


@dataclass(frozen=True)
class Tap:
    x: int
    y: int
    # element the Actor named; informational only, excluded from identity
    label: str = field(default="", compare=False)
    kind: ClassVar[str] = "tap"

    def __post_init__(self):
        _check_point(self.x, self.y)

    def canonical(self) -> str:
        return f"tap({self.x},{self.y})"


@dataclass(frozen=True)
class Type:
    text: str
    kind: ClassVar[str] = "type"

    def __post_init__(self):
        if not self.text:
            raise ValueError("Type text must be non-empty")

    def canonical(self) -> str:
        return f"type({self.text!r})"


@dataclass(frozen=True)
class Enter:
    kind: ClassVar[str] = "enter"

    def canonical(self) -> str:
        return "enter()"


@dataclass(frozen=True)
class Back:
    kind: ClassVar[str] = "back"

    def canonical(self) -> str:
        return "back()"


@dataclass(frozen=True)
class OpenApp:
    name: str
    kind: ClassVar[str] = "open_app"

    def __post_init__(self):
        if not self.name.strip():
            raise ValueError("OpenApp name must be non-empty")

    def canonical(self) -> str:
        return f"open_app({self.name!r})"


@dataclass(frozen=True)
class Swipe:
    x1: int
    y1: int
    x2: int
    y2: int
    kind: ClassVar[str] = "swipe"

    def __post_init__(self):
        _check_point(self.x1, self.y1, self.x2, self.y2)

    def canonical(self) -> str:
        return f"swipe({self.x1},{self.y1},{self.x2},{self.y2})"


@dataclass(frozen=True)
class SwitchApp:
    kind: ClassVar[str] = "switch_app"

    def canonical(self) -> str:
        return "switch_app()"


@dataclass(frozen=True)
class Home:
    kind: ClassVar[str] = "home"

    def canonical(self) -> str:
        return "home()"


@dataclass(frozen=True)
class Wait:
    kind: ClassVar[str] = "wait"
    seconds: ClassVar[int] = 10

    def canonical(self) -> str:
        return "wait()"


AtomicAction = Union[Tap, Type, Enter, Back, OpenApp, Swipe, SwitchApp, Home, Wait]

_BY_KIND = {cls.kind: cls for cls in (Tap, Type, Enter, Back, OpenApp, Swipe, SwitchApp, Home, Wait)}
ACTION_KINDS = tuple(_BY_KIND)


def action_to_dict(action: AtomicAction) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": action.kind}
    if isinstance(action, Tap):
        out.update(x=action.x, y=action.y)
        if action.label:
            out["label"] = action.label
    elif isinstance(action, Type):
        out["text"] = action.text
    elif isinstance(action, OpenApp):
        out["name"] = action.name
    elif isinstance(action, Swipe):
        out.update(x1=action.x1, y1=action.y1, x2=action.x2, y2=action.y2)
    return out


def action_from_dict(data: dict[str, Any]) -> AtomicAction:
    kind = data.get("kind")
    if kind not in _BY_KIND:
        raise ValueError(f"unknown action kind {kind!r}")
    cls = _BY_KIND[kind]
    if cls is Tap:
        return Tap(int(data["x"]), int(data["y"]), label=data.get("label", ""))
    if cls is Type:
        return Type(data["text"])
    if cls is OpenApp:
        return OpenApp(data["name"])
    if cls is Swipe:
        return Swipe(int(data["x1"]), int(data["y1"]), int(data["x2"]), int(data["y2"]))
    return cls()


def describe(action: AtomicAction) -> str:
    """Human-style description, parseable by the action-accuracy normalizer."""
    if isinstance(action, Tap):
        return f"tap '{action.label}'" if action.label else f"tap at ({action.x}, {action.y})"
    if isinstance(action, Type):
        return f"type '{action.text}'"
    if isinstance(action, OpenApp):
        return f"open {action.name} app"
    if isinstance(action, Swipe):
        return "swipe"
    return {
        "enter": "tap enter",
        "back": "press back",
        "switch_app": "switch app",
        "home": "press home button",
        "wait": "wait",
    }[action.kind]
