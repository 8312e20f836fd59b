"""The Actor's textual action syntax, e.g. ``Tap('Search')`` or ``Swipe(1, 2, 3, 4)``."""

from __future__ import annotations

import ast
import re
from typing import NamedTuple, Optional

from ..actions import (
    AtomicAction, Back, Enter, Home, OpenApp, Swipe, SwitchApp, Tap, Type, Wait,
)

NAMES = ("Tap", "Type", "Enter", "Back", "Open_App", "Swipe", "Switch_App", "Home", "Wait", "Done")
CALL = re.compile(r"\b(?P<name>" + "|".join(NAMES) + r")\s*\((?P<args>.*)\)")


class Call(NamedTuple):
    name: str
    args: tuple


def parse_call(text: str) -> Optional[Call]:
    """First well-formed toolbox call in ``text``, or None."""
    for line in (text or "").splitlines():
        m = CALL.search(line.strip().strip("`"))
        if not m:
            continue
        raw = m.group("args").strip()
        try:
            args = ast.literal_eval(f"({raw},)") if raw else ()
        except (ValueError, SyntaxError):
            continue
        if _arity_ok(m.group("name"), args):
            return Call(m.group("name"), tuple(args))
    return None


def _arity_ok(name: str, args: tuple) -> bool:
    if name == "Tap":
        return (len(args) == 1 and isinstance(args[0], str)) or (
            len(args) == 2 and all(isinstance(a, int) for a in args))
    if name in ("Type", "Open_App"):
        return len(args) == 1 and isinstance(args[0], str)
    if name == "Swipe":
        return len(args) == 4 and all(isinstance(a, int) for a in args)
    return not args


def to_action(call: Call) -> Optional[AtomicAction]:
    """Build the action for calls that need no screen lookup; None for Tap('label') and Done()."""
    name, args = call
    if name == "Tap":
        return Tap(args[0], args[1]) if len(args) == 2 else None
    if name == "Type":
        return Type(args[0])
    if name == "Open_App":
        return OpenApp(args[0])
    if name == "Swipe":
        return Swipe(*args)
    return {"Enter": Enter, "Back": Back, "Switch_App": SwitchApp, "Home": Home,
            "Wait": Wait}.get(name, lambda: None)()


def format_action(action: AtomicAction) -> str:
    if isinstance(action, Tap):
        return f"Tap({action.label!r})" if action.label else f"Tap({action.x}, {action.y})"
    if isinstance(action, Type):
        return f"Type({action.text!r})"
    if isinstance(action, OpenApp):
        return f"Open_App({action.name!r})"
    if isinstance(action, Swipe):
        return f"Swipe({action.x1}, {action.y1}, {action.x2}, {action.y2})"
    return {"enter": "Enter()", "back": "Back()", "switch_app": "Switch_App()",
            "home": "Home()", "wait": "Wait()"}[action.kind]
