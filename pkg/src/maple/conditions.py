"""Machine-checkable predicates embedded in condition and rubric text.

A condition is free text. In simulated runs it may also carry predicate
tokens of the form ``@name(argument)``, evaluated against a world snapshot:

=================  ===================================================
``@screen(A/s)``   the foreground screen is ``s`` of app ``A``
``@app(A)``        app ``A`` is in the foreground
``@var(k=v)``      world variable comparison; ops ``= != >= <= > <``
``@visible(t)``    some on-screen element contains text ``t``
``@opened(A)``     app ``A`` was opened at some point
``@visited(A/s)``  screen ``s`` of ``A`` was shown at some point
``@typed(t)``      text ``t`` was typed at some point
=================  ===================================================

Comparisons on text are case-insensitive.
"""

from __future__ import annotations

import re
from typing import Any, Mapping, Optional

TOKEN = re.compile(r"@(?P<name>[a-z_]+)\((?P<arg>[^()]*)\)")
_VAR = re.compile(r"^\s*(?P<key>[A-Za-z_][A-Za-z0-9_]*)\s*(?P<op>!=|>=|<=|=|>|<)\s*(?P<value>.*?)\s*$")

PREDICATES = ("screen", "app", "var", "visible", "opened", "visited", "typed")


def extract(text: str) -> list[tuple[str, str]]:
    return [(m.group("name"), m.group("arg").strip()) for m in TOKEN.finditer(text or "")]


def has_predicates(text: str) -> bool:
    return bool(extract(text))


def strip(text: str) -> str:
    return re.sub(r"\s{2,}", " ", TOKEN.sub("", text or "")).strip()


def _fold(value: Any) -> str:
    return str(value).strip().casefold()


def _compare(actual: Any, op: str, expected: str) -> bool:
    try:
        a, e = float(actual), float(expected)
    except (TypeError, ValueError):
        a, e = _fold(actual if actual is not None else ""), _fold(expected)
    if op == "=":
        return a == e
    if op == "!=":
        return a != e
    try:
        return {">=": a >= e, "<=": a <= e, ">": a > e, "<": a < e}[op]
    except TypeError:
        return False


def check_one(name: str, arg: str, snap: Mapping[str, Any]) -> bool:
    if name == "screen":
        return _fold(arg) == _fold(f"{snap['app']}/{snap['screen']}")
    if name == "app":
        return _fold(arg) == _fold(snap["app"])
    if name == "var":
        m = _VAR.match(arg)
        if not m:
            raise ValueError(f"bad @var argument {arg!r}")
        return _compare(snap["vars"].get(m.group("key"), ""), m.group("op"), m.group("value"))
    if name == "visible":
        return any(_fold(arg) in _fold(c) for c in snap["elements"])
    if name == "opened":
        return _fold(arg) in {_fold(a) for a in snap["opened"]}
    if name == "visited":
        return _fold(arg) in {_fold(v) for v in snap["visited"]}
    if name == "typed":
        return any(_fold(arg) == _fold(t) for t in snap["typed"])
    raise ValueError(f"unknown predicate @{name}")


def evaluate(text: str, snap: Mapping[str, Any]) -> Optional[bool]:
    """True/False when ``text`` carries predicates, None when it is text only."""
    preds = extract(text)
    if not preds:
        return None
    return all(check_one(name, arg, snap) for name, arg in preds)


def unmet(text: str, snap: Mapping[str, Any]) -> list[str]:
    return [f"@{n}({a})" for n, a in extract(text) if not check_one(n, a, snap)]
