"""Rubric satisfaction and action accuracy."""

from __future__ import annotations

import re
from typing import Mapping, Optional, Sequence

from .. import conditions
from ..errors import EmptyReference, MissingPredicate
from .tasks import Rubric

_QUOTED = re.compile(r"""['"‘“](.+?)['"’”]""")
_FILLER = {"on", "the", "a", "an", "to", "bar", "button", "icon", "field", "box", "at", "in", "of"}
_PREFIXES = [
    (("tap enter", "press enter", "hit enter"), "enter"),
    (("press back", "go back", "tap back", "navigate back"), "back"),
    (("press home", "go home", "go to the home", "return home", "tap home"), "home"),
    (("switch app", "switch to the previous app", "open recent apps"), "switch_app"),
    (("swipe", "scroll"), "swipe"),
    (("wait",), "wait"),
    (("type", "enter text", "input"), "type"),
    (("open", "launch"), "open_app"),
    (("tap", "select", "click", "press", "choose"), "tap"),
]


def _clean(text: str) -> str:
    return " ".join(re.sub(r"[^\w\s$.,'-]", " ", text.casefold()).split()).strip(" .,")


def normalize_action(description: str) -> tuple[str, str]:
    """``(kind, target)`` for a free-text step such as ``tap on the 'Search' bar``."""
    text = " ".join(description.strip().split())
    low = text.casefold()
    kind = "other"
    rest = low
    for prefixes, k in _PREFIXES:
        hit = next((p for p in prefixes if low == p or low.startswith(p + " ")), None)
        if hit:
            kind, rest = k, text[len(hit):]
            break
    if kind in ("enter", "back", "home", "switch_app", "swipe", "wait"):
        return kind, ""
    quoted = _QUOTED.search(rest)
    if quoted:
        return kind, _clean(quoted.group(1))
    words = [w for w in _clean(rest).split() if w not in _FILLER]
    if kind == "open_app" and words and words[-1] == "app":
        words = words[:-1]
    return kind, " ".join(words)


def lcs(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def action_accuracy(executed: Sequence[str], reference: Sequence[str]) -> tuple[int, int]:
    if not reference:
        raise EmptyReference("reference operations are empty")
    ex = [normalize_action(d) for d in executed]
    ref = [normalize_action(d) for d in reference]
    return lcs(ex, ref), len(ref)


def score_rubrics(trace, final_state: Optional[Mapping], rubrics: Sequence[Rubric]) -> tuple[int, int]:
    """Count rubrics whose predicate holds on the final world state.

    The world snapshot already carries the run history that rubrics look at
    (apps opened, screens visited, text typed); ``trace`` is accepted for
    symmetry with graded live runs.
    """
    if not rubrics:
        return 0, 0
    for i, r in enumerate(rubrics):
        if not r.predicate or not conditions.has_predicates(r.predicate):
            raise MissingPredicate(i)
    if final_state is None:
        raise ValueError("sim scoring needs the final world state")
    met = sum(1 for r in rubrics if conditions.evaluate(r.predicate, final_state))
    return met, len(rubrics)
