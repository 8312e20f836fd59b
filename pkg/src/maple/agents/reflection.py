"""Reflection: per-action verdicts and recovery plans."""

from __future__ import annotations

import json
import logging
import re
from typing import Callable, Optional, Sequence

from ..actions import AtomicAction
from ..errors import MalformedResponse, UnparsableRecovery, UnparsableVerdict
from ..fsm import AppFsm, Transition, TaskJournal, UiState
from ..llm import Gateway, ImagePart, Message, ModelRequest, parse_sections
from ..perception import PerceptionResult
from ..verdict import Verdict
from .knowledge import KnowledgeBase
from .prompts import context_block, render
from .toolbox import format_action
from .types import RecoveryPlan

log = logging.getLogger(__name__)

# evaluates predicate text against the world; None when the text has no predicates
Checker = Callable[[str], Optional[bool]]

_OUTCOMES = {"success": Verdict.success, "nochange": Verdict.no_change, "fail": Verdict.fail,
             "failure": Verdict.fail}


def parse_verdict(text: str) -> Verdict:
    sections = parse_sections(text, ["Outcome"])
    word = re.sub(r"[^a-z]", "", sections["Outcome"].split("\n")[0].casefold())
    reason = sections.get("Reason", "").strip()
    if word not in _OUTCOMES:
        raise UnparsableVerdict(f"unknown outcome {sections['Outcome']!r}")
    if word == "success":
        return Verdict.success()
    return _OUTCOMES[word](reason or f"reported {word}")


def verify(
    gateway: Gateway,
    prev: UiState,
    expected_next_pre: str,
    p_before: PerceptionResult,
    p_new: PerceptionResult,
    shots: tuple[bytes, bytes],
    subtask: str,
    action: AtomicAction,
    kb: Optional[KnowledgeBase] = None,
    *,
    checker: Optional[Checker] = None,
) -> Verdict:
    unchanged = p_before.digest == p_new.digest
    if checker is not None:
        expected = " ".join(c for c in (prev.postcondition, expected_next_pre) if c)
        met = checker(expected)
        if met is True:
            return Verdict.success()
        if met is False and unchanged:
            return Verdict.no_change("screen unchanged and the expected condition is unmet")
    conds = ""
    if prev.postcondition or expected_next_pre:
        conds = (f"Post-condition of the previous screen: {prev.postcondition}\n"
                 f"Pre-condition of the next screen: {expected_next_pre}\n")
    prompt = render(
        "reflection",
        subtask=subtask,
        action=format_action(action),
        beacon=prev.beacon,
        app=prev.app,
        description=prev.description,
        predicted=prev.predicted_next,
        conditions=conds,
        elements=p_new.listing(),
        context=context_block(kb.render()) if kb is not None else "",
    )
    images = (ImagePart(shots[0]), ImagePart(shots[1]))
    for attempt in range(2):
        tag = "reflect" if attempt == 0 else "reflect.retry"
        text = gateway.complete(ModelRequest((Message.user(prompt, *images),), tag=tag)).text
        try:
            return parse_verdict(text)
        except (MalformedResponse, UnparsableVerdict) as exc:
            log.warning("unusable verdict: %s", exc)
    raise UnparsableVerdict(f"no usable verdict for subtask {subtask!r}")


def _walk(fsm: AppFsm, start: str, path: Sequence[Transition]) -> list[str]:
    """One navigation step per edge; forward edges are replayed, backward ones undone with Back."""
    steps, cur = [], start
    for edge in path:
        if edge.src == cur:
            cur = edge.dst
            steps.append(f"Replay {format_action(edge.action)} to reach {fsm.get(cur).beacon}")
        else:
            cur = edge.src
            steps.append(f"Press Back to return to {fsm.get(cur).beacon}")
    return steps


def fallback_recovery_plan(fsm: AppFsm, current: str, target: str, path: Sequence[Transition],
                           subtask: str) -> RecoveryPlan:
    steps = tuple(_walk(fsm, current, path)) + (subtask,)
    return RecoveryPlan("Follow the recorded path back, then retry.", steps, steps[0], target,
                        f"Return to {fsm.get(target).beacon} and retry the failed subtask.")


def parse_recovery(text: str, target: str) -> RecoveryPlan:
    m = re.search(r"\{.*\}", text or "", re.DOTALL)
    if not m:
        raise UnparsableRecovery("no JSON object in reply")
    try:
        doc = json.loads(m.group(0))
    except json.JSONDecodeError as exc:
        raise UnparsableRecovery(str(exc)) from exc
    steps = doc.get("plan")
    current = doc.get("current_subtask")
    if (not isinstance(steps, list) or not steps
            or not all(isinstance(s, str) and s.strip() for s in steps)):
        raise UnparsableRecovery("'plan' must be a non-empty list of strings")
    if not isinstance(current, str) or current not in steps:
        raise UnparsableRecovery("'current_subtask' missing or not in the plan")
    return RecoveryPlan(str(doc.get("thought", "")), tuple(steps), current, target,
                        str(doc.get("goal", "")))


def build_recovery_plan(
    gateway: Gateway,
    fsm: AppFsm,
    journal: TaskJournal,
    target: str,
    failure_reason: str,
    *,
    current: str,
    path: Sequence[Transition] = (),
    subtask: str,
    instruction: str = "",
) -> RecoveryPlan:
    if target == current:
        return RecoveryPlan("Already on the recovery target; retry the failed subtask.",
                            (subtask,), subtask, target, "Retry the failed subtask.")
    node = fsm.get(target)
    prompt = render(
        "recovery",
        instruction=instruction,
        subtask=subtask,
        reason=failure_reason,
        current=fsm.get(current).beacon,
        target_id=target,
        target_beacon=node.beacon,
        target_description=node.description,
        path="\n".join(f"- {s}" for s in _walk(fsm, current, path)) or "- (no recorded path)",
    )
    for attempt in range(2):
        tag = "recover" if attempt == 0 else "recover.retry"
        text = gateway.complete(ModelRequest((Message.user(prompt),), tag=tag)).text
        try:
            return parse_recovery(text, target)
        except UnparsableRecovery as exc:
            log.warning("unusable recovery plan: %s", exc)
    raise UnparsableRecovery(f"no usable recovery plan toward {target}")
