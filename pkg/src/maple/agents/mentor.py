"""Mentor: distils a finished run into reusable knowledge."""

from __future__ import annotations

import json
import logging
import re
from typing import Iterable, Sequence

from ..actions import Tap
from ..errors import GatewayError
from ..fsm import AppFsm
from ..llm import Gateway, Message, ModelRequest
from ..verdict import Verdict
from .knowledge import ActionSequence, Cue, KnowledgeBase
from .prompts import history_block, render
from .toolbox import format_action, parse_call, to_action
from .types import StepRecord

log = logging.getLogger(__name__)


def _sequence(raw: dict, taps: dict[str, Tap], apps: tuple[str, ...]) -> ActionSequence:
    actions = []
    for item in raw.get("actions", []):
        call = parse_call(item)
        if call is None or call.name == "Done":
            raise ValueError(f"bad action {item!r}")
        action = to_action(call)
        if action is None:
            # label taps take their coordinates from the run that produced them
            action = taps.get(call.args[0].casefold())
            if action is None:
                raise ValueError(f"tap target {call.args[0]!r} never tapped")
        actions.append(action)
    if not actions:
        raise ValueError("empty sequence")
    return ActionSequence(str(raw.get("precondition", "")), tuple(actions), str(raw.get("label", "")), apps)


def retain(
    gateway: Gateway,
    trace: Sequence[StepRecord],
    fsms: Iterable[AppFsm],
    errors: Sequence[tuple[int, Verdict]],
    *,
    instruction: str = "",
    apps: Sequence[str] = (),
    status: str = "",
) -> KnowledgeBase:
    fsms = list(fsms)
    delta = KnowledgeBase(fsms={f.app: f for f in fsms})
    names = {s.id: s.beacon for f in fsms for s in f.states.values()}
    transitions = [f"{names.get(t.src, t.src)} --{format_action(t.action)}--> {names.get(t.dst, t.dst)}"
                   for f in fsms for t in f.transitions]
    prompt = render(
        "mentor",
        instruction=instruction,
        apps=", ".join(apps),
        status=status,
        history=history_block(trace),
        errors="\n".join(f"step {i}: {v.outcome.value} ({v.reason})" for i, v in errors) or "(none)",
        transitions="\n".join(transitions) or "(none)",
    )
    try:
        text = gateway.complete(ModelRequest((Message.user(prompt),), tag="mentor")).text
        doc = json.loads(re.search(r"\{.*\}", text, re.DOTALL).group(0))
    except (GatewayError, AttributeError, json.JSONDecodeError) as exc:
        log.warning("mentor produced no usable knowledge (%s); storing FSMs only", exc)
        return delta
    scope = tuple(apps)
    for cue in doc.get("guidance_cues", []):
        if isinstance(cue, str) and cue.strip() and cue.strip() not in {c.text for c in delta.cues}:
            delta.cues.append(Cue(cue.strip(), scope))
    taps = {s.action.label.casefold(): s.action for s in trace
            if isinstance(s.action, Tap) and s.action.label}
    for raw in doc.get("action_sequences", []):
        try:
            delta.sequences.append(_sequence(raw, taps, scope))
        except (ValueError, TypeError, AttributeError) as exc:
            log.warning("skipping action sequence: %s", exc)
    return delta
