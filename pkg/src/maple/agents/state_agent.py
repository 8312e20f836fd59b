"""State Agent: turns a screenshot plus perception into a UiState."""

from __future__ import annotations

from typing import Sequence

from ..errors import MalformedResponse
from ..fsm import SYSTEM_APP, UiState, canonical_beacon
from ..llm import Gateway, ImagePart, Message, ModelRequest, parse_sections
from ..perception import PerceptionResult
from .prompts import history_block, render, template

CORE_SECTIONS = ["State Description", "Predicted Next State", "App Inference", "State Beacon"]
CONDITION_SECTIONS = ["Post-condition of Current State", "Pre-condition of Next State"]


def _app_name(raw: str) -> str:
    name = canonical_beacon(raw.splitlines()[0] if raw else "").strip("'\"")
    if name.casefold() == SYSTEM_APP.casefold():
        return SYSTEM_APP
    return name


def describe_state(
    gateway: Gateway,
    p: PerceptionResult,
    screenshot: bytes,
    subtask: str,
    beacon_history: Sequence[str] = (),
    *,
    instruction: str = "",
    plan_text: str = "",
    history=(),
    step: int = 0,
    conditions: bool = True,
) -> UiState:
    required = CORE_SECTIONS + (CONDITION_SECTIONS if conditions else [])
    prompt = render(
        "state_agent",
        instruction=instruction,
        plan=plan_text or "(none)",
        subtask=subtask,
        elements=p.listing(),
        history=history_block(history),
        beacons="\n".join(f"- {b}" for b in dict.fromkeys(beacon_history)) or "(none)",
        conditions=template("state_conditions").template if conditions else "",
    )
    req = ModelRequest((Message.user(prompt, ImagePart(screenshot)),), tag="state")
    try:
        sections = parse_sections(gateway.complete(req).text, required)
    except MalformedResponse as exc:
        retry = ModelRequest((Message.user(
            prompt + f"\nYour previous answer lacked the headers: {', '.join(exc.missing)}.",
            ImagePart(screenshot)),), tag="state.retry")
        sections = parse_sections(gateway.complete(retry).text, required)
    return UiState(
        app=_app_name(sections["App Inference"]),
        beacon=sections["State Beacon"].splitlines()[0] if sections["State Beacon"] else "",
        description=sections["State Description"],
        predicted_next=sections["Predicted Next State"],
        postcondition=sections.get(CONDITION_SECTIONS[0], "") if conditions else "",
        precondition=sections.get(CONDITION_SECTIONS[1], "") if conditions else "",
        first_seen_step=step,
        last_seen_step=step,
    )
