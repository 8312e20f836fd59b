"""Actor: picks one toolbox action for the current subtask."""

from __future__ import annotations

from typing import Optional, Union

from ..actions import AtomicAction, Tap
from ..errors import ElementNotFound, MalformedResponse, NoActionParsed
from ..fsm import UiState
from ..llm import Gateway, Message, ModelRequest, parse_sections
from ..perception import PerceptionResult, locate
from .knowledge import KnowledgeBase
from .prompts import context_block, history_block, render
from .toolbox import Call, parse_call, to_action


class Done:
    """The Actor's claim that nothing is left to do."""

    def __repr__(self) -> str:
        return "Done()"


DONE = Done()


def _parse(text: str) -> Optional[Call]:
    try:
        body = parse_sections(text, ["Action"])["Action"]
    except MalformedResponse:
        body = text
    return parse_call(body)


def resolve(call: Call, p: PerceptionResult) -> Union[AtomicAction, Done]:
    if call.name == "Done":
        return DONE
    action = to_action(call)
    if action is not None:
        return action
    label = call.args[0]
    el = locate(p, label)
    if el is None:
        raise ElementNotFound(f"no element matching {label!r} on screen")
    x, y = el.center
    return Tap(x, y, label=el.content)


def decide_action(
    gateway: Gateway,
    subtask: str,
    p: PerceptionResult,
    state: UiState,
    kb: Optional[KnowledgeBase] = None,
    *,
    instruction: str = "",
    history=(),
    conditions: bool = True,
) -> Union[AtomicAction, Done]:
    detail = f"Screen description: {state.description}\n"
    if conditions and state.postcondition:
        detail += f"Goal condition: {state.postcondition}\n"
    prompt = render(
        "actor",
        instruction=instruction,
        subtask=subtask,
        beacon=state.beacon,
        app=state.app,
        state_detail=detail,
        elements=p.listing(),
        history=history_block(history),
        context=context_block(kb.render()) if kb is not None else "",
    )
    call = _parse(gateway.complete(ModelRequest((Message.user(prompt),), tag="actor")).text)
    if call is None:
        retry = prompt + "\nYour previous answer contained no valid action. Reply with exactly one action."
        call = _parse(gateway.complete(ModelRequest((Message.user(retry),), tag="actor.retry")).text)
    if call is None:
        raise NoActionParsed(f"no toolbox action for subtask {subtask!r}")
    return resolve(call, p)
