"""Scripted model backend for recording the golden archive.

It answers every agent prompt from ground truth: the live :class:`SimWorld`
and a playbook mapping each task to subtasks, each subtask to one toolbox
action and the predicate that holds once it is done. Its answers are only
ever used through a :class:`~maple.llm.RecordingBackend`; runs against the
shipped archive never import world internals through the model channel.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Optional, Union

from .. import conditions
from ..fsm import SYSTEM_APP
from ..llm import ImagePart, ModelRequest, ModelResponse, serialize_sections
from .render import ELEMENTS_KEY, FRAME_KEY, read_png_text
from .world import SimWorld

_HISTORY = re.compile(r"^\d+\. \[(?P<phase>main|retry|recovery)\] (?P<subtask>.*) => (?P<action>.*) => "
                      r"(?P<outcome>Success|NoChange|Fail)$")
_BACK = re.compile(r"^Press Back to return to (?P<beacon>.+)$")
_REPLAY = re.compile(r"^Replay (?P<action>.+) to reach (?P<beacon>.+)$")
_WAIT = "Wait for the screen to settle"


def load_playbook(path: Union[str, Path]) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != 1:
        raise ValueError("unsupported playbook version")
    return doc


def _field(prompt: str, name: str) -> str:
    m = re.search(rf"^{re.escape(name)}: (.*)$", prompt, re.MULTILINE)
    return m.group(1).strip() if m else ""


def _block(prompt: str, header: str) -> list[str]:
    """Lines following ``header`` up to the next blank line."""
    lines = prompt.splitlines()
    try:
        start = lines.index(header) + 1
    except ValueError:
        return []
    out = []
    for line in lines[start:]:
        if not line.strip():
            break
        out.append(line)
    return out


class OracleBackend:
    name = "oracle"

    def __init__(self, playbook: dict, world: Optional[SimWorld] = None):
        self.playbook = playbook
        self.world = world
        self.by_instruction = {t["instruction"]: (tid, t) for tid, t in playbook["tasks"].items()}

    # -- ground truth ----------------------------------------------------

    def _task(self, prompt: str) -> tuple[str, dict]:
        instruction = _field(prompt, "User instruction")
        if instruction not in self.by_instruction:
            raise KeyError(f"instruction not in playbook: {instruction!r}")
        return self.by_instruction[instruction]

    @staticmethod
    def _completed(prompt: str) -> int:
        """Subtasks finished so far, read off the action history in the prompt."""
        done = 0
        for line in _block(prompt, "Action history:"):
            m = _HISTORY.match(line.strip())
            if m and m.group("outcome") == "Success" and m.group("phase") != "recovery":
                done += 1
        return done

    def _location_of(self, beacon: str) -> Optional[str]:
        spec = self.world.spec
        if spec.launcher.beacon == beacon:
            return f"{SYSTEM_APP}/{spec.launcher.id}"
        for app in spec.apps:
            for sid, screen in app.screens.items():
                if screen.beacon == beacon:
                    return f"{app.name}/{sid}"
        return None

    def _entry(self, subtask: str, prompt: str, count: bool = True) -> Optional[dict]:
        """Playbook entry (action, expect) for ``subtask``; None once the task is finished.

        Subtasks outside the playbook (the bare instruction when planning is
        off) resolve to the next unfinished playbook step when ``count`` is set.
        """
        here = f"@screen({self.world.location})"
        if subtask == _WAIT:
            return {"action": "Wait()", "expect": here}
        if subtask in self.playbook["subtasks"]:
            entry = dict(self.playbook["subtasks"][subtask])
            if entry["action"] == "Wait()":
                entry["expect"] = here
            return entry
        for pattern, action in ((_BACK, "Back()"), (_REPLAY, None)):
            m = pattern.match(subtask)
            if m:
                loc = self._location_of(m.group("beacon"))
                return {"action": action or m.group("action"),
                        "expect": f"@screen({loc})" if loc else ""}
        if not count:
            return None
        _, task = self._task(prompt)
        done = self._completed(prompt)
        if done < len(task["plan"]):
            return self._entry(task["plan"][done], prompt)
        return None

    # -- replies ---------------------------------------------------------

    def _plan(self, req: ModelRequest, prompt: str) -> str:
        tid, task = self._task(prompt)
        plan = task["plan"]
        if req.tag.startswith("replan"):
            plan = plan[self._completed(prompt):] or plan[-1:]
        rationale = {s: self.playbook["subtasks"][s]["rationale"] for s in plan}
        items = [(s, rationale[s]) for s in plan]
        slot = int(req.tag.split(".")[2])
        correct = sum(map(ord, tid)) % 5 + 1
        if req.temperature > 0 and slot != correct:
            variant = (slot - correct) % 5
            wait = (_WAIT, "Give the app time to load.")
            if variant == 1:
                items = [wait] + items
            elif variant == 2:
                items = [(s, "") for s, _ in items]
            elif variant == 3:
                items = items + [wait]
            else:
                items = items[:1] + [wait] + items[1:]
        body = "\n".join(f"{n}. {s} | {r}" if r else f"{n}. {s}" for n, (s, r) in enumerate(items, 1))
        return serialize_sections({"Intent": f"The user wants to: {task['instruction']}", "Plan": body})

    def _judge(self, prompt: str) -> str:
        _, task = self._task(prompt)
        blocks = re.split(r"^Candidate (\d+):$", prompt, flags=re.MULTILINE)
        for k, body in zip(blocks[1::2], blocks[2::2]):
            lines = [ln for ln in body.strip().splitlines() if re.match(r"^\d+\. ", ln)]
            subtasks = [re.sub(r"^\d+\. ", "", ln).split(" | ")[0] for ln in lines]
            n = len(subtasks)
            if (n and subtasks == task["plan"][-n:] and all(" | " in ln for ln in lines)):
                return f"best: {k}\n"
        return "best: 0\n"

    def _state(self, prompt: str) -> str:
        world = self.world
        screen = world.screen
        subtask = _field(prompt, "Current subtask")
        entry = self._entry(subtask, prompt)
        expect = entry["expect"] if entry else f"@screen({world.location})"
        sections = {
            "Current Screen State Analysis": f"The screen shows {screen.beacon}.",
            "State Description": screen.description or screen.beacon,
            "Predicted Next State": self._predict(expect),
            "App Inference": world.foreground_app,
            "State Beacon": screen.beacon,
        }
        if "### Post-condition of Current State ###" in prompt:
            gate = " ".join(f"@{n}({a})" for n, a in conditions.extract(expect) if n in ("screen", "app"))
            sections["Post-condition of Current State"] = f"The subtask is complete. {expect}"
            sections["Pre-condition of Next State"] = f"The expected screen is showing. {gate}".strip()
        return serialize_sections(sections)

    def _predict(self, expect: str) -> str:
        for name, arg in conditions.extract(expect):
            if name == "screen":
                app, _, sid = arg.partition("/")
                script = self.world.spec.app(app)
                if script is not None and sid in script.screens:
                    return script.screens[sid].description or script.screens[sid].beacon
                return self.world.spec.launcher.description
        return "The current subtask has been carried out on this screen."

    def _act(self, prompt: str) -> str:
        entry = self._entry(_field(prompt, "Current subtask"), prompt)
        action = entry["action"] if entry else "Done()"
        return serialize_sections({"Thought": "Follow the plan.", "Action": action})

    @staticmethod
    def _frames(req: ModelRequest) -> list[tuple[str, str]]:
        out = []
        for msg in req.messages:
            for part in msg.parts:
                if isinstance(part, ImagePart):
                    _, text = read_png_text(part.data)
                    out.append((text.get(FRAME_KEY, ""), text.get(ELEMENTS_KEY, "")))
        return out

    def _reflect(self, req: ModelRequest, prompt: str) -> str:
        frames = self._frames(req)
        unchanged = len(frames) == 2 and frames[0] == frames[1]
        subtask = _field(prompt, "Subtask")
        entry = self._entry(subtask, prompt, count=False)
        met = self.world.check(entry["expect"]) if entry and entry["expect"] else None
        if met is None:
            met = not unchanged
        if met:
            outcome, reason = "Success", ""
        elif unchanged:
            outcome, reason = "NoChange", "The screen did not react to the action."
        else:
            outcome, reason = "Fail", f"Unexpected screen: {self.world.screen.beacon}."
        return serialize_sections({"Outcome": outcome, "Reason": reason})

    def _recover(self, prompt: str) -> str:
        path = [ln[2:] for ln in _block(prompt, "Known path from the current screen to the target:")
                if ln.startswith("- ") and ln != "- (no recorded path)"]
        subtask = _field(prompt, "Failed subtask")
        steps = path + [subtask]
        return json.dumps({
            "goal": f"Return to {_field(prompt, 'Target beacon')} and retry the failed subtask.",
            "thought": "The target screen is a verified state on the recorded path.",
            "plan": steps,
            "current_subtask": steps[0],
        }, indent=2)

    def _mentor(self, prompt: str) -> str:
        apps = [a.strip() for a in _field(prompt, "Apps involved").split(",") if a.strip()]
        cues = [f"Open {a} with Open_App from the home screen before working in it." for a in apps]
        if _block(prompt, "Errors:") != ["(none)"]:
            cues.append("When a tap leaves the screen unchanged, tap the same element again.")
        actions = []
        for line in _block(prompt, "Action history:"):
            m = _HISTORY.match(line.strip())
            if m and m.group("outcome") == "Success" and m.group("phase") != "recovery":
                actions.append(m.group("action"))
        seqs = [{"precondition": "The home screen is showing.",
                 "label": _field(prompt, "User instruction"), "actions": actions}] if actions else []
        return json.dumps({"guidance_cues": cues, "action_sequences": seqs}, indent=2)

    def send(self, req: ModelRequest) -> ModelResponse:
        prompt = req.prompt_text
        kind = req.tag.split(".")[0]
        if kind in ("plan", "replan"):
            text = self._judge(prompt) if ".judge" in req.tag else self._plan(req, prompt)
        elif kind == "state":
            text = self._state(prompt)
        elif kind == "actor":
            text = self._act(prompt)
        elif kind == "reflect":
            text = self._reflect(req, prompt)
        elif kind == "recover":
            text = self._recover(prompt)
        elif kind == "mentor":
            text = self._mentor(prompt)
        else:
            raise KeyError(f"oracle has no script for tag {req.tag!r}")
        return ModelResponse(text=text, backend=self.name)
