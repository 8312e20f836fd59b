"""Planner: n candidate plans fanned out in parallel, then one judge call."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from ..errors import AllCandidatesMalformed, MalformedResponse, UnparsableJudgment
from ..llm import Gateway, Message, ModelRequest, ModelResponse, parse_sections
from .knowledge import KnowledgeBase
from .prompts import context_block, render
from .types import Plan, PlanItem

log = logging.getLogger(__name__)

DEFAULT_RUBRIC = "\n".join([
    "- goal relevance: every step serves the user's request",
    "- execution efficiency: no unnecessary steps",
    "- robustness: steps are unambiguous and recoverable",
    "- clarity: each subtask names the app, control and text involved",
])

_ITEM = re.compile(r"^\s*\d+\s*[.)]\s*(?P<subtask>[^|]+?)\s*(?:\|\s*(?P<rationale>.*?))?\s*$")
_BEST = re.compile(r"best\s*[:=]\s*(-?\d+)", re.IGNORECASE)


def parse_plan(text: str, source: str = "fresh") -> Plan:
    sections = parse_sections(text, ["Plan"])
    items = []
    for line in sections["Plan"].splitlines():
        m = _ITEM.match(line)
        if m and m.group("subtask").strip():
            items.append(PlanItem(m.group("subtask").strip(), (m.group("rationale") or "").strip()))
    if not items:
        raise MalformedResponse(["Plan"], text)
    return Plan(tuple(items), source, sections.get("Intent", ""))


@dataclass
class Planner:
    gateway: Gateway
    n: int = 5
    temperature: float = 0.7

    def _fan_out(self, prompt: str, prefix: str, source: str, attempt: int) -> list[Plan]:
        suffix = "" if attempt == 0 else f".retry{attempt}"
        reqs = [ModelRequest((Message.user(prompt),), tag=f"{prefix}.candidate.{k}{suffix}",
                             temperature=self.temperature if self.n > 1 else 0.0)
                for k in range(1, self.n + 1)]
        plans = []
        for slot, out in enumerate(self.gateway.complete_many(reqs), 1):
            if not isinstance(out, ModelResponse):
                log.warning("candidate %d failed: %s", slot, out)
                continue
            try:
                plans.append(parse_plan(out.text, source))
            except MalformedResponse as exc:
                log.warning("candidate %d malformed: %s", slot, exc)
        return plans

    def plan(
        self,
        instruction: str,
        kb: Optional[KnowledgeBase] = None,
        apps: Sequence[str] = (),
        rubric: Optional[str] = None,
        revision: Optional[dict] = None,
    ) -> Plan:
        """Fresh plan, or a revised one when ``revision`` carries the current situation.

        ``revision`` keys: ``beacon``, ``app``, ``reason``, ``history``.
        """
        if not instruction.strip():
            raise ValueError("empty instruction")
        context = context_block(kb.render()) if kb is not None else ""
        if revision is None:
            prompt = render("planner", instruction=instruction, apps=", ".join(apps), context=context)
            prefix, source = "plan", "fresh"
        else:
            prompt = render("replan", instruction=instruction, apps=", ".join(apps), context=context,
                            **revision)
            prefix, source = "replan", "revised"
        candidates: list[Plan] = []
        for attempt in range(2):
            candidates = self._fan_out(prompt, prefix, source, attempt)
            if candidates:
                break
        if not candidates:
            raise AllCandidatesMalformed(f"no usable plan among {self.n} candidates, twice")
        best = self.judge(candidates, rubric or DEFAULT_RUBRIC, instruction, tag=f"{prefix}.judge")
        return candidates[best]

    def judge(self, candidates: Sequence[Plan], rubric: str, instruction: str = "",
              tag: str = "plan.judge") -> int:
        if not candidates:
            raise ValueError("nothing to judge")
        if len(candidates) == 1:
            return 0
        listing = "\n".join(f"Candidate {k}:\n{p.render()}\n" for k, p in enumerate(candidates))
        prompt = render("judge", instruction=instruction, rubric=rubric, candidates=listing)
        for attempt in range(2):
            req = ModelRequest((Message.user(prompt),), tag=tag if attempt == 0 else f"{tag}.retry")
            text = self.gateway.complete(req).text
            m = _BEST.search(text)
            if m and 0 <= int(m.group(1)) < len(candidates):
                return int(m.group(1))
            log.warning("unusable judgment %r", text[:80])
        raise UnparsableJudgment(f"no valid 'best: K' for {len(candidates)} candidates")
