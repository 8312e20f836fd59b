"""Prompt templates (``prompts/<name>.<version>.txt``) and shared prompt blocks."""

from __future__ import annotations

import functools
from importlib import resources
from string import Template
from typing import Iterable

from .toolbox import format_action
from .types import StepRecord

PROMPT_VERSION = "v1"


@functools.lru_cache(maxsize=None)
def template(name: str, version: str = PROMPT_VERSION) -> Template:
    text = resources.files(__package__).joinpath("prompts", f"{name}.{version}.txt").read_text("utf-8")
    return Template(text)


def render(name: str, **fields) -> str:
    return template(name).substitute(**{k: "" if v is None else v for k, v in fields.items()})


def history_block(steps: Iterable[StepRecord]) -> str:
    lines = [f"{s.index}. [{s.phase}] {s.subtask} => {format_action(s.action)} => {s.verdict.outcome.value}"
             for s in steps]
    return "\n".join(lines) if lines else "(none yet)"


def context_block(text: str) -> str:
    return f"\nKnowledge from earlier tasks:\n{text}\n" if text else ""
