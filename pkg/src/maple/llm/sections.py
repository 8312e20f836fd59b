"""Parser for ``### Title ###`` sectioned model replies."""

from __future__ import annotations

import re
from typing import Iterable, Mapping

from ..errors import MalformedResponse

HEADER = re.compile(r"^[ \t]*###[ \t]*(?P<title>[^#\n]*?)[ \t]*###[ \t]*$", re.MULTILINE)


def parse_sections(text: str, required: Iterable[str]) -> dict[str, str]:
    required = list(required)
    if not required:
        raise ValueError("at least one required header must be named")
    sections: dict[str, str] = {}
    matches = list(HEADER.finditer(text or ""))
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        title = m.group("title").strip()
        if title and title not in sections:
            sections[title] = text[m.end():end].strip()
    missing = [h for h in required if h not in sections]
    if missing:
        raise MalformedResponse(missing, text)
    return sections


def serialize_sections(sections: Mapping[str, str]) -> str:
    return "\n\n".join(f"### {title} ###\n{body}" for title, body in sections.items()) + "\n"
