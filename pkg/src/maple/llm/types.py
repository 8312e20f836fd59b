from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    media_type: str = "image/png"

    def __post_init__(self):
        if not self.data:
            raise ValueError("image parts must carry bytes")

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.data).hexdigest()

    def b64(self) -> str:
        return base64.b64encode(self.data).decode("ascii")


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[Part, ...]

    @classmethod
    def user(cls, *parts: Union[str, Part]) -> "Message":
        return cls("user", tuple(TextPart(p) if isinstance(p, str) else p for p in parts))

    @classmethod
    def system(cls, text: str) -> "Message":
        return cls("system", (TextPart(text),))

    @property
    def text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))


@dataclass(frozen=True)
class ModelRequest:
    messages: tuple[Message, ...]
    tag: str = ""
    temperature: float = 0.0
    max_output: int = 2048

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("a request needs at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")

    def canonical(self) -> dict:
        """Content used for replay keying; images are reduced to their digest."""
        msgs = []
        for m in self.messages:
            parts = []
            for p in m.parts:
                if isinstance(p, TextPart):
                    parts.append({"text": p.text})
                else:
                    parts.append({"image": p.digest, "media_type": p.media_type})
            msgs.append({"role": m.role, "parts": parts})
        return {"messages": msgs, "temperature": self.temperature, "max_output": self.max_output}

    @property
    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def key(self) -> str:
        return f"{self.tag}:{self.digest}"

    @property
    def prompt_text(self) -> str:
        return "\n".join(m.text for m in self.messages)


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0


@dataclass(frozen=True)
class ModelResponse:
    text: str
    backend: str
    latency: float = 0.0
    usage: Optional[Usage] = field(default=None)
