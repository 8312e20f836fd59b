"""Screen parsing: screenshot in, ordered (element, coordinate) list out.

Two perceivers share one contract. :class:`MockPerceiver` reads the ground
truth the simulator embeds in its frames. :class:`ServicePerceiver` posts the
screenshot to a remote OCR/grounding service:

request::

    POST <url>
    {"image": "<base64 PNG>", "media_type": "image/png"}

response::

    {"screen_size": [w, h],
     "elements": [{"kind": "text"|"icon", "content": str,
                   "bounds": [l, t, r, b], "confidence": float,
                   "region": optional str}]}
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import httpx

from .errors import BadImage, ServiceUnavailable
from .sim.render import ELEMENTS_KEY, read_png_text


@dataclass(frozen=True)
class ScreenElement:
    kind: str
    content: str
    bounds: tuple[int, int, int, int]
    confidence: float = 1.0

    def __post_init__(self):
        l, t, r, b = self.bounds
        if not (l < r and t < b):
            raise ValueError(f"bounds {self.bounds} are not well ordered")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.kind not in ("text", "icon"):
            raise ValueError(f"unknown element kind {self.kind!r}")

    @property
    def center(self) -> tuple[int, int]:
        l, t, r, b = self.bounds
        return ((l + r) // 2, (t + b) // 2)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "content": self.content, "bounds": list(self.bounds),
                "center": list(self.center), "confidence": self.confidence}


@dataclass(frozen=True)
class PerceptionResult:
    elements: tuple[ScreenElement, ...]
    screen_size: tuple[int, int]
    source: str
    screenshot_ref: str

    @property
    def digest(self) -> str:
        """Identity of the perceived content, independent of the raw image bytes."""
        payload = json.dumps([[e.kind, e.content, list(e.bounds)] for e in self.elements]
                             + [list(self.screen_size)], separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def listing(self) -> str:
        if not self.elements:
            return "(no elements detected)"
        return "\n".join(f"[{i}] {e.kind} \"{e.content}\" at ({e.center[0]}, {e.center[1]})"
                         for i, e in enumerate(self.elements))


def _order(elements) -> tuple[ScreenElement, ...]:
    return tuple(sorted(elements, key=lambda e: (e.bounds[1], e.bounds[0])))


def _clip(raw: dict, size: tuple[int, int]) -> Optional[ScreenElement]:
    w, h = size
    l, t, r, b = (int(v) for v in raw["bounds"])
    l, t, r, b = max(0, l), max(0, t), min(w, r), min(h, b)
    if l >= r or t >= b:
        return None
    conf = float(raw.get("confidence", 1.0))
    return ScreenElement(raw.get("kind", "text"), str(raw.get("content", "")), (l, t, r, b),
                         min(1.0, max(0.0, conf)))


def _image_size(screenshot: bytes) -> tuple[tuple[int, int], dict]:
    try:
        return read_png_text(screenshot)
    except ValueError as exc:
        raise BadImage(str(exc)) from exc


class MockPerceiver:
    """Ground-truth perceiver for simulator frames; pure function of the image."""

    source = "mock"

    def perceive(self, screenshot: bytes) -> PerceptionResult:
        size, text = _image_size(screenshot)
        raw = json.loads(text.get(ELEMENTS_KEY, "[]"))
        elements = [e for e in (_clip(r, size) for r in raw) if e is not None]
        return PerceptionResult(_order(elements), size, self.source,
                                hashlib.sha256(screenshot).hexdigest())


class ServicePerceiver:
    source = "service"

    def __init__(self, url: str, transport: Optional[httpx.BaseTransport] = None, timeout: float = 60.0):
        self.url = url
        self.client = httpx.Client(transport=transport, timeout=timeout)

    def perceive(self, screenshot: bytes) -> PerceptionResult:
        size, _ = _image_size(screenshot)
        try:
            r = self.client.post(self.url, json={
                "image": base64.b64encode(screenshot).decode("ascii"),
                "media_type": "image/png",
            })
        except httpx.TransportError as exc:
            raise ServiceUnavailable(repr(exc)) from exc
        if r.status_code != 200:
            raise ServiceUnavailable(f"perception service returned HTTP {r.status_code}")
        try:
            body = r.json()
            size = tuple(body.get("screen_size", size))
            elements = [e for e in (_clip(raw, size) for raw in body["elements"]) if e is not None]
        except (ValueError, KeyError, TypeError) as exc:
            raise ServiceUnavailable(f"malformed perception reply: {exc}") from exc
        return PerceptionResult(_order(elements), size, self.source,
                                hashlib.sha256(screenshot).hexdigest())


def locate(p: PerceptionResult, query: str) -> Optional[ScreenElement]:
    """Exact (case-insensitive) content match first, else best substring match."""
    q = query.strip().casefold()
    if not q:
        return None
    exact = [e for e in p.elements if e.content.strip().casefold() == q]
    if exact:
        return max(exact, key=lambda e: e.confidence)
    partial = [e for e in p.elements if q in e.content.casefold()]
    if partial:
        return max(partial, key=lambda e: e.confidence)
    return None
