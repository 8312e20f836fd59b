"""Live chat backends reached as JSON over HTTPS."""

from __future__ import annotations

import os
from typing import Optional

import httpx

from ..errors import AuthMissing, Transport
from .types import ImagePart, ModelRequest, ModelResponse, TextPart, Usage

KEY_ENV = {
    "openai": "MAPLE_OPENAI_KEY",
    "anthropic": "MAPLE_ANTHROPIC_KEY",
    "google": "MAPLE_GOOGLE_KEY",
}
DEFAULT_MODELS = {
    "openai": "gpt-4o-2024-11-20",
    "anthropic": "claude-3-5-sonnet-20241022",
    "google": "gemini-1.5-pro",
}


class HttpBackend:
    name = "http"
    url = ""

    def __init__(self, model: Optional[str] = None, api_key: Optional[str] = None,
                 transport: Optional[httpx.BaseTransport] = None, timeout: float = 120.0):
        self.model = model or DEFAULT_MODELS[self.name]
        self.api_key = api_key or os.environ.get(KEY_ENV[self.name])
        if not self.api_key:
            raise AuthMissing(f"set {KEY_ENV[self.name]} to use the {self.name} backend")
        self.client = httpx.Client(transport=transport, timeout=timeout)

    def _post(self, url: str, payload: dict, headers: dict) -> dict:
        try:
            r = self.client.post(url, json=payload, headers=headers)
        except httpx.TransportError as exc:
            raise Transport(f"{self.name}: {exc!r}") from exc
        if r.status_code == 429 or r.status_code >= 500:
            raise Transport(f"{self.name}: HTTP {r.status_code}")
        if r.status_code >= 400:
            raise Transport(f"{self.name}: HTTP {r.status_code}: {r.text[:200]}", transient=False)
        try:
            return r.json()
        except ValueError as exc:
            raise Transport(f"{self.name}: invalid JSON body", transient=False) from exc


class OpenAIBackend(HttpBackend):
    name = "openai"
    url = "https://api.openai.com/v1/chat/completions"

    def send(self, req: ModelRequest) -> ModelResponse:
        messages = []
        for m in req.messages:
            content = []
            for p in m.parts:
                if isinstance(p, TextPart):
                    content.append({"type": "text", "text": p.text})
                else:
                    content.append({"type": "image_url",
                                    "image_url": {"url": f"data:{p.media_type};base64,{p.b64()}"}})
            messages.append({"role": m.role, "content": content})
        body = self._post(self.url, {
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output,
        }, {"Authorization": f"Bearer {self.api_key}"})
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise Transport("openai: unexpected response shape", transient=False) from exc
        u = body.get("usage") or {}
        return ModelResponse(text, self.name, usage=Usage(u.get("prompt_tokens", 0), u.get("completion_tokens", 0)))


class AnthropicBackend(HttpBackend):
    name = "anthropic"
    url = "https://api.anthropic.com/v1/messages"

    def send(self, req: ModelRequest) -> ModelResponse:
        system = "\n".join(m.text for m in req.messages if m.role == "system")
        messages = []
        for m in req.messages:
            if m.role == "system":
                continue
            content = []
            for p in m.parts:
                if isinstance(p, TextPart):
                    content.append({"type": "text", "text": p.text})
                else:
                    content.append({"type": "image", "source": {
                        "type": "base64", "media_type": p.media_type, "data": p.b64()}})
            messages.append({"role": m.role, "content": content})
        payload = {
            "model": self.model,
            "max_tokens": req.max_output,
            "temperature": min(req.temperature, 1.0),
            "messages": messages,
        }
        if system:
            payload["system"] = system
        body = self._post(self.url, payload, {
            "x-api-key": self.api_key,
            "anthropic-version": "2023-06-01",
        })
        try:
            text = "".join(block["text"] for block in body["content"] if block.get("type") == "text")
        except (KeyError, TypeError) as exc:
            raise Transport("anthropic: unexpected response shape", transient=False) from exc
        u = body.get("usage") or {}
        return ModelResponse(text, self.name, usage=Usage(u.get("input_tokens", 0), u.get("output_tokens", 0)))


class GoogleBackend(HttpBackend):
    name = "google"
    url = "https://generativelanguage.googleapis.com/v1beta/models/{model}:generateContent"

    def send(self, req: ModelRequest) -> ModelResponse:
        contents = []
        system = "\n".join(m.text for m in req.messages if m.role == "system")
        for m in req.messages:
            if m.role == "system":
                continue
            parts = []
            for p in m.parts:
                if isinstance(p, ImagePart):
                    parts.append({"inline_data": {"mime_type": p.media_type, "data": p.b64()}})
                else:
                    parts.append({"text": p.text})
            contents.append({"role": "model" if m.role == "assistant" else "user", "parts": parts})
        payload = {
            "contents": contents,
            "generationConfig": {"temperature": req.temperature, "maxOutputTokens": req.max_output},
        }
        if system:
            payload["systemInstruction"] = {"parts": [{"text": system}]}
        body = self._post(self.url.format(model=self.model), payload, {"x-goog-api-key": self.api_key})
        try:
            parts = body["candidates"][0]["content"]["parts"]
            text = "".join(p.get("text", "") for p in parts)
        except (KeyError, IndexError, TypeError) as exc:
            raise Transport("google: unexpected response shape", transient=False) from exc
        u = body.get("usageMetadata") or {}
        return ModelResponse(text, self.name,
                             usage=Usage(u.get("promptTokenCount", 0), u.get("candidatesTokenCount", 0)))


LIVE_BACKENDS = {cls.name: cls for cls in (OpenAIBackend, AnthropicBackend, GoogleBackend)}


def live_backend(name: str, **kwargs) -> HttpBackend:
    try:
        cls = LIVE_BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown live backend {name!r}; choose from {sorted(LIVE_BACKENDS)}") from None
    return cls(**kwargs)
