"""Record/replay archive: one JSON file per (tag, request digest) key.

File schema (version 1)::

    {"version": 1,
     "key": {"tag": "...", "digest": "<sha256 of canonical request>"},
     "request": <ModelRequest.canonical()>,
     "response": {"text": "...", "backend": "..."}}
"""

from __future__ import annotations

import json
import re
import threading
from pathlib import Path

from ..errors import GatewayError, ReplayMiss
from .types import ModelRequest, ModelResponse

ARCHIVE_VERSION = 1
_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


class ReplayArchive:
    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, req: ModelRequest) -> Path:
        tag = _UNSAFE.sub("_", req.tag) or "untagged"
        return self.root / f"{tag}__{req.digest}.json"

    def __contains__(self, req: ModelRequest) -> bool:
        return self.path_for(req).is_file()

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*.json")) if self.root.is_dir() else 0

    def load(self, req: ModelRequest) -> dict:
        path = self.path_for(req)
        if not path.is_file():
            raise ReplayMiss(req.key)
        entry = json.loads(path.read_text(encoding="utf-8"))
        if entry.get("version") != ARCHIVE_VERSION:
            raise GatewayError(f"{path.name}: unsupported archive version {entry.get('version')!r}")
        return entry

    def store(self, req: ModelRequest, resp: ModelResponse) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.path_for(req)
        entry = {
            "version": ARCHIVE_VERSION,
            "key": {"tag": req.tag, "digest": req.digest},
            "request": req.canonical(),
            "response": {"text": resp.text, "backend": resp.backend},
        }
        if path.is_file():
            old = json.loads(path.read_text(encoding="utf-8"))
            if old["response"]["text"] != resp.text:
                raise GatewayError(f"conflicting re-record for {req.key}")
            return path
        path.write_text(json.dumps(entry, indent=1, sort_keys=True, ensure_ascii=False) + "\n",
                        encoding="utf-8")
        return path


class ReplayBackend:
    """Serves archived responses; never touches the network."""

    name = "replay"

    def __init__(self, archive: ReplayArchive):
        self.archive = archive

    def send(self, req: ModelRequest) -> ModelResponse:
        entry = self.archive.load(req)
        return ModelResponse(text=entry["response"]["text"], backend=f"replay:{entry['response']['backend']}")


class RecordingBackend:
    """Wraps another backend and archives every successful exchange."""

    def __init__(self, inner, archive: ReplayArchive):
        self.inner = inner
        self.archive = archive
        self.name = getattr(inner, "name", "unknown")
        self._lock = threading.Lock()

    def send(self, req: ModelRequest) -> ModelResponse:
        resp = self.inner.send(req)
        with self._lock:
            self.archive.store(req, resp)
        return resp
