"""Backend-agnostic model access with retries, ordered fan-out and a transcript."""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Union

from ..errors import GatewayError, Transport
from .types import ModelRequest, ModelResponse

log = logging.getLogger(__name__)


class Backend(Protocol):
    name: str

    def send(self, req: ModelRequest) -> ModelResponse: ...


@dataclass(frozen=True)
class RetryPolicy:
    retries: int = 3
    delays: tuple[float, ...] = (1.0, 2.0, 4.0)

    def delay(self, attempt: int) -> float:
        if attempt < len(self.delays):
            return self.delays[attempt]
        return self.delays[-1] * 2 ** (attempt - len(self.delays) + 1)


@dataclass(frozen=True)
class TranscriptEntry:
    tag: str
    digest: str
    text: Optional[str]
    error: Optional[str] = None


@dataclass
class Gateway:
    backend: Backend
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    max_in_flight: int = 5
    sleep: Callable[[float], None] = time.sleep
    clock: Callable[[], float] = time.monotonic
    transcript: list[TranscriptEntry] = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    def _send(self, req: ModelRequest) -> ModelResponse:
        attempt = 0
        while True:
            start = self.clock()
            try:
                resp = self.backend.send(req)
            except Transport as exc:
                if not exc.transient or attempt >= self.retry.retries:
                    raise
                wait = self.retry.delay(attempt)
                log.warning("transient failure on %s (%s); retry %d in %.1fs",
                            req.tag, exc.detail, attempt + 1, wait)
                self.sleep(wait)
                attempt += 1
                continue
            if resp.latency:
                return resp
            return ModelResponse(resp.text, resp.backend, self.clock() - start, resp.usage)

    def _log(self, req: ModelRequest, outcome: Union[ModelResponse, Exception]) -> None:
        if isinstance(outcome, ModelResponse):
            entry = TranscriptEntry(req.tag, req.digest, outcome.text)
        else:
            entry = TranscriptEntry(req.tag, req.digest, None, f"{type(outcome).__name__}: {outcome}")
        with self._lock:
            self.transcript.append(entry)

    def complete(self, req: ModelRequest) -> ModelResponse:
        try:
            resp = self._send(req)
        except Exception as exc:
            self._log(req, exc)
            raise
        self._log(req, resp)
        return resp

    def complete_many(self, reqs: list[ModelRequest]) -> list[Union[ModelResponse, GatewayError]]:
        """Issue requests concurrently; slot ``i`` of the result answers ``reqs[i]``.

        A failed slot holds its exception instead of a response, siblings are
        unaffected. Transcript entries are appended in request order.
        """
        if not reqs:
            raise ValueError("complete_many needs at least one request")
        results: list[Union[ModelResponse, GatewayError]] = [None] * len(reqs)  # type: ignore[list-item]

        def run(i: int) -> None:
            try:
                results[i] = self._send(reqs[i])
            except GatewayError as exc:
                results[i] = exc

        workers = max(1, min(self.max_in_flight, len(reqs)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(len(reqs))))
        for req, outcome in zip(reqs, results):
            self._log(req, outcome)
        return results

    def calls(self, prefix: str = "") -> list[TranscriptEntry]:
        return [e for e in self.transcript if e.tag.startswith(prefix)]
