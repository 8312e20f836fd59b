"""Exception hierarchy shared across the framework."""

from __future__ import annotations


class MapleError(Exception):
    """Base class for every error raised by this package."""


# fsm


class EmptyKey(MapleError, ValueError):
    pass


class AppMismatch(MapleError, ValueError):
    pass


class UnknownState(MapleError, KeyError):
    def __init__(self, state_id: str):
        super().__init__(state_id)
        self.state_id = state_id

    def __str__(self) -> str:
        return f"unknown state {self.state_id}"


class UnsupportedFormat(MapleError, ValueError):
    pass


# llm gateway


class GatewayError(MapleError):
    pass


class Transport(GatewayError):
    def __init__(self, detail: str, *, transient: bool = True):
        super().__init__(detail)
        self.detail = detail
        self.transient = transient


class ReplayMiss(GatewayError, KeyError):
    def __init__(self, key: str):
        super().__init__(key)
        self.key = key

    def __str__(self) -> str:
        return f"replay archive has no entry for {self.key}"


class AuthMissing(GatewayError):
    pass


class MalformedResponse(MapleError, ValueError):
    def __init__(self, missing: list[str], text: str = ""):
        self.missing = list(missing)
        self.text = text
        super().__init__("response is missing sections: " + ", ".join(self.missing))


# perception


class BadImage(MapleError, ValueError):
    pass


class ServiceUnavailable(MapleError):
    pass


# device


class DeviceGone(MapleError):
    pass


class InvalidCoordinates(MapleError, ValueError):
    pass


# agents


class AllCandidatesMalformed(MapleError):
    pass


class UnparsableJudgment(MapleError, ValueError):
    pass


class NoActionParsed(MapleError, ValueError):
    pass


class ElementNotFound(MapleError, LookupError):
    pass


class UnparsableVerdict(MapleError, ValueError):
    pass


class UnparsableRecovery(MapleError, ValueError):
    pass


# simulation / evaluation


class SchemaError(MapleError, ValueError):
    def __init__(self, path: str, detail: str = ""):
        self.path = path
        msg = path if not detail else f"{path}: {detail}"
        super().__init__(msg)


class DanglingScreen(MapleError, ValueError):
    pass


class MissingPredicate(MapleError, ValueError):
    def __init__(self, index: int):
        super().__init__(f"rubric {index} has no machine predicate")
        self.index = index


class EmptyReference(MapleError, ValueError):
    pass
