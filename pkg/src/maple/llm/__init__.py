from .gateway import Backend, Gateway, RetryPolicy, TranscriptEntry
from .replay import RecordingBackend, ReplayArchive, ReplayBackend
from .sections import parse_sections, serialize_sections
from .types import ImagePart, Message, ModelRequest, ModelResponse, TextPart, Usage

__all__ = [
    "Backend",
    "Gateway",
    "ImagePart",
    "Message",
    "ModelRequest",
    "ModelResponse",
    "RecordingBackend",
    "ReplayArchive",
    "ReplayBackend",
    "RetryPolicy",
    "TextPart",
    "TranscriptEntry",
    "Usage",
    "parse_sections",
    "serialize_sections",
]
