"""Synthetic screenshots: flat coloured boxes, labels carried as PNG text chunks.

Besides the pixels, every frame embeds two ``tEXt`` chunks:

* ``maple:elements`` - JSON ground truth (kind, content, bounds) for the mock perceiver
* ``maple:frame``    - ``app/screen`` of the rendered screen
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib

import numpy as np

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
ELEMENTS_KEY = "maple:elements"
FRAME_KEY = "maple:frame"


def _chunk(kind: bytes, data: bytes) -> bytes:
    crc = zlib.crc32(kind + data) & 0xFFFFFFFF
    return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", crc)


def _color(text: str) -> tuple[int, int, int]:
    h = hashlib.md5(text.encode("utf-8")).digest()
    return (64 + h[0] % 160, 64 + h[1] % 160, 64 + h[2] % 160)


def encode_png(pixels: np.ndarray, text: dict[str, str]) -> bytes:
    height, width, _ = pixels.shape
    raw = np.zeros((height, width * 3 + 1), dtype=np.uint8)
    raw[:, 1:] = pixels.reshape(height, width * 3)
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    out = [PNG_SIGNATURE, _chunk(b"IHDR", ihdr)]
    for key in sorted(text):
        out.append(_chunk(b"tEXt", key.encode("latin-1") + b"\x00" + text[key].encode("latin-1")))
    out.append(_chunk(b"IDAT", zlib.compress(raw.tobytes(), 6)))
    out.append(_chunk(b"IEND", b""))
    return b"".join(out)


def read_png_text(data: bytes) -> tuple[tuple[int, int], dict[str, str]]:
    """Return ((width, height), text chunks). Raises ValueError for non-PNG input."""
    if not data.startswith(PNG_SIGNATURE):
        raise ValueError("not a PNG image")
    pos = len(PNG_SIGNATURE)
    size = None
    text: dict[str, str] = {}
    while pos + 8 <= len(data):
        length, kind = struct.unpack(">I4s", data[pos:pos + 8])
        body = data[pos + 8:pos + 8 + length]
        if len(body) != length:
            raise ValueError("truncated PNG chunk")
        if kind == b"IHDR":
            size = struct.unpack(">II", body[:8])
        elif kind == b"tEXt" and b"\x00" in body:
            key, _, value = body.partition(b"\x00")
            text[key.decode("latin-1")] = value.decode("latin-1")
        elif kind == b"IEND":
            break
        pos += 12 + length
    if size is None:
        raise ValueError("PNG without IHDR")
    return size, text


def render(world) -> tuple[bytes, list[dict]]:
    """Render the current screen of a :class:`SimWorld`.

    Returns the PNG bytes and the ground-truth element list.
    """
    width, height = world.spec.screen_size
    pixels = np.full((height, width, 3), 246, dtype=np.uint8)
    pixels[:48, :] = (40, 40, 48)
    elements = []
    for el, content in world.visible_elements():
        l, t, r, b = el.bounds
        pixels[t:b, l:r] = _color(f"{el.kind}:{content}")
        pixels[t:t + 2, l:r] = 20
        pixels[b - 2:b, l:r] = 20
        elements.append({"kind": el.kind, "content": content, "bounds": [l, t, r, b]})
    # ASCII-only JSON keeps the latin-1 text chunk lossless
    meta = {
        ELEMENTS_KEY: json.dumps(elements, ensure_ascii=True, separators=(",", ":")),
        FRAME_KEY: world.location.encode("ascii", "backslashreplace").decode("ascii"),
    }
    return encode_png(pixels, meta), elements
