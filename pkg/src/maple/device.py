"""Executes atomic actions on a real handset (ADB) or on the simulator."""

from __future__ import annotations

import json
import logging
import os
import re
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .actions import (
    AtomicAction, Back, Enter, Home, OpenApp, Swipe, SwitchApp, Tap, Type, Wait,
)
from .clock import SimClock, SystemClock
from .errors import DeviceGone, InvalidCoordinates
from .sim.render import render

log = logging.getLogger(__name__)

WAIT_SECONDS = 10


@dataclass(frozen=True)
class DeviceObservation:
    screenshot: bytes
    foreground_app: Optional[str]
    timestamp: float

    def __post_init__(self):
        if not self.screenshot:
            raise ValueError("empty screenshot")


class Device(Protocol):
    screen_size: tuple[int, int]

    def execute(self, action: AtomicAction) -> None: ...

    def observe(self) -> DeviceObservation: ...


def _check_bounds(action: AtomicAction, size: tuple[int, int]) -> None:
    w, h = size
    points = []
    if isinstance(action, Tap):
        points = [(action.x, action.y)]
    elif isinstance(action, Swipe):
        points = [(action.x1, action.y1), (action.x2, action.y2)]
    for x, y in points:
        if not (0 <= x < w and 0 <= y < h):
            raise InvalidCoordinates(f"({x}, {y}) outside the {w}x{h} screen")


class SimDevice:
    def __init__(self, world, clock=None):
        self.world = world
        self.clock = clock or SimClock()
        self.screen_size = world.spec.screen_size

    def execute(self, action: AtomicAction) -> None:
        _check_bounds(action, self.screen_size)
        if isinstance(action, Wait):
            self.clock.sleep(WAIT_SECONDS)
        self.world.step(action)

    def observe(self) -> DeviceObservation:
        png, _ = render(self.world)
        return DeviceObservation(png, self.world.foreground_app, self.clock.now())

    def check(self, condition: str):
        return self.world.check(condition)


class AdbTransport(Protocol):
    def run(self, args: Sequence[str]) -> bytes: ...


class SubprocessAdb:
    """Runs the ``adb`` executable."""

    def __init__(self, timeout: float = 30.0):
        self.timeout = timeout

    def run(self, args: Sequence[str]) -> bytes:
        try:
            proc = subprocess.run(list(args), capture_output=True, timeout=self.timeout)
        except FileNotFoundError as exc:
            raise DeviceGone("adb executable not found") from exc
        except subprocess.TimeoutExpired as exc:
            raise DeviceGone(f"adb timed out: {' '.join(args)}") from exc
        if proc.returncode != 0:
            err = proc.stderr.decode("utf-8", "replace").strip()
            raise DeviceGone(err or f"adb exited with {proc.returncode}")
        return proc.stdout


_TEXT_SPECIAL = re.compile(r"([()<>|;&*\\~\"'`$!?#])")


def escape_input_text(text: str) -> str:
    """Escape text for ``adb shell input text``; spaces become ``%s``."""
    return _TEXT_SPECIAL.sub(r"\\\1", text).replace(" ", "%s")


KEYCODES = {"enter": 66, "back": 4, "home": 3, "switch_app": 187}


class AdbDevice:
    def __init__(
        self,
        serial: Optional[str] = None,
        transport: Optional[AdbTransport] = None,
        packages: Optional[dict[str, str]] = None,
        clock=None,
        settle: float = 2.0,
        screen_size: Optional[tuple[int, int]] = None,
    ):
        self.serial = serial if serial is not None else os.environ.get("MAPLE_ADB_SERIAL")
        self.transport = transport or SubprocessAdb()
        packages = packages or {}
        self.packages = {k.casefold(): v for k, v in packages.items()}
        self._names = {v: k for k, v in packages.items()}
        self.clock = clock or SystemClock()
        self.settle = settle
        self._size = screen_size

    @classmethod
    def with_package_file(cls, path, **kwargs) -> "AdbDevice":
        return cls(packages=json.loads(Path(path).read_text(encoding="utf-8")), **kwargs)

    def _base(self) -> list[str]:
        return ["adb", "-s", self.serial] if self.serial else ["adb"]

    def _shell(self, *args: str) -> bytes:
        return self.transport.run(self._base() + ["shell", *args])

    @property
    def screen_size(self) -> tuple[int, int]:
        if self._size is None:
            out = self._shell("wm", "size").decode("utf-8", "replace")
            m = re.search(r"(\d+)x(\d+)", out)
            if not m:
                raise DeviceGone(f"cannot read screen size from {out!r}")
            self._size = (int(m.group(1)), int(m.group(2)))
        return self._size

    def commands_for(self, action: AtomicAction) -> list[list[str]]:
        base = self._base()
        if isinstance(action, Tap):
            return [base + ["shell", "input", "tap", str(action.x), str(action.y)]]
        if isinstance(action, Type):
            return [base + ["shell", "input", "text", escape_input_text(action.text)]]
        if isinstance(action, Swipe):
            return [base + ["shell", "input", "swipe", str(action.x1), str(action.y1),
                            str(action.x2), str(action.y2), "300"]]
        if isinstance(action, OpenApp):
            package = self.packages.get(action.name.casefold(), action.name)
            return [base + ["shell", "monkey", "-p", package, "-c",
                            "android.intent.category.LAUNCHER", "1"]]
        if isinstance(action, (Enter, Back, Home, SwitchApp)):
            return [base + ["shell", "input", "keyevent", str(KEYCODES[action.kind])]]
        return []

    def execute(self, action: AtomicAction) -> None:
        _check_bounds(action, self.screen_size)
        if isinstance(action, Wait):
            self.clock.sleep(WAIT_SECONDS)
            return
        for cmd in self.commands_for(action):
            self.transport.run(cmd)
        if self.settle:
            self.clock.sleep(self.settle)

    def foreground_app(self) -> Optional[str]:
        out = self._shell("dumpsys", "window").decode("utf-8", "replace")
        m = re.search(r"mCurrentFocus=\S+\s+\S+\s+([\w.]+)/", out)
        if not m:
            return None
        return self._names.get(m.group(1), m.group(1))

    def observe(self) -> DeviceObservation:
        shot = self.transport.run(self._base() + ["exec-out", "screencap", "-p"])
        if not shot:
            raise DeviceGone("empty screencap")
        return DeviceObservation(shot, self.foreground_app(), self.clock.now())
