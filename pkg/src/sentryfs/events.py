"""Append-only JSONL event log.

Every guarded filesystem operation lands here as one line of JSON with a
fixed key order, so the file is greppable and the byte stream is stable
for a given sequence of events. The log is the wire format consumed by
the scoring tracker, the daemon's long-poll feed, and the dashboard.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import StateCorrupt

KINDS = frozenset({
    "Mount",
    "Open",
    "Read",
    "Write",
    "Create",
    "Rename",
    "Unlink",
    "Truncate",
    "SetAttr",
    "AlertRaised",
    "CloneCreated",
    "ChangeCommitted",
    "ChangeDiscarded",
})

_KEY_ORDER = ("seq", "ts", "kind", "path", "actor", "detail")


@dataclass(frozen=True)
class Event:
    seq: int
    ts: float
    kind: str
    path: str
    actor: str
    detail: dict

    def to_dict(self) -> dict:
        # insertion order is the serialization order
        return {k: getattr(self, k) for k in _KEY_ORDER}


def _event_from_dict(d: dict) -> Event:
    return Event(
        seq=d["seq"], ts=d["ts"], kind=d["kind"],
        path=d["path"], actor=d["actor"], detail=d.get("detail") or {},
    )


class EventLog:
    """Thread-safe appender with replay on open and long-poll support.

    Crash tolerance: a torn final line (no newline, or invalid JSON) is
    dropped on load; garbage anywhere earlier raises StateCorrupt.
    """

    def __init__(self, log_path: str, clock: Callable[[], float] = time.time):
        self.log_path = log_path
        self._clock = clock
        self._cond = threading.Condition()
        self._listeners: list[Callable[[Event], None]] = []
        self._events: list[Event] = []
        self._load()
        self._fh = open(log_path, "a", encoding="utf-8")

    def _load(self) -> None:
        if not os.path.exists(self.log_path):
            return
        with open(self.log_path, "r", encoding="utf-8") as fh:
            raw = fh.read()
        lines = raw.split("\n")
        torn = lines and lines[-1] != ""
        if not torn:
            lines = lines[:-1]
        last_seq = 0
        for i, line in enumerate(lines):
            try:
                d = json.loads(line)
                ev = _event_from_dict(d)
            except (json.JSONDecodeError, KeyError, TypeError):
                if torn and i == len(lines) - 1:
                    break  # torn tail from a crash mid-append
                raise StateCorrupt(f"bad event record at line {i + 1} in {self.log_path}")
            if ev.seq != last_seq + 1 or ev.kind not in KINDS:
                raise StateCorrupt(f"bad event record at line {i + 1} in {self.log_path}")
            last_seq = ev.seq
            self._events.append(ev)

    # --- writing -------------------------------------------------------------

    def append(self, kind: str, path: str = "", actor: str = "", detail: Optional[dict] = None) -> Event:
        if kind not in KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._cond:
            ev = Event(
                seq=len(self._events) + 1,
                ts=self._clock(),
                kind=kind,
                path=path,
                actor=actor,
                detail=detail or {},
            )
            self._fh.write(json.dumps(ev.to_dict(), separators=(",", ":")) + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._events.append(ev)
            listeners = list(self._listeners)
            self._cond.notify_all()
        for fn in listeners:
            fn(ev)
        return ev

    # --- reading -------------------------------------------------------------

    @property
    def last_seq(self) -> int:
        with self._cond:
            return len(self._events)

    def events_after(self, after_seq: int = 0, limit: int = 500) -> list[Event]:
        if after_seq < 0:
            after_seq = 0
        with self._cond:
            return self._events[after_seq:after_seq + limit]

    def wait_for(self, after_seq: int, timeout: float, limit: int = 500) -> list[Event]:
        """Long-poll: return events past after_seq, blocking up to timeout
        seconds for the first one. Empty list on timeout."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while len(self._events) <= after_seq:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return []
                self._cond.wait(remaining)
            return self._events[after_seq:after_seq + limit]

    def add_listener(self, fn: Callable[[Event], None]) -> None:
        """Synchronous in-process observer, called after each append."""
        with self._cond:
            self._listeners.append(fn)

    def close(self) -> None:
        self._fh.close()
