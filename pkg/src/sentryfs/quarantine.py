"""Copy-on-write write quarantine.

Untrusted mutations never touch the backing tree. The first mutation of a
file by a session clones it into a shadow; all further writes land in the
shadow until a human commits or discards the change. Every clone and every
resolution is a record in an append-only JSONL ledger, which is the source
of truth across restarts and crashes.

Ledger records (one JSON object per line, "v" is the record version):
  {"v":1,"rec":"change","change_id":...,"ts":...,"path":...,"actor":...,
   "kind":"content_write|truncate|new_file|rename|unlink|set_attr",
   "base_sha256":hex-or-null,"shadow":name-or-null,"detail":{...}}
  {"v":1,"rec":"amend","change_id":...,"ts":...,"path":new-path}
  {"v":1,"rec":"resolve","change_id":...,"ts":...,"action":"commit|discard"}
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import (
    AlreadyResolved,
    NotFound,
    ShadowMissing,
    ShadowStoreFull,
    StaleBase,
    StateCorrupt,
)

CHANGE_KINDS = frozenset({
    "content_write", "truncate", "new_file", "rename", "unlink", "set_attr",
})
# kinds whose payload is the shadow file's bytes
CONTENT_KINDS = frozenset({"content_write", "truncate", "new_file"})


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class PendingChange:
    change_id: str
    path: str  # backing-relative path the change applies to
    actor: str
    kind: str
    base_sha256: Optional[str]  # None for new_file
    shadow: Optional[str]  # file name under shadows/, None for metadata kinds
    created_ts: float
    detail: dict = field(default_factory=dict)  # rename dst, set_attr mtime

    def to_record(self) -> dict:
        return {
            "v": 1, "rec": "change", "change_id": self.change_id,
            "ts": self.created_ts, "path": self.path, "actor": self.actor,
            "kind": self.kind, "base_sha256": self.base_sha256,
            "shadow": self.shadow, "detail": self.detail,
        }


class QuarantineStore:
    """Shadow files plus the change ledger, with crash recovery on open."""

    def __init__(
        self,
        state_dir: str,
        max_bytes: Optional[int] = None,
        clock: Callable[[], float] = time.time,
    ):
        self.state_dir = state_dir
        self.shadow_dir = os.path.join(state_dir, "shadows")
        self.ledger_path = os.path.join(state_dir, "ledger.log")
        self.max_bytes = max_bytes
        self._clock = clock
        os.makedirs(self.shadow_dir, exist_ok=True)
        self._pending: dict[str, PendingChange] = {}
        self._resolved: dict[str, str] = {}  # change_id -> action
        self._recover()
        self._fh = open(self.ledger_path, "a", encoding="utf-8")

    # --- ledger --------------------------------------------------------------

    def _append(self, record: dict) -> None:
        self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def _recover(self) -> None:
        if os.path.exists(self.ledger_path):
            with open(self.ledger_path, "r", encoding="utf-8") as fh:
                raw = fh.read()
            lines = raw.split("\n")
            torn = lines[-1] != ""
            if not torn:
                lines = lines[:-1]
            for i, line in enumerate(lines):
                try:
                    rec = json.loads(line)
                    self._replay(rec)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    if torn and i == len(lines) - 1:
                        break  # torn tail from a crash mid-append
                    raise StateCorrupt(f"bad ledger record at line {i + 1}")
        # shadows with no live change record are orphans from a crash
        live = {c.shadow for c in self._pending.values() if c.shadow}
        for name in os.listdir(self.shadow_dir):
            if name not in live:
                os.unlink(os.path.join(self.shadow_dir, name))
        # a change whose shadow vanished cannot be committed; fail loudly now
        for c in self._pending.values():
            if c.shadow and not os.path.exists(self._shadow_path(c)):
                raise StateCorrupt(f"shadow missing for pending change {c.change_id}")

    def _replay(self, rec: dict) -> None:
        if rec.get("v") != 1:
            raise ValueError("unknown ledger record version")
        r = rec["rec"]
        if r == "change":
            if rec["kind"] not in CHANGE_KINDS:
                raise ValueError("unknown change kind")
            self._pending[rec["change_id"]] = PendingChange(
                change_id=rec["change_id"], path=rec["path"], actor=rec["actor"],
                kind=rec["kind"], base_sha256=rec["base_sha256"],
                shadow=rec["shadow"], created_ts=rec["ts"],
                detail=rec.get("detail") or {},
            )
        elif r == "amend":
            change = self._pending[rec["change_id"]]
            if "path" in rec:
                change.path = rec["path"]
            if "detail" in rec:
                change.detail = rec["detail"]
        elif r == "resolve":
            if rec["action"] not in ("commit", "discard"):
                raise ValueError("unknown resolve action")
            change = self._pending.pop(rec["change_id"])
            self._resolved[change.change_id] = rec["action"]
        else:
            raise ValueError(f"unknown ledger record type {r!r}")

    # --- shadow store --------------------------------------------------------

    def _shadow_path(self, change: PendingChange) -> str:
        return os.path.join(self.shadow_dir, change.shadow)

    def _used_bytes(self) -> int:
        total = 0
        for c in self._pending.values():
            if c.shadow:
                p = self._shadow_path(c)
                if os.path.exists(p):
                    total += os.path.getsize(p)
        return total

    def _check_quota(self, extra: int) -> None:
        if self.max_bytes is not None and self._used_bytes() + extra > self.max_bytes:
            raise ShadowStoreFull(f"shadow store quota {self.max_bytes} exceeded")

    def open_change(
        self,
        path: str,
        actor: str,
        kind: str,
        base_bytes: Optional[bytes] = None,
        base_sha256: Optional[str] = None,
        detail: Optional[dict] = None,
    ) -> PendingChange:
        """Record a new pending change; for content kinds, seed the shadow
        with the base bytes (copy-on-write). One live change per
        (path, actor, kind-class) is the caller's invariant to keep."""
        if kind not in CHANGE_KINDS:
            raise ValueError(f"unknown change kind {kind!r}")
        change_id = uuid.uuid4().hex
        shadow = None
        if kind in CONTENT_KINDS:
            self._check_quota(len(base_bytes or b""))
            shadow = change_id
            with open(os.path.join(self.shadow_dir, shadow), "wb") as fh:
                fh.write(base_bytes or b"")
        change = PendingChange(
            change_id=change_id, path=path, actor=actor, kind=kind,
            base_sha256=base_sha256, shadow=shadow,
            created_ts=self._clock(), detail=detail or {},
        )
        self._append(change.to_record())
        self._pending[change_id] = change
        return change

    def read_shadow(self, change: PendingChange, offset: int = 0, size: int = -1) -> bytes:
        with open(self._shadow_path(change), "rb") as fh:
            fh.seek(offset)
            return fh.read(size)

    def shadow_size(self, change: PendingChange) -> int:
        return os.path.getsize(self._shadow_path(change))

    def write_shadow(self, change: PendingChange, offset: int, data: bytes) -> int:
        path = self._shadow_path(change)
        grow = max(0, offset + len(data) - os.path.getsize(path))
        self._check_quota(grow)
        with open(path, "r+b") as fh:
            size = os.path.getsize(path)
            if offset > size:
                fh.seek(size)
                fh.write(b"\x00" * (offset - size))
            fh.seek(offset)
            fh.write(data)
        return len(data)

    def truncate_shadow(self, change: PendingChange, size: int) -> None:
        self._check_quota(max(0, size - self.shadow_size(change)))
        with open(self._shadow_path(change), "r+b") as fh:
            fh.truncate(size)

    # --- queries -------------------------------------------------------------

    def pending(self) -> list[PendingChange]:
        return sorted(self._pending.values(), key=lambda c: c.created_ts)

    def get(self, change_id: str) -> PendingChange:
        if change_id in self._pending:
            return self._pending[change_id]
        if change_id in self._resolved:
            raise AlreadyResolved(f"change {change_id} already {self._resolved[change_id]}ed")
        raise NotFound(f"no change {change_id}")

    def resolution(self, change_id: str) -> Optional[str]:
        """"commit" or "discard" for a resolved change, None if live or unknown."""
        return self._resolved.get(change_id)

    def find(self, path: str, actor: str, kinds: Optional[frozenset] = None) -> Optional[PendingChange]:
        for c in self._pending.values():
            if c.path == path and c.actor == actor and (kinds is None or c.kind in kinds):
                return c
        return None

    def for_actor(self, actor: str) -> list[PendingChange]:
        return [c for c in self.pending() if c.actor == actor]

    # --- resolution ----------------------------------------------------------

    def amend(self, change: PendingChange, new_path: Optional[str] = None,
              new_detail: Optional[dict] = None) -> None:
        rec = {"v": 1, "rec": "amend", "change_id": change.change_id, "ts": self._clock()}
        if new_path is not None:
            rec["path"] = new_path
        if new_detail is not None:
            rec["detail"] = new_detail
        self._append(rec)
        if new_path is not None:
            change.path = new_path
        if new_detail is not None:
            change.detail = new_detail

    def verify_base(self, change: PendingChange, backing_path: str) -> None:
        """The hash guard: committing is only safe if the backing file still
        has the bytes the shadow was cloned from."""
        if change.kind == "new_file":
            if os.path.exists(backing_path):
                raise StaleBase(f"{change.path} appeared under a pending new file")
            return
        if not os.path.exists(backing_path):
            raise StaleBase(f"{change.path} vanished since the clone")
        if change.base_sha256 and hash_file(backing_path) != change.base_sha256:
            raise StaleBase(f"{change.path} changed since the clone")

    def resolve(self, change_id: str, action: str) -> PendingChange:
        """Mark a change resolved and drop its shadow. The caller applies the
        backing-tree effect of a commit before calling this."""
        assert action in ("commit", "discard")
        change = self.get(change_id)
        self._append({"v": 1, "rec": "resolve", "change_id": change_id,
                      "ts": self._clock(), "action": action})
        del self._pending[change_id]
        self._resolved[change_id] = action
        if change.shadow:
            sp = self._shadow_path(change)
            if os.path.exists(sp):
                os.unlink(sp)
        return change

    def close(self) -> None:
        self._fh.close()
