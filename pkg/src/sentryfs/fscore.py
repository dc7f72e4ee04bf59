"""The guarded filesystem.

All file operations offered to applications go through this layer. Reads
are passthrough; every mutation is diverted into the write quarantine, so
the backing tree never changes until a human approves the change. Each
caller is a session, identified by its actor token; a session observes its
own pending mutations (its writes read back, its renames and deletes are
visible in listings) while the backing tree and every other session stay
untouched. Mutating a decoy raises an alert with score 1.0.

Management operations (planting decoys, freshening metadata, approving or
discarding changes) are separate methods that write the backing tree
directly and log events under the "sentryd" actor; they are not reachable
through the fs_* surface.
"""

from __future__ import annotations

import hashlib
import json
import os
import posixpath
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import (
    BackingMissing,
    HandleClosed,
    NotADirectory,
    NotFound,
    PathEscape,
    SessionKilled,
    StaleBase,
    Unsupported,
)
from .events import EventLog
from .fstypes import DirEntry, OpenMode
from .quarantine import CONTENT_KINDS, PendingChange, QuarantineStore, hash_file, sha256_hex
from .scoring import (
    DEFAULT_EXTENSION_BLOCKLIST,
    DEFAULT_MODEL,
    ScoreModel,
    SessionTracker,
    header_matches,
    shannon_entropy,
)

SYSTEM_ACTOR = "sentryd"


@dataclass(frozen=True)
class GuardConfig:
    kill_session_on_alert: bool = False
    max_shadow_bytes: Optional[int] = None
    preview_bytes: int = 4096
    model: ScoreModel = DEFAULT_MODEL
    ext_blocklist: tuple = DEFAULT_EXTENSION_BLOCKLIST


@dataclass
class Handle:
    handle_id: str
    path: str  # session-view path
    mode: OpenMode
    actor: str
    closed: bool = False


@dataclass
class _ViewEntry:
    """Where a session-view path gets its bytes from."""
    real_path: Optional[str] = None  # backing path, None for session creations
    change: Optional[PendingChange] = None  # content/new_file change if cloned


def normalize_path(path: str) -> str:
    """Backing-relative, forward-slash, no escapes. '' is the root."""
    if "\\" in path or "\x00" in path:
        raise PathEscape(f"bad path {path!r}")
    if path.startswith("/") or path.startswith("~"):
        raise PathEscape(f"path escapes the tree: {path!r}")
    norm = posixpath.normpath(path)
    if norm == ".":
        return ""
    if norm == ".." or norm.startswith("../"):
        raise PathEscape(f"path escapes the tree: {path!r}")
    return norm


class SentryFS:
    """Guarded view over one backing directory tree."""

    def __init__(
        self,
        backing_root: str,
        state_dir: str,
        config: Optional[GuardConfig] = None,
        clock: Callable[[], float] = time.time,
    ):
        self.backing_root = os.path.abspath(backing_root)
        self.state_dir = os.path.abspath(state_dir)
        if self.state_dir.startswith(self.backing_root + os.sep):
            raise ValueError("state_dir must live outside the protected tree")
        self.config = config or GuardConfig()
        self._clock = clock
        self._lock = threading.RLock()
        self._mounted = False
        self._handles: dict[str, Handle] = {}
        self._killed: set[str] = set()
        self._decoys: dict[str, dict] = {}
        self._dir_count = 1
        self.events: Optional[EventLog] = None
        self.quarantine: Optional[QuarantineStore] = None
        self.tracker: Optional[SessionTracker] = None

    # --- lifecycle -----------------------------------------------------------

    def mount(self) -> None:
        with self._lock:
            if not os.path.isdir(self.backing_root):
                raise BackingMissing(self.backing_root)
            os.makedirs(self.state_dir, exist_ok=True)
            self.events = EventLog(os.path.join(self.state_dir, "events.log"), clock=self._clock)
            self.quarantine = QuarantineStore(
                self.state_dir, max_bytes=self.config.max_shadow_bytes, clock=self._clock
            )
            self.tracker = SessionTracker(
                model=self.config.model,
                ext_blocklist=self.config.ext_blocklist,
                total_dirs=lambda: self._dir_count,
                clock=self._clock,
            )
            self._load_decoys()
            self._refresh_dir_count()
            self._heal_applied_commits()
            self._mounted = True
            self.events.append("Mount", path="", actor=SYSTEM_ACTOR,
                               detail={"root": self.backing_root, "dirs": self._dir_count})

    def unmount(self) -> None:
        with self._lock:
            self._mounted = False
            if self.events:
                self.events.close()
            if self.quarantine:
                self.quarantine.close()

    def _require_mounted(self) -> None:
        if not self._mounted:
            raise BackingMissing("filesystem not mounted")

    def _refresh_dir_count(self) -> None:
        count = 0
        for _root, _dirs, _files in os.walk(self.backing_root):
            count += 1
        self._dir_count = max(1, count)

    def _heal_applied_commits(self) -> None:
        """A crash between applying a commit to the backing tree and writing
        its resolve record leaves a pending change that is already applied.
        Detect those cases and finish the bookkeeping."""
        for change in list(self.quarantine.pending()):
            backing = self._backing(change.path)
            applied = False
            if change.kind in CONTENT_KINDS:
                if os.path.exists(backing):
                    shadow = self.quarantine.read_shadow(change)
                    applied = (
                        sha256_hex(shadow) == hash_file(backing)
                        and sha256_hex(shadow) != change.base_sha256
                    )
            elif change.kind == "unlink":
                applied = not os.path.exists(backing)
            elif change.kind == "rename":
                dst = self._backing(change.detail.get("dst", ""))
                applied = (
                    not os.path.exists(backing)
                    and os.path.exists(dst)
                    and change.base_sha256 is not None
                    and hash_file(dst) == change.base_sha256
                )
            if applied:
                self.quarantine.resolve(change.change_id, "commit")
                self.events.append("ChangeCommitted", path=change.path, actor=SYSTEM_ACTOR,
                                   detail={"change_id": change.change_id, "healed": True})

    # --- paths and decoys ------------------------------------------------------

    def _backing(self, path: str) -> str:
        return os.path.join(self.backing_root, path) if path else self.backing_root

    def _decoy_registry_path(self) -> str:
        return os.path.join(self.state_dir, "decoys.json")

    def _load_decoys(self) -> None:
        p = self._decoy_registry_path()
        if os.path.exists(p):
            with open(p, "r", encoding="utf-8") as fh:
                self._decoys = json.load(fh)

    def _save_decoys(self) -> None:
        tmp = self._decoy_registry_path() + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self._decoys, fh, indent=1, sort_keys=True)
        os.replace(tmp, self._decoy_registry_path())

    def register_decoy(self, path: str, meta: Optional[dict] = None) -> None:
        with self._lock:
            self._decoys[normalize_path(path)] = meta or {}
            self._save_decoys()

    def unregister_decoy(self, path: str) -> None:
        with self._lock:
            self._decoys.pop(normalize_path(path), None)
            self._save_decoys()

    def is_decoy(self, path: str) -> bool:
        return path in self._decoys

    def decoys(self) -> dict[str, dict]:
        with self._lock:
            return dict(self._decoys)

    # --- session view ----------------------------------------------------------

    def _session_changes(self, actor: str) -> list[PendingChange]:
        return self.quarantine.for_actor(actor)

    def _resolve_view(self, path: str, actor: str) -> Optional[_ViewEntry]:
        """Map a session-view path to its byte source, honoring the session's
        own pending renames, deletes and creations. None = not visible."""
        changes = self._session_changes(actor)
        hidden: set[str] = set()
        rename_dst: dict[str, str] = {}  # view dst -> real src
        for c in changes:
            if c.kind == "unlink":
                hidden.add(c.path)
            elif c.kind == "rename":
                hidden.add(c.path)
                rename_dst[c.detail["dst"]] = c.path
        real: Optional[str] = None
        if path in rename_dst:
            real = rename_dst[path]
        elif path not in hidden and os.path.isfile(self._backing(path)):
            real = path
        if real is not None:
            for c in changes:
                if c.kind in CONTENT_KINDS and c.kind != "new_file" and c.path == real:
                    return _ViewEntry(real_path=real, change=c)
            return _ViewEntry(real_path=real)
        for c in changes:
            if c.kind == "new_file" and c.path == path:
                return _ViewEntry(real_path=None, change=c)
        return None

    def _view_mtime(self, path: str, entry: _ViewEntry, actor: str) -> float:
        for c in self._session_changes(actor):
            if c.kind == "set_attr" and c.path == (entry.real_path or path):
                return float(c.detail["mtime"])
        if entry.change is not None:
            return entry.change.created_ts
        return os.path.getmtime(self._backing(entry.real_path))

    # --- guard plumbing ---------------------------------------------------------

    def _check_session(self, actor: str) -> None:
        self._require_mounted()
        if not actor or actor == SYSTEM_ACTOR:
            raise ValueError("fs operations need a non-system actor token")
        if actor in self._killed:
            raise SessionKilled(f"session {actor} was killed after an alert")

    def _alert_if_decoy(self, path: str, actor: str, op: str) -> None:
        """Mutation touching a registered decoy: raise the alarm. Score is
        conclusive (1.0). One alert per (session, decoy); repeat touches
        count in features but do not spam alerts."""
        real = path if path in self._decoys else None
        if real is None:
            return
        first = self.tracker.note_decoy_touch(actor, real)
        if first:
            self.events.append("AlertRaised", path=real, actor=actor,
                               detail={"score": 1.0, "op": op, "reason": "decoy_mutation"})
        if self.config.kill_session_on_alert:
            self._killed.add(actor)
            raise SessionKilled(f"session {actor} killed: decoy mutation on {real}")

    def _clone_for(self, path: str, actor: str, kind: str) -> PendingChange:
        """Copy-on-write: first mutation of a real file creates its shadow."""
        existing = self.quarantine.find(path, actor, CONTENT_KINDS - {"new_file"})
        if existing:
            return existing
        with open(self._backing(path), "rb") as fh:
            base = fh.read()
        change = self.quarantine.open_change(
            path, actor, kind,
            base_bytes=base, base_sha256=sha256_hex(base),
        )
        self.events.append("CloneCreated", path=path, actor=actor,
                           detail={"change_id": change.change_id, "base_size": len(base)})
        self.tracker.note_clone(actor, path, shannon_entropy(base))
        return change

    # --- fs surface (untrusted) ---------------------------------------------------

    def fs_open(self, path: str, mode, actor: str) -> Handle:
        """Open a file in the session's view. Mode semantics follow Python's
        own open(): "write" truncates an existing file (a mutation, so the
        file is cloned and decoy alerts fire here), "read_write" does not."""
        with self._lock:
            self._check_session(actor)
            path = normalize_path(path)
            if isinstance(mode, str):
                mode = OpenMode[mode.upper()]
            if not path or os.path.isdir(self._backing(path)):
                raise Unsupported("directories cannot be opened; use fs_readdir")
            entry = self._resolve_view(path, actor)
            if entry is None and not mode.writable:
                raise NotFound(path)
            handle = Handle(handle_id=uuid.uuid4().hex, path=path, mode=mode, actor=actor)
            self._handles[handle.handle_id] = handle
            self.events.append("Open", path=path, actor=actor,
                               detail={"mode": mode.name.lower()})
            if entry is None:
                parent = posixpath.dirname(path)
                if parent and not os.path.isdir(self._backing(parent)):
                    del self._handles[handle.handle_id]
                    raise NotFound(f"no directory {parent}")
                self.quarantine.open_change(path, actor, "new_file", base_bytes=b"")
                self.events.append("Create", path=path, actor=actor, detail={})
                self.tracker.note_mutation(actor, path)
            elif mode == OpenMode.WRITE:
                target = entry.real_path or path
                self._alert_if_decoy(target, actor, "open_truncate")
                change = entry.change
                if change is None:
                    change = self._clone_for(entry.real_path, actor, "content_write")
                self.quarantine.truncate_shadow(change, 0)
                self.tracker.note_mutation(actor, target)
            return handle

    def _live_handle(self, handle: Handle) -> Handle:
        h = self._handles.get(handle.handle_id)
        if h is None or h.closed:
            raise HandleClosed(handle.path)
        return h

    def fs_close(self, handle: Handle) -> None:
        with self._lock:
            h = self._handles.pop(handle.handle_id, None)
            if h:
                h.closed = True
            handle.closed = True

    def fs_read(self, handle: Handle, offset: int = 0, size: int = -1) -> bytes:
        with self._lock:
            h = self._live_handle(handle)
            self._check_session(h.actor)
            if h.mode == OpenMode.WRITE:
                raise Unsupported("handle is write-only")
            entry = self._resolve_view(h.path, h.actor)
            if entry is None:
                raise NotFound(h.path)
            if entry.change is not None:
                data = self.quarantine.read_shadow(entry.change, offset, size)
            else:
                with open(self._backing(entry.real_path), "rb") as fh:
                    fh.seek(offset)
                    data = fh.read(size)
            self.events.append("Read", path=h.path, actor=h.actor,
                               detail={"offset": offset, "size": len(data)})
            return data

    def fs_write(self, handle: Handle, offset: int, data: bytes) -> int:
        with self._lock:
            h = self._live_handle(handle)
            self._check_session(h.actor)
            if not h.mode.writable:
                raise Unsupported("handle is read-only")
            entry = self._resolve_view(h.path, h.actor)
            if entry is None:
                raise NotFound(h.path)
            target = entry.real_path or h.path
            self._alert_if_decoy(target, h.actor, "write")
            change = entry.change
            if change is None:
                change = self._clone_for(entry.real_path, h.actor, "content_write")
            written = self.quarantine.write_shadow(change, offset, data)
            entropy = shannon_entropy(data)
            header_ok = header_matches(target, data[:16]) if offset == 0 else None
            self.tracker.note_write(h.actor, target, len(data), entropy, header_ok)
            self.events.append("Write", path=h.path, actor=h.actor,
                               detail={"offset": offset, "size": len(data),
                                       "entropy": round(entropy, 3),
                                       "change_id": change.change_id})
            return written

    def fs_truncate(self, path: str, size: int, actor: str) -> None:
        with self._lock:
            self._check_session(actor)
            path = normalize_path(path)
            entry = self._resolve_view(path, actor)
            if entry is None:
                raise NotFound(path)
            target = entry.real_path or path
            self._alert_if_decoy(target, actor, "truncate")
            change = entry.change
            if change is None:
                change = self._clone_for(entry.real_path, actor, "truncate")
            self.quarantine.truncate_shadow(change, size)
            self.tracker.note_mutation(actor, target)
            self.events.append("Truncate", path=path, actor=actor,
                               detail={"size": size, "change_id": change.change_id})

    def fs_rename(self, src: str, dst: str, actor: str) -> None:
        with self._lock:
            self._check_session(actor)
            src = normalize_path(src)
            dst = normalize_path(dst)
            if not dst or os.path.isdir(self._backing(dst)):
                raise Unsupported(f"rename target {dst!r} is a directory")
            entry = self._resolve_view(src, actor)
            if entry is None:
                raise NotFound(src)
            dst_parent = posixpath.dirname(dst)
            if dst_parent and not os.path.isdir(self._backing(dst_parent)):
                raise NotFound(f"no directory {dst_parent}")
            target = entry.real_path or src
            self._alert_if_decoy(target, actor, "rename")
            self._alert_if_decoy(dst, actor, "rename_over")
            # a session rename silently replaces its own overlay at dst
            dst_entry = self._resolve_view(dst, actor)
            if dst_entry is not None and dst_entry.real_path is None:
                self.quarantine.resolve(dst_entry.change.change_id, "discard")
            if entry.real_path is not None:
                existing = self.quarantine.find(entry.real_path, actor, frozenset({"rename"}))
                if existing:
                    self.quarantine.amend(existing, new_detail={"dst": dst})
                else:
                    self.quarantine.open_change(
                        entry.real_path, actor, "rename",
                        base_sha256=hash_file(self._backing(entry.real_path)),
                        detail={"dst": dst},
                    )
            else:
                self.quarantine.amend(entry.change, new_path=dst)
            self.tracker.note_rename(actor, src, dst)
            self.events.append("Rename", path=src, actor=actor, detail={"dst": dst})

    def fs_unlink(self, path: str, actor: str) -> None:
        with self._lock:
            self._check_session(actor)
            path = normalize_path(path)
            entry = self._resolve_view(path, actor)
            if entry is None:
                raise NotFound(path)
            target = entry.real_path or path
            self._alert_if_decoy(target, actor, "unlink")
            if entry.real_path is None:
                # deleting its own unapproved creation cancels the change
                self.quarantine.resolve(entry.change.change_id, "discard")
                self.events.append("ChangeDiscarded", path=path, actor=actor,
                                   detail={"change_id": entry.change.change_id, "auto": True})
            else:
                if entry.change is not None:
                    self.quarantine.resolve(entry.change.change_id, "discard")
                    self.events.append("ChangeDiscarded", path=path, actor=actor,
                                       detail={"change_id": entry.change.change_id, "auto": True})
                if not self.quarantine.find(entry.real_path, actor, frozenset({"unlink"})):
                    self.quarantine.open_change(
                        entry.real_path, actor, "unlink",
                        base_sha256=hash_file(self._backing(entry.real_path)),
                    )
            self.tracker.note_mutation(actor, target)
            self.events.append("Unlink", path=path, actor=actor, detail={})

    def fs_set_times(self, path: str, mtime: float, actor: str) -> None:
        with self._lock:
            self._check_session(actor)
            path = normalize_path(path)
            entry = self._resolve_view(path, actor)
            if entry is None:
                raise NotFound(path)
            target = entry.real_path or path
            existing = self.quarantine.find(target, actor, frozenset({"set_attr"}))
            if existing:
                self.quarantine.amend(existing, new_detail={"mtime": mtime})
            else:
                base_sha = hash_file(self._backing(target)) if entry.real_path else None
                self.quarantine.open_change(target, actor, "set_attr",
                                            base_sha256=base_sha, detail={"mtime": mtime})
            self.tracker.note_mutation(actor, target)
            self.events.append("SetAttr", path=path, actor=actor, detail={"mtime": mtime})

    def fs_stat(self, path: str, actor: str) -> DirEntry:
        with self._lock:
            self._check_session(actor)
            path = normalize_path(path)
            backing = self._backing(path)
            if path == "" or os.path.isdir(backing):
                return DirEntry(name=posixpath.basename(path) or ".", size=0,
                                mtime=os.path.getmtime(backing), kind="dir")
            entry = self._resolve_view(path, actor)
            if entry is None:
                raise NotFound(path)
            if entry.change is not None:
                size = self.quarantine.shadow_size(entry.change)
            else:
                size = os.path.getsize(self._backing(entry.real_path))
            return DirEntry(name=posixpath.basename(path), size=size,
                            mtime=self._view_mtime(path, entry, actor), kind="file")

    def fs_readdir(self, path: str, actor: str) -> list[DirEntry]:
        with self._lock:
            self._check_session(actor)
            path = normalize_path(path)
            backing = self._backing(path)
            if not os.path.isdir(backing):
                if os.path.isfile(backing):
                    raise NotADirectory(path)
                raise NotFound(path)
            names: dict[str, None] = {}
            for name in os.listdir(backing):
                names[name] = None
            # apply the session's own overlay
            changes = self._session_changes(actor)
            for c in changes:
                c_parent, c_name = posixpath.split(c.path)
                if c.kind in ("unlink", "rename") and c_parent == path:
                    names.pop(c_name, None)
                if c.kind == "new_file" and c_parent == path:
                    names[c_name] = None
                if c.kind == "rename":
                    d_parent, d_name = posixpath.split(c.detail["dst"])
                    if d_parent == path:
                        names[d_name] = None
            out = []
            for name in sorted(names):
                child = f"{path}/{name}" if path else name
                if os.path.isdir(self._backing(child)):
                    out.append(DirEntry(name=name, size=0,
                                        mtime=os.path.getmtime(self._backing(child)), kind="dir"))
                    continue
                entry = self._resolve_view(child, actor)
                if entry is None:
                    continue
                if entry.change is not None:
                    size = self.quarantine.shadow_size(entry.change)
                else:
                    size = os.path.getsize(self._backing(entry.real_path))
                out.append(DirEntry(name=name, size=size,
                                    mtime=self._view_mtime(child, entry, actor), kind="file"))
            return out

    # --- management surface (trusted) ---------------------------------------------

    def write_trusted(self, path: str, content: bytes, mtime: Optional[float] = None) -> None:
        """Direct backing write used by the decoy planter."""
        with self._lock:
            self._require_mounted()
            path = normalize_path(path)
            backing = self._backing(path)
            tmp = backing + ".sentry-tmp"
            with open(tmp, "wb") as fh:
                fh.write(content)
            os.replace(tmp, backing)
            if mtime is not None:
                os.utime(backing, times=(mtime, mtime))
            self.events.append("Create", path=path, actor=SYSTEM_ACTOR,
                               detail={"size": len(content)})

    def set_times_trusted(self, path: str, mtime: float) -> None:
        with self._lock:
            self._require_mounted()
            path = normalize_path(path)
            os.utime(self._backing(path), times=(mtime, mtime))
            self.events.append("SetAttr", path=path, actor=SYSTEM_ACTOR,
                               detail={"mtime": mtime})

    def approve(self, change_id: str) -> PendingChange:
        """Hash-guarded atomic commit of one pending change."""
        with self._lock:
            self._require_mounted()
            change = self.quarantine.get(change_id)
            backing = self._backing(change.path)
            self.quarantine.verify_base(change, backing)
            if change.kind in CONTENT_KINDS:
                data = self.quarantine.read_shadow(change)
                tmp = backing + ".sentry-tmp"
                with open(tmp, "wb") as fh:
                    fh.write(data)
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, backing)
            elif change.kind == "rename":
                dst = self._backing(change.detail["dst"])
                os.replace(backing, dst)
                if change.path in self._decoys:
                    meta = self._decoys.pop(change.path)
                    self._decoys[change.detail["dst"]] = meta
                    self._save_decoys()
            elif change.kind == "unlink":
                os.unlink(backing)
                if change.path in self._decoys:
                    self._decoys.pop(change.path)
                    self._save_decoys()
            elif change.kind == "set_attr":
                mtime = float(change.detail["mtime"])
                os.utime(backing, times=(mtime, mtime))
            self.quarantine.resolve(change_id, "commit")
            self.events.append("ChangeCommitted", path=change.path, actor=SYSTEM_ACTOR,
                               detail={"change_id": change_id, "kind": change.kind})
            return change

    def discard(self, change_id: str) -> PendingChange:
        with self._lock:
            self._require_mounted()
            change = self.quarantine.resolve(change_id, "discard")
            self.events.append("ChangeDiscarded", path=change.path, actor=SYSTEM_ACTOR,
                               detail={"change_id": change_id, "kind": change.kind})
            return change

    # --- inspection -----------------------------------------------------------------

    def pending_changes(self) -> list[PendingChange]:
        with self._lock:
            self._require_mounted()
            return self.quarantine.pending()

    def change_preview(self, change_id: str) -> bytes:
        with self._lock:
            change = self.quarantine.get(change_id)
            if change.shadow is None:
                return b""
            return self.quarantine.read_shadow(change, 0, self.config.preview_bytes)

    def alerts(self) -> list:
        with self._lock:
            self._require_mounted()
            return [e for e in self.events.events_after(0, limit=10**9)
                    if e.kind == "AlertRaised"]

    def score(self, actor: str) -> dict:
        with self._lock:
            self._require_mounted()
            return self.tracker.snapshot(actor)

    def sessions(self) -> list[dict]:
        with self._lock:
            self._require_mounted()
            return [self.tracker.snapshot(a) for a in self.tracker.sessions()]

    def manifest(self) -> dict[str, str]:
        """SHA-256 of every file in the backing tree; the base-immutability
        witness used by the clone-safety checks."""
        with self._lock:
            out = {}
            for root, _dirs, files in os.walk(self.backing_root):
                for name in files:
                    full = os.path.join(root, name)
                    rel = os.path.relpath(full, self.backing_root).replace(os.sep, "/")
                    out[rel] = hash_file(full)
            return out

    def status(self) -> dict:
        with self._lock:
            self._require_mounted()
            return {
                "mounted": self._mounted,
                "root": self.backing_root,
                "decoys": len(self._decoys),
                "pending": len(self.quarantine.pending()),
                "sessions": len(self.tracker.sessions()),
                "alerts": sum(1 for e in self.events.events_after(0, limit=10**9)
                              if e.kind == "AlertRaised"),
                "last_seq": self.events.last_seq,
            }
