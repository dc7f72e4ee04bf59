"""Shared virtual-filesystem domain types."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class FileClass(enum.Enum):
    REAL = "real"
    DECOY = "decoy"
    SHADOW = "shadow"


class OpenMode(enum.Enum):
    READ = "read"
    WRITE = "write"
    READ_WRITE = "read_write"

    @property
    def writable(self) -> bool:
        return self is not OpenMode.READ


@dataclass(frozen=True)
class ActorId:
    """Opaque identity of the writing process or session source.

    `trusted` comes solely from the configuration allowlist at the time
    the handle/session is opened.
    """
    token: str
    trusted: bool = False

    def __post_init__(self):
        if not self.token:
            raise ValueError("actor token must be non-empty")


@dataclass(frozen=True)
class DirEntry:
    name: str
    size: int
    mtime: float  # POSIX seconds
    kind: str  # "file" | "dir"


@dataclass(frozen=True)
class DirSnapshot:
    """A readdir result bound to the directory it came from."""
    path: str  # relative to the protected root, "" for the root itself
    entries: tuple[DirEntry, ...]

    def file_names(self) -> list[str]:
        return [e.name for e in self.entries if e.kind == "file"]

    def file_sizes(self) -> list[int]:
        return [e.size for e in self.entries if e.kind == "file"]
