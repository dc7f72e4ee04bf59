"""Ransomware-behavior simulator and acceptance harness.

Strategies drive the guarded filesystem strictly through its untrusted
fs_* surface (the AttackerView records every call so tests can audit the
black-box discipline). Encryption is simulated as a seeded keystream
overwrite plus a rename to a ransom extension: indistinguishable from real
encryption for every measured feature, and safe.

Enumeration order is lexicographic over directories and file names so
reports are comparable run to run.
"""

from __future__ import annotations

import csv
import os
import random
import re
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ParseError, SessionKilled
from .fakedata import IBAN_PATTERN, generate_iban_lines
from .fstypes import OpenMode
from .naming import pattern_to_regex
from .recipes import DecoyRecipe, FixedName, _model_for
from .textgen import generate_text

RANSOM_EXT = "locked"
IBAN_RE = re.compile(IBAN_PATTERN)


# --- attacker-visible facade ----------------------------------------------------

ATTACKER_OPS = frozenset({
    "fs_readdir", "fs_stat", "fs_open", "fs_read", "fs_write",
    "fs_close", "fs_rename", "fs_unlink", "fs_truncate",
})


class AttackerView:
    """The only handle a strategy gets: untrusted fs operations, nothing
    else. Mutated paths are recorded in order for the report."""

    def __init__(self, fs, actor: str):
        self._fs = fs
        self.actor = actor
        self.calls: list[str] = []
        self.touched: list[str] = []
        self.listed: set = set()

    def _note(self, op: str):
        self.calls.append(op)

    def _touch(self, path: str):
        if path not in self.touched:
            self.touched.append(path)

    def fs_readdir(self, path: str):
        self._note("fs_readdir")
        entries = self._fs.fs_readdir(path, self.actor)
        for e in entries:
            if e.kind == "file":
                self.listed.add(f"{path}/{e.name}" if path else e.name)
        return entries

    def fs_stat(self, path: str):
        self._note("fs_stat")
        return self._fs.fs_stat(path, self.actor)

    def fs_open(self, path: str, mode: OpenMode):
        self._note("fs_open")
        if mode.writable:
            self._touch(path)
        return self._fs.fs_open(path, mode, self.actor)

    def fs_read(self, handle, offset: int, size: int) -> bytes:
        self._note("fs_read")
        return self._fs.fs_read(handle, offset, size)

    def fs_write(self, handle, offset: int, data: bytes) -> int:
        self._note("fs_write")
        self._touch(handle.path)
        return self._fs.fs_write(handle, offset, data)

    def fs_close(self, handle):
        self._note("fs_close")
        return self._fs.fs_close(handle)

    def fs_rename(self, src: str, dst: str):
        self._note("fs_rename")
        self._touch(src)
        return self._fs.fs_rename(src, dst, self.actor)

    def fs_unlink(self, path: str):
        self._note("fs_unlink")
        self._touch(path)
        return self._fs.fs_unlink(path, self.actor)

    def fs_truncate(self, path: str, size: int):
        self._note("fs_truncate")
        self._touch(path)
        return self._fs.fs_truncate(path, size, self.actor)


# --- strategies ------------------------------------------------------------------


def keystream(seed: int, n: int) -> bytes:
    return random.Random(seed).randbytes(n)


def xor_bytes(data: bytes, ks: bytes) -> bytes:
    a = np.frombuffer(data, dtype=np.uint8)
    b = np.frombuffer(ks, dtype=np.uint8)
    return (a ^ b).tobytes()


def _walk_dirs(view: AttackerView) -> list[str]:
    """Every directory, lexicographic, root first."""
    dirs = [""]
    out = []
    while dirs:
        d = dirs.pop(0)
        out.append(d)
        subs = sorted(e.name for e in view.fs_readdir(d) if e.kind == "dir")
        dirs = [f"{d}/{s}" if d else s for s in subs] + dirs
        dirs.sort()
    return out


def _encrypt(view: AttackerView, path: str, rng: random.Random) -> None:
    """Read, overwrite with keystream XOR, rename to the ransom ext."""
    h = view.fs_open(path, OpenMode.READ_WRITE)
    try:
        data = b""
        while True:
            chunk = view.fs_read(h, len(data), 1 << 20)
            if not chunk:
                break
            data += chunk
        ks = keystream(rng.getrandbits(64), len(data))
        view.fs_write(h, 0, xor_bytes(data, ks))
    finally:
        view.fs_close(h)
    view.fs_rename(path, f"{path}.{RANSOM_EXT}")


@dataclass(frozen=True)
class EncryptAll:
    def run(self, view: AttackerView, rng: random.Random) -> None:
        for d in _walk_dirs(view):
            names = sorted(e.name for e in view.fs_readdir(d) if e.kind == "file")
            for name in names:
                _encrypt(view, f"{d}/{name}" if d else name, rng)


@dataclass(frozen=True)
class TopKRecent:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def run(self, view: AttackerView, rng: random.Random) -> None:
        for d in _walk_dirs(view):
            files = [e for e in view.fs_readdir(d) if e.kind == "file"]
            files.sort(key=lambda e: (-e.mtime, e.name))
            for e in files[: self.k]:
                _encrypt(view, f"{d}/{e.name}" if d else e.name, rng)


@dataclass(frozen=True)
class ContentRegex:
    pattern: str

    def __post_init__(self):
        re.compile(self.pattern)

    def run(self, view: AttackerView, rng: random.Random) -> None:
        needle = re.compile(self.pattern.encode("utf-8"))
        for d in _walk_dirs(view):
            names = sorted(e.name for e in view.fs_readdir(d) if e.kind == "file")
            for name in names:
                path = f"{d}/{name}" if d else name
                h = view.fs_open(path, OpenMode.READ)
                try:
                    data = view.fs_read(h, 0, 1 << 22)
                finally:
                    view.fs_close(h)
                if needle.search(data):
                    _encrypt(view, path, rng)


@dataclass(frozen=True)
class ExtensionSet:
    exts: tuple

    def __post_init__(self):
        if not self.exts:
            raise ValueError("extension set is empty")

    def run(self, view: AttackerView, rng: random.Random) -> None:
        wanted = {e.lower().lstrip(".") for e in self.exts}
        for d in _walk_dirs(view):
            names = sorted(e.name for e in view.fs_readdir(d) if e.kind == "file")
            for name in names:
                if "." in name and name.rsplit(".", 1)[1].lower() in wanted:
                    _encrypt(view, f"{d}/{name}" if d else name, rng)


@dataclass(frozen=True)
class CanaryAware:
    """Models the attacker who knows the traps: skips files whose names
    match any leaked recipe pattern and files that look stale. Metadata
    freshening is what drags decoys back inside this attacker's window."""
    leaked_recipes: tuple = ()
    staleness_window: float = 7 * 86400.0
    now: Optional[float] = None  # injectable for deterministic tests

    def _name_res(self) -> list:
        out = []
        for r in self.leaked_recipes:
            if isinstance(r.name_source, FixedName):
                out.append(re.compile(pattern_to_regex(r.name_source.pattern)))
        return out

    def run(self, view: AttackerView, rng: random.Random) -> None:
        skip_res = self._name_res()
        now = time.time() if self.now is None else self.now
        for d in _walk_dirs(view):
            files = [e for e in view.fs_readdir(d) if e.kind == "file"]
            files.sort(key=lambda e: e.name)
            for e in files:
                if any(rx.fullmatch(e.name) for rx in skip_res):
                    continue
                if e.mtime < now - self.staleness_window:
                    continue
                _encrypt(view, f"{d}/{e.name}" if d else e.name, rng)


def strategy_from_string(spec: str, leaked_recipes: Sequence[DecoyRecipe] = ()):
    """CLI shorthand: encrypt_all | topk:K | regex:PATTERN | ext:a,b,c |
    canary:WINDOW (seconds, or with d/h/m suffix)."""
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    if name in ("encrypt_all", "all"):
        return EncryptAll()
    if name == "topk":
        return TopKRecent(k=int(arg or 1))
    if name == "regex":
        if not arg:
            raise ParseError(0, "regex strategy needs a pattern")
        return ContentRegex(pattern=arg)
    if name == "ext":
        return ExtensionSet(exts=tuple(s for s in arg.split(",") if s))
    if name == "canary":
        window = _parse_duration(arg or "7d")
        return CanaryAware(leaked_recipes=tuple(leaked_recipes), staleness_window=window)
    raise ParseError(0, f"unknown strategy {name!r}")


def _parse_duration(s: str) -> float:
    s = s.strip().lower()
    mult = {"d": 86400, "h": 3600, "m": 60, "s": 1}
    if s and s[-1] in mult:
        return float(s[:-1]) * mult[s[-1]]
    return float(s)


def strategies_from_criteria(criteria, leaked_recipes: Sequence[DecoyRecipe] = ()):
    """Profile-driven attacks: one strategy per selection criterion."""
    from .intel import (
        ContentRegexCriterion,
        ExtensionSetCriterion,
        NamingConventionCriterion,
        TopKRecentCriterion,
    )
    out = []
    for c in criteria:
        if isinstance(c, TopKRecentCriterion):
            out.append(TopKRecent(k=c.k))
        elif isinstance(c, ContentRegexCriterion):
            out.append(ContentRegex(pattern=c.pattern))
        elif isinstance(c, ExtensionSetCriterion):
            out.append(ExtensionSet(exts=tuple(c.extensions)))
        elif isinstance(c, NamingConventionCriterion):
            out.append(ContentRegex(pattern=pattern_to_regex(c.pattern)))
    return out


# --- synthetic victim trees ------------------------------------------------------


@dataclass(frozen=True)
class TreeSpec:
    dirs: int = 10
    files_per_dir: int = 10
    ext_mix: tuple = (("txt", 6), ("pdf", 2), ("jpg", 2), ("docx", 1))
    iban_fraction: float = 0.0
    mtime_window_days: float = 90.0

    def __post_init__(self):
        if self.dirs < 0 or self.files_per_dir < 0:
            raise ValueError("counts must be >= 0")
        if not 0.0 <= self.iban_fraction <= 1.0:
            raise ValueError("iban_fraction must be in [0, 1]")


def parse_tree_spec(s: str) -> TreeSpec:
    """'50x20' or '50x20:iban=0.1:window=30'."""
    parts = s.split(":")
    try:
        d, f = parts[0].lower().split("x")
        kwargs = {"dirs": int(d), "files_per_dir": int(f)}
    except ValueError:
        raise ParseError(0, f"bad tree spec {s!r}, want DIRSxFILES") from None
    for part in parts[1:]:
        key, _, val = part.partition("=")
        if key == "iban":
            kwargs["iban_fraction"] = float(val)
        elif key == "window":
            kwargs["mtime_window_days"] = float(val)
        else:
            raise ParseError(0, f"unknown tree spec option {key!r}")
    return TreeSpec(**kwargs)


_DIR_STEMS = ("archive", "clients", "docs", "finance", "media",
              "notes", "projects", "reports", "scans", "shared")
_FILE_STEMS = {
    "txt": ("notes_", "memo_", "draft_"),
    "pdf": ("report_", "invoice_", "scan_"),
    "jpg": ("photo_", "img_"),
    "docx": ("letter_", "contract_"),
}

_MAGIC = {
    "pdf": b"%PDF-1.4\n",
    "jpg": b"\xff\xd8\xff\xe0",
    "docx": b"PK\x03\x04",
}


def synth_tree(spec: TreeSpec, seed: int, root: str, now: Optional[float] = None) -> dict:
    """Deterministic victim tree; returns {relpath: size}. Exactly
    round(iban_fraction * total_files) files carry IBAN-matching content,
    chosen by seeded sampling so the count never wobbles."""
    rng = random.Random(seed)
    now = time.time() if now is None else now
    os.makedirs(root, exist_ok=True)
    total = spec.dirs * spec.files_per_dir
    carriers = set(rng.sample(range(total), round(spec.iban_fraction * total))) if total else set()
    model = _model_for("builtin")
    window = spec.mtime_window_days * 86400
    out = {}
    idx = 0
    for di in range(spec.dirs):
        dname = f"{_DIR_STEMS[di % len(_DIR_STEMS)]}{di:02d}"
        dpath = os.path.join(root, dname)
        os.makedirs(dpath, exist_ok=True)
        exts = [e for e, w in spec.ext_mix for _ in range(w)]
        for fi in range(spec.files_per_dir):
            ext = rng.choice(exts)
            stem = rng.choice(_FILE_STEMS.get(ext, ("file_",)))
            name = f"{stem}{fi:03d}.{ext}"
            words = rng.randint(30, 120)
            text = generate_text(model, words, rng.getrandbits(48)).encode("utf-8")
            if ext in ("jpg", "docx"):
                body = _MAGIC[ext] + keystream(rng.getrandbits(48), rng.randint(600, 4000))
            elif ext == "pdf":
                body = _MAGIC[ext] + text
            else:
                body = text
            if idx in carriers:
                lines = generate_iban_lines(rng.getrandbits(48), rng.randint(1, 3))
                body += b"\n" + "\n".join(lines).encode("ascii") + b"\n"
            full = os.path.join(dpath, name)
            with open(full, "wb") as f:
                f.write(body)
            mtime = now - rng.uniform(3600, window)
            os.utime(full, (mtime, mtime))
            out[f"{dname}/{name}"] = len(body)
            idx += 1
    return out


# --- driving attacks and reporting ----------------------------------------------


@dataclass(frozen=True)
class SimReport:
    files_enumerated: int
    files_touched_before_alert: int
    alert_raised: bool
    real_files_modified_after_run: int
    victims: tuple  # ordered (path, class)

    def to_row(self) -> dict:
        return {
            "files_enumerated": self.files_enumerated,
            "files_touched_before_alert": self.files_touched_before_alert,
            "alert_raised": int(self.alert_raised),
            "real_files_modified_after_run": self.real_files_modified_after_run,
            "victims_total": len(self.victims),
            "decoy_victims": sum(1 for _, c in self.victims if c == "decoy"),
        }


def run_attack(fs, strategy, seed: int, actor: Optional[str] = None) -> SimReport:
    """Drive one attack session and compile the report from the event log
    plus a before/after manifest diff. The strategy sees only the
    AttackerView; victim classification happens out here where the decoy
    registry is fair game."""
    actor = actor or f"sim-{seed}"
    pre_manifest = fs.manifest()
    decoys = set(fs.decoys())
    start_seq = fs.events.last_seq
    view = AttackerView(fs, actor)
    rng = random.Random(seed)
    try:
        strategy.run(view, rng)
    except SessionKilled:
        pass

    events = fs.events.events_after(start_seq, limit=1_000_000)
    alert_seq = None
    alert_path = None
    mutated_seqs: dict[str, int] = {}
    for e in events:
        if e.actor != actor:
            continue
        if e.kind == "Read" or e.kind == "Open":
            continue
        if e.kind == "AlertRaised" and alert_seq is None:
            alert_seq = e.seq
            alert_path = e.path
        if e.kind in ("Write", "Truncate", "Rename", "Unlink", "Create"):
            mutated_seqs.setdefault(e.path, e.seq)
    enumerated = len(view.listed)

    if alert_seq is None:
        touched_before = len(view.touched)
    else:
        before = {p for p, s in mutated_seqs.items() if s < alert_seq}
        before.add(alert_path)
        touched_before = len(before)

    post_manifest = fs.manifest()
    real_modified = 0
    for path, digest in pre_manifest.items():
        if path in decoys:
            continue
        if post_manifest.get(path) != digest:
            real_modified += 1

    victims = tuple((p, "decoy" if p in decoys else "real") for p in view.touched)
    return SimReport(
        files_enumerated=enumerated,
        files_touched_before_alert=touched_before,
        alert_raised=alert_seq is not None,
        real_files_modified_after_run=real_modified,
        victims=victims,
    )


def sweep(fs_factory, strategies: dict, tree_specs: dict, seeds: Sequence[int],
          out_csv: str) -> list:
    """One row per (strategy, tree, seed). fs_factory(tree_name, spec, seed)
    must yield a freshly mounted, planted, freshened SentryFS. CSV header:
    strategy,tree,seed,files_enumerated,files_touched_before_alert,
    alert_raised,real_files_modified_after_run,victims_total,decoy_victims
    """
    rows = []
    for sname, strategy in sorted(strategies.items()):
        for tname, tspec in sorted(tree_specs.items()):
            for seed in seeds:
                with fs_factory(tname, tspec, seed) as fs:
                    report = run_attack(fs, strategy, seed)
                row = {"strategy": sname, "tree": tname, "seed": seed}
                row.update(report.to_row())
                rows.append(row)
    fieldnames = ["strategy", "tree", "seed", "files_enumerated",
                  "files_touched_before_alert", "alert_raised",
                  "real_files_modified_after_run", "victims_total", "decoy_victims"]
    with open(out_csv, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames)
        w.writeheader()
        w.writerows(rows)
    return rows
