"""Behavioral suspicion scoring.

A per-session tracker folds guarded-filesystem activity into a small
feature vector; a logistic model maps the features to a score in [0, 1].
Touching a decoy is conclusive and clamps the score to exactly 1.0
regardless of the model. Everything else is graded: entropy jumps,
header/extension mismatches, breadth of directories touched, renames to
known ransom extensions, and raw write rate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import UnknownFeature

# --- entropy ------------------------------------------------------------------


def shannon_entropy(data: bytes) -> float:
    """Byte-level Shannon entropy in bits per byte, 0.0..8.0."""
    if not data:
        return 0.0
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    probs = counts[counts > 0] / len(data)
    return float(-(probs * np.log2(probs)).sum())


# --- file-type magic -----------------------------------------------------------

# extension -> leading magic bytes
MAGIC_TABLE: dict[str, bytes] = {
    "jpg": b"\xff\xd8\xff",
    "jpeg": b"\xff\xd8\xff",
    "png": b"\x89PNG",
    "pdf": b"%PDF",
    "zip": b"PK\x03\x04",
    "docx": b"PK\x03\x04",
    "xlsx": b"PK\x03\x04",
    "gif": b"GIF8",
    "gz": b"\x1f\x8b",
    "7z": b"7z\xbc\xaf\x27\x1c",
    "mp3": b"ID3",
}


def expected_magic(path: str) -> Optional[bytes]:
    ext = path.rsplit(".", 1)[-1].lower() if "." in path else ""
    return MAGIC_TABLE.get(ext)


def header_matches(path: str, head: bytes) -> Optional[bool]:
    """True/False when the extension has a known magic; None otherwise."""
    magic = expected_magic(path)
    if magic is None:
        return None
    return head.startswith(magic)


# --- model ---------------------------------------------------------------------

FEATURE_NAMES = (
    "entropy_delta",
    "mean_new_entropy",
    "header_mismatch",
    "dir_touch_fraction",
    "ext_rename_hits",
    "write_rate",
    "decoy_touches",
)

MICRO = 10**6


@dataclass(frozen=True)
class ScoreModel:
    """Logistic model over the fixed feature vector. Weights are plain
    floats in memory; profiles carry them as integer micros so signed
    payloads stay float-free."""
    weights: dict[str, float]
    bias: float
    suspicious_threshold: float = 0.5
    malign_threshold: float = 0.9

    def __post_init__(self):
        for name in self.weights:
            if name not in FEATURE_NAMES:
                raise UnknownFeature(name)

    def score(self, features: dict[str, float]) -> float:
        for name in features:
            if name not in FEATURE_NAMES:
                raise UnknownFeature(name)
        if features.get("decoy_touches", 0) > 0:
            return 1.0
        z = self.bias
        for name, w in self.weights.items():
            z += w * features.get(name, 0.0)
        return 1.0 / (1.0 + math.exp(-z))

    def classify(self, score: float) -> str:
        if score >= self.malign_threshold:
            return "malign"
        if score >= self.suspicious_threshold:
            return "suspicious"
        return "benign"

    def to_dict(self) -> dict:
        return {
            "weights": {k: round(v * MICRO) for k, v in sorted(self.weights.items())},
            "bias": round(self.bias * MICRO),
            "suspicious_threshold": round(self.suspicious_threshold * MICRO),
            "malign_threshold": round(self.malign_threshold * MICRO),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreModel":
        return cls(
            weights={k: v / MICRO for k, v in d["weights"].items()},
            bias=d["bias"] / MICRO,
            suspicious_threshold=d["suspicious_threshold"] / MICRO,
            malign_threshold=d["malign_threshold"] / MICRO,
        )


DEFAULT_MODEL = ScoreModel(
    weights={
        "entropy_delta": 3.0,
        "mean_new_entropy": 2.0,
        "header_mismatch": 1.5,
        "dir_touch_fraction": 2.0,
        "ext_rename_hits": 2.5,
        "write_rate": 1.5,
        "decoy_touches": 0.0,  # handled by the 1.0 clamp
    },
    bias=-4.0,
)

DEFAULT_EXTENSION_BLOCKLIST = (
    "locked", "locky", "crypt", "crypted", "encrypted", "enc", "cerber",
    "zepto", "odin", "wcry", "wncry", "aes", "r5a", "0x0",
)


# --- per-session tracking --------------------------------------------------------


@dataclass
class _SessionStats:
    started_ts: float
    last_ts: float
    write_count: int = 0
    chunk_entropy_sum: float = 0.0
    chunk_bytes: int = 0
    base_entropy: dict[str, float] = field(default_factory=dict)  # path -> bits/byte
    file_entropy: dict[str, tuple[float, int]] = field(default_factory=dict)  # path -> (sum, n)
    headers_checked: int = 0
    headers_mismatched: int = 0
    dirs_touched: set = field(default_factory=set)
    ext_rename_hits: int = 0
    decoy_touches: int = 0
    alerted_paths: set = field(default_factory=set)


class SessionTracker:
    """Folds per-op signals into features, one bucket per actor token."""

    def __init__(
        self,
        model: ScoreModel = DEFAULT_MODEL,
        ext_blocklist: tuple = DEFAULT_EXTENSION_BLOCKLIST,
        total_dirs: Callable[[], int] = lambda: 1,
        clock: Callable[[], float] = time.time,
    ):
        self.model = model
        self.ext_blocklist = frozenset(e.lower() for e in ext_blocklist)
        self._total_dirs = total_dirs
        self._clock = clock
        self._sessions: dict[str, _SessionStats] = {}

    def _stats(self, actor: str) -> _SessionStats:
        if actor not in self._sessions:
            now = self._clock()
            self._sessions[actor] = _SessionStats(started_ts=now, last_ts=now)
        return self._sessions[actor]

    def _touch(self, actor: str, path: str) -> _SessionStats:
        s = self._stats(actor)
        s.last_ts = self._clock()
        parent = path.rsplit("/", 1)[0] if "/" in path else ""
        s.dirs_touched.add(parent)
        return s

    # --- signal entry points (called by the guarded fs) ----------------------

    def note_clone(self, actor: str, path: str, base_entropy: float) -> None:
        s = self._touch(actor, path)
        s.base_entropy.setdefault(path, base_entropy)

    def note_write(self, actor: str, path: str, size: int, entropy: float,
                   header_ok: Optional[bool] = None) -> None:
        s = self._touch(actor, path)
        s.write_count += 1
        if size:
            s.chunk_entropy_sum += entropy * size
            s.chunk_bytes += size
            total, n = s.file_entropy.get(path, (0.0, 0))
            s.file_entropy[path] = (total + entropy, n + 1)
        if header_ok is not None:
            s.headers_checked += 1
            if not header_ok:
                s.headers_mismatched += 1

    def note_rename(self, actor: str, src: str, dst: str) -> None:
        s = self._touch(actor, src)
        ext = dst.rsplit(".", 1)[-1].lower() if "." in dst.rsplit("/", 1)[-1] else ""
        if ext in self.ext_blocklist:
            s.ext_rename_hits += 1

    def note_mutation(self, actor: str, path: str) -> None:
        """Unlink/truncate/set_attr: counts for breadth and rate."""
        s = self._touch(actor, path)
        s.write_count += 1

    def note_decoy_touch(self, actor: str, path: str) -> bool:
        """Returns True the first time this session trips this decoy."""
        s = self._touch(actor, path)
        s.decoy_touches += 1
        if path in s.alerted_paths:
            return False
        s.alerted_paths.add(path)
        return True

    # --- features and scoring -------------------------------------------------

    def features(self, actor: str) -> dict[str, float]:
        s = self._stats(actor)
        deltas = []
        for path, base in s.base_entropy.items():
            if path in s.file_entropy:
                total, n = s.file_entropy[path]
                deltas.append((total / n) - base)
        entropy_delta = max(0.0, sum(deltas) / len(deltas)) / 8.0 if deltas else 0.0
        mean_new = (s.chunk_entropy_sum / s.chunk_bytes) / 8.0 if s.chunk_bytes else 0.0
        header = (s.headers_mismatched / s.headers_checked) if s.headers_checked else 0.0
        total_dirs = max(1, self._total_dirs())
        dir_frac = min(1.0, len(s.dirs_touched) / total_dirs)
        ext_hits = min(s.ext_rename_hits, 10) / 10.0
        elapsed = max(s.last_ts - s.started_ts, 1e-3)
        rate = math.log10(1.0 + s.write_count / elapsed) / 3.0
        return {
            "entropy_delta": entropy_delta,
            "mean_new_entropy": mean_new,
            "header_mismatch": header,
            "dir_touch_fraction": dir_frac,
            "ext_rename_hits": ext_hits,
            "write_rate": min(rate, 1.0),
            "decoy_touches": float(s.decoy_touches),
        }

    def score(self, actor: str) -> float:
        return self.model.score(self.features(actor))

    def classify(self, actor: str) -> str:
        return self.model.classify(self.score(actor))

    def sessions(self) -> list[str]:
        return sorted(self._sessions)

    def snapshot(self, actor: str) -> dict:
        f = self.features(actor)
        score = self.model.score(f)
        return {"actor": actor, "score": score,
                "verdict": self.model.classify(score), "features": f}
