#!/usr/bin/env python3
"""Regenerate committed test fixtures.

Everything here is deterministic (fixed key seed, fixed RFC 8032 signing,
fixed profile contents), so re-running must reproduce the committed bytes
exactly. Run from the repo root:

    python3 scripts/gen_fixtures.py
"""

import hashlib
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

from sentryfs.intel import (
    canonicalize,
    default_profile,
    save_private_key,
    save_public_key,
    sign_profile,
)
from sentryfs.fakedata import IBAN_PATTERN
from sentryfs.recipes import recipe_to_dict, DEFAULT_RECIPES

ROOT = os.path.normpath(os.path.join(os.path.dirname(__file__), ".."))
INTEL_DIR = os.path.join(ROOT, "tests", "fixtures", "intel")
PROFILE_DIR = os.path.join(ROOT, "tests", "fixtures", "profiles")

KEY_SEED = hashlib.sha256(b"sentryfs test trust key 1").digest()


def test_key() -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(KEY_SEED)


def profile_variants() -> list:
    """20 distinct valid profiles exercising every criterion type, recipe
    subset sizes, blocklist shapes, and model presence/absence."""
    base = default_profile(version=1, issued_at=1_750_000_000).to_dict()
    recipes = [recipe_to_dict(r) for r in DEFAULT_RECIPES]
    out = []
    for i in range(20):
        p = dict(base)
        p["profile_id"] = f"fixture-{i:02d}"
        p["version"] = i + 1
        p["issued_at"] = 1_750_000_000 + i * 3600
        p["decoy_recipes"] = recipes[: (i % 3) + 1]
        crit = []
        if i % 2 == 0:
            crit.append({"type": "top_k_recent", "k": (i % 5) + 1})
        if i % 3 == 0:
            crit.append({"type": "content_regex", "pattern": IBAN_PATTERN})
        if i % 4 == 0:
            crit.append({"type": "extension_set",
                         "extensions": ["txt", "pdf", "docx"][: (i % 3) + 1]})
        if i % 5 == 0:
            crit.append({"type": "naming_convention",
                         "pattern": {"segments": [{"kind": "lit", "text": "invoice_"},
                                                  {"kind": "digits", "width": 4}],
                                     "extension": "pdf"}})
        p["selection_criteria"] = crit
        p["extension_blocklist"] = (["locked", "crypt", "encrypted"]
                                    + ([f"fam{i}"] if i % 2 else []))
        if i % 7 == 6:
            p["score_model"] = None
        out.append(p)
    return out


def gen_intel() -> None:
    os.makedirs(INTEL_DIR, exist_ok=True)
    os.makedirs(PROFILE_DIR, exist_ok=True)
    key = test_key()
    save_private_key(key, os.path.join(INTEL_DIR, "trust.key"))
    save_public_key(key.public_key(), os.path.join(INTEL_DIR, "trust.pub"))
    for i, profile in enumerate(profile_variants()):
        signed = sign_profile(profile, key)
        path = os.path.join(PROFILE_DIR, f"p{i:02d}.json")
        with open(path, "wb") as f:
            f.write(canonicalize(signed))
    print(f"wrote trust key pair and 20 profiles under {PROFILE_DIR}")


# --- scoring calibration fixtures ------------------------------------------------
#
# Feature vectors from full write sessions, captured under an injected fake
# clock so write_rate is reproducible. The default score model must put every
# encrypt-all session above 0.9 and the benign editing session below 0.3; the
# committed vectors pin that separation.

SCORING_DIR = os.path.join(ROOT, "tests", "fixtures", "scoring")
CLOCK_START = 1_750_000_000.0


class FakeClock:
    """Monotone clock advancing a fixed step per read (plus manual jumps)."""

    def __init__(self, start: float = CLOCK_START, tick: float = 0.013):
        self.now = start
        self.tick = tick

    def __call__(self) -> float:
        self.now += self.tick
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


def _session_features(build_tree, drive) -> dict:
    import tempfile

    from sentryfs.fscore import GuardConfig, SentryFS

    with tempfile.TemporaryDirectory() as td:
        backing = os.path.join(td, "tree")
        build_tree(backing)
        clock = FakeClock()
        fs = SentryFS(backing, os.path.join(td, "state"),
                      GuardConfig(kill_session_on_alert=False), clock=clock)
        fs.mount()
        try:
            actor = drive(fs, clock)
            return fs.tracker.features(actor)
        finally:
            fs.unmount()


def encrypt_features(tree: str, seed: int) -> dict:
    from sentryfs.ransim import EncryptAll, parse_tree_spec, run_attack, synth_tree

    def build(backing):
        synth_tree(parse_tree_spec(tree), seed=seed, root=backing, now=CLOCK_START)

    def drive(fs, clock):
        run_attack(fs, EncryptAll(), seed=seed)
        return f"sim-{seed}"

    return _session_features(build, drive)


def benign_edit_features() -> dict:
    """A human-plausible editing session: read three documents in one
    directory and append a short plaintext note to each, seconds apart."""
    from sentryfs.fstypes import OpenMode
    from sentryfs.ransim import parse_tree_spec, synth_tree

    def build(backing):
        synth_tree(parse_tree_spec("4x6"), seed=31, root=backing, now=CLOCK_START)

    def drive(fs, clock):
        actor = "editor-1"
        root_dirs = sorted(e.name for e in fs.fs_readdir("", actor)
                           if e.kind == "dir")
        target = root_dirs[0]
        files = sorted(e.name for e in fs.fs_readdir(target, actor)
                       if e.kind == "file" and e.name.endswith(".txt"))[:3]
        for name in files:
            path = f"{target}/{name}"
            h = fs.fs_open(path, OpenMode.READ_WRITE, actor)
            data = fs.fs_read(h)
            fs.fs_write(h, len(data), b"\nreviewed and approved by finance.\n")
            fs.fs_close(h)
            clock.advance(2.0)
        return actor

    return _session_features(build, drive)


ENCRYPT_RUNS = [
    ("6x8", 101),
    ("6x8", 202),
    ("4x12:iban=0.2", 303),
    ("8x5", 404),
    ("5x10", 505),
    ("3x20", 606),
]


def gen_scoring() -> None:
    import json

    os.makedirs(SCORING_DIR, exist_ok=True)
    for i, (tree, seed) in enumerate(ENCRYPT_RUNS):
        feats = encrypt_features(tree, seed)
        with open(os.path.join(SCORING_DIR, f"encrypt_{i:02d}.json"), "w") as f:
            json.dump({"strategy": "all", "tree": tree, "seed": seed,
                       "features": feats}, f, indent=2, sort_keys=True)
            f.write("\n")
    feats = benign_edit_features()
    with open(os.path.join(SCORING_DIR, "benign_edit.json"), "w") as f:
        json.dump({"strategy": "benign-edit", "tree": "4x6", "seed": 31,
                   "features": feats}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(ENCRYPT_RUNS)} encrypt + 1 benign fixtures under {SCORING_DIR}")


if __name__ == "__main__":
    gen_intel()
    gen_scoring()
