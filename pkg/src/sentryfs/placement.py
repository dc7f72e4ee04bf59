"""Decoy placement and metadata freshening.

Planning and freshening are pure functions over directory snapshots; the
Planter and Freshener orchestrators apply their results through the
guarded filesystem's trusted management surface and keep the decoy
registry (decoys.json) current.

A decoy earns its keep only while attackers' selection criteria pick it:
the freshener keeps every decoy within the top k most recently modified
files of its directory and inside the sibling size band, without ever
moving its mtime backwards or past "now".
"""

from __future__ import annotations

import fnmatch
import math
import os
import random
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ClockSkew, NotFound
from .fstypes import DirEntry, DirSnapshot
from .quarantine import sha256_hex
from .recipes import DecoyRecipe, FixedBytes, SiblingBand, TopKRule, render_decoy

DEFAULT_STALE_AGE = 30 * 86400  # backdating used when planting "stale" decoys
FRESHEN_INTERVAL = 600.0  # seconds; jittered by +-20% by the daemon loop


@dataclass(frozen=True)
class PlacementPolicy:
    """Which directories get decoys and how many. Globs match
    backing-relative directory paths; "**" means every directory."""
    protected_dirs: tuple = ("**",)
    decoys_per_dir: int = 1
    recipe_ids: tuple = ()  # empty = use all recipes the profile carries

    def __post_init__(self):
        if self.decoys_per_dir < 1:
            raise ValueError("decoys_per_dir must be >= 1")


@dataclass(frozen=True)
class MetaUpdate:
    mtime: float
    size: Optional[int] = None  # set only when outside the size band


def _dir_matches(dir_path: str, patterns: Sequence[str]) -> bool:
    for pat in patterns:
        if pat == "**" or fnmatch.fnmatchcase(dir_path, pat):
            return True
    return False


def rank_by_recency(entries: Sequence[DirEntry], name: str) -> int:
    """1-based rank of `name` when files sort by mtime descending, ties
    broken by name ascending (the attacker-visible ordering)."""
    files = sorted((e for e in entries if e.kind == "file"),
                   key=lambda e: (-e.mtime, e.name))
    for i, e in enumerate(files):
        if e.name == name:
            return i + 1
    raise NotFound(f"{name} not in snapshot")


def plan_placement(
    tree: dict[str, DirSnapshot],
    policy: PlacementPolicy,
    registry: dict[str, dict],
    recipe_ids: Sequence[str],
) -> list[tuple[str, str]]:
    """(directory, recipe_id) pairs covering the shortfall in every
    protected directory. Directories whose registered decoys already meet
    decoys_per_dir get nothing; planning twice plans nothing the second
    time."""
    ids = list(policy.recipe_ids) or list(recipe_ids)
    if not ids:
        return []
    have: dict[str, int] = {}
    for path in registry:
        d = path.rsplit("/", 1)[0] if "/" in path else ""
        have[d] = have.get(d, 0) + 1
    plan = []
    for i, dir_path in enumerate(sorted(tree)):
        if not _dir_matches(dir_path, policy.protected_dirs):
            continue
        missing = policy.decoys_per_dir - have.get(dir_path, 0)
        for j in range(max(0, missing)):
            plan.append((dir_path, ids[(i + j) % len(ids)]))
    return plan


def freshen(
    dir_snapshot: DirSnapshot,
    decoy_path: str,
    rule: TopKRule,
    now: float,
    seed: int,
) -> MetaUpdate:
    """New metadata that puts the decoy strictly inside the top-k recency
    window: mtime drawn from (k-th most recent sibling mtime, now], pulled
    back by a random jitter of at most jitter_max, never earlier than the
    decoy's current mtime. Size is included only when the current size
    falls outside the rule's band."""
    rng = random.Random(seed)
    decoy_name = decoy_path.rsplit("/", 1)[-1]
    files = [e for e in dir_snapshot.entries if e.kind == "file"]
    for e in files:
        if e.mtime > now:
            raise ClockSkew(f"{e.name} has mtime {e.mtime} in the future of {now}")
    current = next((e for e in files if e.name == decoy_name), None)
    siblings = sorted((e for e in files if e.name != decoy_name),
                      key=lambda e: (-e.mtime, e.name))
    if siblings:
        kth = siblings[min(rule.k, len(siblings)) - 1].mtime
    else:
        kth = None
    jitter = rng.uniform(0.0, rule.jitter_max)
    if kth is None:
        mtime = now - jitter
    else:
        lo = max(kth, now - jitter)
        mtime = lo + (now - lo) * rng.random()
        if mtime <= kth:
            mtime = math.nextafter(kth, math.inf)
    if current is not None:
        mtime = max(mtime, current.mtime)
    mtime = min(mtime, now)

    size: Optional[int] = None
    if current is not None:
        band = rule.size_band
        if isinstance(band, FixedBytes):
            if current.size != band.size:
                size = band.size
        elif isinstance(band, SiblingBand) and siblings:
            sizes = sorted(e.size for e in siblings if e.size > 0)
            if sizes:
                p25 = sizes[int(0.25 * (len(sizes) - 1))]
                p75 = sizes[int(0.75 * (len(sizes) - 1))]
                if not (p25 <= current.size <= max(p75, p25)):
                    lo_s, hi_s = max(p25, 1), max(p75, p25, 1)
                    size = int(round(math.exp(rng.uniform(math.log(lo_s), math.log(hi_s)))))
    return MetaUpdate(mtime=mtime, size=size)


def coverage_report(
    tree: dict[str, DirSnapshot],
    registry: dict[str, dict],
    policy: PlacementPolicy,
    now: Optional[float] = None,
    stale_after: float = 6 * FRESHEN_INTERVAL,
    default_k: int = 1,
) -> dict:
    """Operator-facing health check: how many protected directories hold a
    decoy, which decoys have not been freshened lately, and which have
    slipped out of their top-k window."""
    now = time.time() if now is None else now
    protected = [d for d in sorted(tree) if _dir_matches(d, policy.protected_dirs)]
    decoy_dirs = {p.rsplit("/", 1)[0] if "/" in p else "" for p in registry}
    covered = [d for d in protected if d in decoy_dirs]
    stale = []
    violations = []
    for path, meta in sorted(registry.items()):
        d = path.rsplit("/", 1)[0] if "/" in path else ""
        name = path.rsplit("/", 1)[-1]
        if now - meta.get("last_freshened", 0) > stale_after:
            stale.append(path)
        snap = tree.get(d)
        if snap is None:
            violations.append(path)
            continue
        try:
            rank = rank_by_recency(snap.entries, name)
        except NotFound:
            violations.append(path)
            continue
        if rank > meta.get("k", default_k):
            violations.append(path)
    return {
        "protected_dirs": len(protected),
        "covered_dirs": len(covered),
        "stale_decoys": stale,
        "rank_violations": violations,
    }


# --- orchestration over the guarded fs ------------------------------------------


def snapshot_tree(backing_root: str) -> dict[str, DirSnapshot]:
    """Readdir snapshot of every directory under the backing root."""
    tree: dict[str, DirSnapshot] = {}
    for root, dirs, files in os.walk(backing_root):
        rel = os.path.relpath(root, backing_root).replace(os.sep, "/")
        rel = "" if rel == "." else rel
        entries = []
        for name in sorted(files):
            full = os.path.join(root, name)
            st = os.stat(full)
            entries.append(DirEntry(name=name, size=st.st_size, mtime=st.st_mtime, kind="file"))
        for name in sorted(dirs):
            full = os.path.join(root, name)
            entries.append(DirEntry(name=name, size=0, mtime=os.path.getmtime(full), kind="dir"))
        tree[rel] = DirSnapshot(path=rel, entries=tuple(entries))
    return tree


class Planter:
    """Plans and plants decoys through the trusted management surface."""

    def __init__(self, fs, recipes: Sequence[DecoyRecipe], policy: Optional[PlacementPolicy] = None):
        self.fs = fs
        self.recipes = {r.recipe_id: r for r in recipes}
        self.policy = policy or PlacementPolicy()

    def plan(self) -> list[tuple[str, str]]:
        tree = snapshot_tree(self.fs.backing_root)
        return plan_placement(tree, self.policy, self.fs.decoys(), list(self.recipes))

    def apply(self, plan: Sequence[tuple[str, str]], seed: int,
              fresh: bool = True, now: Optional[float] = None,
              stale_age: float = DEFAULT_STALE_AGE) -> list[str]:
        """Render and plant each planned decoy. fresh=True stamps a top-k
        mtime immediately; fresh=False backdates by stale_age, leaving the
        first freshening to do the work (the experiment control arm)."""
        now = time.time() if now is None else now
        rng = random.Random(seed)
        planted = []
        for dir_path, recipe_id in plan:
            recipe = self.recipes[recipe_id]
            tree = snapshot_tree(self.fs.backing_root)
            snap = tree.get(dir_path)
            if snap is None:
                continue
            decoy = render_decoy(recipe, snap, seed=rng.getrandbits(48))
            if fresh:
                update = freshen(snap, decoy.path, recipe.freshness_rule,
                                 now=now, seed=rng.getrandbits(48))
                mtime = update.mtime
            else:
                mtime = now - stale_age - rng.uniform(0, 86400)
            self.fs.write_trusted(decoy.path, decoy.content, mtime=mtime)
            self.fs.register_decoy(decoy.path, {
                "recipe_id": recipe_id,
                "created_at": now,
                "last_freshened": now if fresh else 0,
                "sha256": sha256_hex(decoy.content),
                "k": recipe.freshness_rule.k,
                "jitter_max": recipe.freshness_rule.jitter_max,
            })
            planted.append(decoy.path)
        return planted

    def run(self, seed: int, fresh: bool = True, now: Optional[float] = None) -> list[str]:
        return self.apply(self.plan(), seed=seed, fresh=fresh, now=now)

    def retire(self, recipe_ids: Sequence[str]) -> list[str]:
        """Remove every decoy planted from the given recipes (profile
        updates retire recipes; their files must not linger as noise)."""
        removed = []
        gone = set(recipe_ids)
        for path, meta in sorted(self.fs.decoys().items()):
            if meta.get("recipe_id") in gone:
                backing = os.path.join(self.fs.backing_root, path)
                if os.path.exists(backing):
                    os.unlink(backing)
                self.fs.unregister_decoy(path)
                removed.append(path)
        return removed

    def coverage(self, now: Optional[float] = None) -> dict:
        tree = snapshot_tree(self.fs.backing_root)
        return coverage_report(tree, self.fs.decoys(), self.policy, now=now)


class Freshener:
    """Keeps registered decoys inside their top-k windows."""

    def __init__(self, fs, default_rule: Optional[TopKRule] = None):
        self.fs = fs
        self.default_rule = default_rule or TopKRule()

    def run_once(self, now: Optional[float] = None, seed: Optional[int] = None) -> list[str]:
        now = time.time() if now is None else now
        rng = random.Random(seed)
        freshened = []
        registry = self.fs.decoys()
        tree = snapshot_tree(self.fs.backing_root)
        for path, meta in sorted(registry.items()):
            d = path.rsplit("/", 1)[0] if "/" in path else ""
            name = path.rsplit("/", 1)[-1]
            snap = tree.get(d)
            if snap is None or all(e.name != name for e in snap.entries):
                continue  # decoy vanished; coverage_report flags it
            rule = TopKRule(k=meta.get("k", self.default_rule.k),
                            jitter_max=meta.get("jitter_max", self.default_rule.jitter_max),
                            size_band=self.default_rule.size_band)
            rank = rank_by_recency(snap.entries, name)
            if rank <= rule.k:
                continue
            update = freshen(snap, path, rule, now=now, seed=rng.getrandbits(48))
            self.fs.set_times_trusted(path, update.mtime)
            meta = dict(meta)
            meta["last_freshened"] = now
            self.fs.register_decoy(path, meta)
            freshened.append(path)
        return freshened
