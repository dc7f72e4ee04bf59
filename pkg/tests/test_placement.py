"""Placement planning and freshening.

The rank property is checked with an independent oracle: after every
seeded freshen we re-sort the directory by (mtime desc, name asc) exactly
the way an attacker's top-k selector would, and demand the decoy sits at
rank <= k.
"""

import random

import pytest

from sentryfs.errors import ClockSkew
from sentryfs.fscore import SentryFS
from sentryfs.fstypes import DirEntry, DirSnapshot
from sentryfs.placement import (
    Freshener,
    MetaUpdate,
    PlacementPolicy,
    Planter,
    coverage_report,
    freshen,
    plan_placement,
    rank_by_recency,
    snapshot_tree,
)
from sentryfs.recipes import DEFAULT_RECIPES, TopKRule


def snap(path, files):
    """files: list of (name, size, mtime)."""
    entries = tuple(DirEntry(name=n, size=s, mtime=m, kind="file") for n, s, m in files)
    return DirSnapshot(path=path, entries=entries)


NOW = 1_760_000_000.0


class TestFreshen:
    def test_mtime_beats_kth_sibling(self):
        s = snap("docs", [("a.txt", 100, NOW - 900), ("b.txt", 120, NOW - 500),
                          ("decoy.txt", 110, NOW - 5000)])
        for seed in range(50):
            up = freshen(s, "docs/decoy.txt", TopKRule(k=1, jitter_max=120), NOW, seed)
            assert NOW - 500 < up.mtime <= NOW

    def test_k2_window(self):
        s = snap("d", [("a", 10, NOW - 100), ("b", 10, NOW - 200), ("c", 10, NOW - 300),
                       ("z", 10, NOW - 9000)])
        up = freshen(s, "d/z", TopKRule(k=2, jitter_max=60), NOW, 7)
        # second most recent sibling is b at NOW-200
        assert NOW - 200 < up.mtime <= NOW

    def test_jitter_bounded(self):
        s = snap("d", [("old", 10, NOW - 10_000), ("decoy", 10, NOW - 9000)])
        for seed in range(200):
            up = freshen(s, "d/decoy", TopKRule(k=1, jitter_max=120), NOW, seed)
            assert up.mtime >= NOW - 120
            assert up.mtime <= NOW

    def test_empty_dir_now_minus_jitter(self):
        s = snap("d", [])
        up = freshen(s, "d/decoy", TopKRule(k=1, jitter_max=120), NOW, 3)
        assert NOW - 120 <= up.mtime <= NOW

    def test_clock_skew_raises(self):
        s = snap("d", [("future", 10, NOW + 30), ("decoy", 10, NOW - 100)])
        with pytest.raises(ClockSkew):
            freshen(s, "d/decoy", TopKRule(), NOW, 1)

    def test_monotone_across_freshens(self):
        files = [("a", 10, NOW - 700), ("decoy", 10, NOW - 9000)]
        last = 0.0
        for i in range(20):
            s = snap("d", files)
            up = freshen(s, "d/decoy", TopKRule(k=1, jitter_max=300), NOW + i, seed=i)
            assert up.mtime >= last
            last = up.mtime
            files[1] = ("decoy", 10, up.mtime)

    def test_size_untouched_inside_band(self):
        s = snap("d", [("a", 100, NOW - 10), ("b", 200, NOW - 20), ("c", 300, NOW - 30),
                       ("decoy", 200, NOW - 9000)])
        up = freshen(s, "d/decoy", TopKRule(), NOW, 5)
        assert up.size is None

    def test_size_adjusted_outside_band(self):
        s = snap("d", [("a", 100, NOW - 10), ("b", 200, NOW - 20), ("c", 300, NOW - 30),
                       ("decoy", 5, NOW - 9000)])
        up = freshen(s, "d/decoy", TopKRule(), NOW, 5)
        assert up.size is not None
        assert 100 <= up.size <= 300

    def test_rank_oracle_100_seeded_dirs(self):
        """The pinned property: after freshening, an attacker sorting by
        (mtime desc, name asc) finds the decoy at rank <= k, 100/100."""
        rng = random.Random(20260817)
        for trial in range(100):
            k = rng.choice([1, 1, 2, 3])
            n = rng.randint(k, 30)
            files = [(f"f{i:03d}.txt", rng.randint(1, 5000),
                      NOW - rng.uniform(60, 90 * 86400)) for i in range(n)]
            decoy_mtime = NOW - rng.uniform(60, 120 * 86400)
            files.append(("decoy.txt", 100, decoy_mtime))
            s = snap("d", files)
            up = freshen(s, "d/decoy.txt", TopKRule(k=k, jitter_max=120), NOW, trial)
            after = [(n_, sz, up.mtime if n_ == "decoy.txt" else m)
                     for n_, sz, m in files]
            rank = rank_by_recency(snap("d", after).entries, "decoy.txt")
            assert rank <= k, f"trial {trial}: rank {rank} > k {k}"


class TestPlanning:
    def test_covers_shortfall_only(self):
        tree = {"a": snap("a", []), "b": snap("b", [])}
        registry = {"a/decoy.txt": {"recipe_id": "r1"}}
        plan = plan_placement(tree, PlacementPolicy(decoys_per_dir=1), registry, ["r1"])
        assert plan == [("b", "r1")]

    def test_idempotent_when_covered(self):
        tree = {"a": snap("a", [])}
        registry = {"a/x": {"recipe_id": "r1"}}
        assert plan_placement(tree, PlacementPolicy(), registry, ["r1"]) == []

    def test_respects_glob(self):
        tree = {"docs": snap("docs", []), "tmp": snap("tmp", [])}
        pol = PlacementPolicy(protected_dirs=("docs",))
        plan = plan_placement(tree, pol, {}, ["r1"])
        assert plan == [("docs", "r1")]

    def test_multiple_per_dir_rotates_recipes(self):
        tree = {"a": snap("a", [])}
        pol = PlacementPolicy(decoys_per_dir=2)
        plan = plan_placement(tree, pol, {}, ["r1", "r2"])
        assert [(d, r) for d, r in plan] == [("a", "r1"), ("a", "r2")]


class TestCoverage:
    def test_report_shape(self):
        tree = {"a": snap("a", [("decoy", 10, NOW - 5), ("f", 10, NOW - 50)]),
                "b": snap("b", [])}
        registry = {"a/decoy": {"recipe_id": "r", "last_freshened": NOW - 10, "k": 1}}
        rep = coverage_report(tree, registry, PlacementPolicy(), now=NOW)
        assert rep["protected_dirs"] == 2
        assert rep["covered_dirs"] == 1
        assert rep["stale_decoys"] == []
        assert rep["rank_violations"] == []

    def test_flags_stale_and_outranked(self):
        tree = {"a": snap("a", [("decoy", 10, NOW - 500), ("f", 10, NOW - 50)])}
        registry = {"a/decoy": {"recipe_id": "r", "last_freshened": NOW - 9 * 86400, "k": 1}}
        rep = coverage_report(tree, registry, PlacementPolicy(), now=NOW)
        assert rep["stale_decoys"] == ["a/decoy"]
        assert rep["rank_violations"] == ["a/decoy"]

    def test_missing_decoy_file_is_violation(self):
        tree = {"a": snap("a", [])}
        registry = {"a/decoy": {"recipe_id": "r", "last_freshened": NOW, "k": 1}}
        rep = coverage_report(tree, registry, PlacementPolicy(), now=NOW)
        assert rep["rank_violations"] == ["a/decoy"]


@pytest.fixture
def mounted(tmp_path):
    backing = tmp_path / "backing"
    for d in ("alpha", "beta"):
        (backing / d).mkdir(parents=True)
        for i in range(4):
            (backing / d / f"note_{i}.txt").write_bytes(b"hello world %d\n" % i)
    fs = SentryFS(str(backing), str(tmp_path / "state"))
    fs.mount()
    yield fs
    fs.unmount()


class TestOrchestration:
    def test_plant_registers_and_writes(self, mounted):
        planter = Planter(mounted, DEFAULT_RECIPES)
        planted = planter.run(seed=11)
        # root + alpha + beta, one decoy each
        assert len(planted) == 3
        for path in planted:
            assert mounted.is_decoy(path)
            meta = mounted.decoys()[path]
            assert set(meta) >= {"recipe_id", "created_at", "last_freshened", "sha256"}
        # replant plans nothing
        assert planter.plan() == []

    def test_fresh_plant_lands_in_topk(self, mounted):
        planter = Planter(mounted, DEFAULT_RECIPES)
        planted = planter.run(seed=5, fresh=True)
        tree = snapshot_tree(mounted.backing_root)
        for path in planted:
            d = path.rsplit("/", 1)[0] if "/" in path else ""
            name = path.rsplit("/", 1)[-1]
            assert rank_by_recency(tree[d].entries, name) <= 1

    def test_stale_plant_then_freshener_recovers(self, mounted):
        planter = Planter(mounted, DEFAULT_RECIPES)
        planted = planter.run(seed=5, fresh=False)
        crowded = [p for p in planted if "/" in p]  # root decoy has no siblings
        tree = snapshot_tree(mounted.backing_root)
        ranks = [rank_by_recency(tree[p.rsplit("/", 1)[0]].entries,
                                 p.rsplit("/", 1)[-1]) for p in crowded]
        assert all(r > 1 for r in ranks)  # backdated decoys start cold
        touched = Freshener(mounted).run_once(seed=3)
        assert sorted(touched) == sorted(crowded)
        tree = snapshot_tree(mounted.backing_root)
        for p in planted:
            d = p.rsplit("/", 1)[0] if "/" in p else ""
            assert rank_by_recency(tree[d].entries, p.rsplit("/", 1)[-1]) <= 1

    def test_freshener_skips_already_ranked(self, mounted):
        planter = Planter(mounted, DEFAULT_RECIPES)
        planter.run(seed=5, fresh=True)
        assert Freshener(mounted).run_once(seed=3) == []

    def test_retire_removes_files_and_registry(self, mounted):
        planter = Planter(mounted, DEFAULT_RECIPES)
        planted = planter.run(seed=5)
        by_recipe = {p: mounted.decoys()[p]["recipe_id"] for p in planted}
        victims = [p for p, r in by_recipe.items() if r == "saudi-iban"]
        removed = planter.retire(["saudi-iban"])
        assert sorted(removed) == sorted(victims)
        for p in victims:
            assert not mounted.is_decoy(p)
        assert "saudi-iban" not in {m["recipe_id"] for m in mounted.decoys().values()}

    def test_coverage_integration(self, mounted):
        planter = Planter(mounted, DEFAULT_RECIPES)
        planter.run(seed=5)
        rep = planter.coverage()
        assert rep["covered_dirs"] == rep["protected_dirs"] == 3
        assert rep["rank_violations"] == []
