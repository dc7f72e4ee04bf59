"""Guarded filesystem: passthrough reads, quarantined writes, session
views, decoy alerts, hash-guarded commits, restart and crash healing.

The base-immutability oracle is a full-tree SHA-256 manifest taken before
and after untrusted activity.
"""

import os

import pytest

from sentryfs.errors import (
    AlreadyResolved,
    BackingMissing,
    HandleClosed,
    NotFound,
    PathEscape,
    SessionKilled,
    StaleBase,
    Unsupported,
)
from sentryfs.fscore import GuardConfig, SentryFS, normalize_path


@pytest.fixture
def tree(tmp_path):
    root = tmp_path / "files"
    (root / "docs").mkdir(parents=True)
    (root / "pics").mkdir()
    (root / "docs" / "letter.txt").write_bytes(b"Dear sir or madam,\n")
    (root / "docs" / "plan.txt").write_bytes(b"step one\nstep two\n")
    (root / "pics" / "photo.jpg").write_bytes(b"\xff\xd8\xff\xe0" + b"p" * 64)
    return root


def mounted(tmp_path, tree, config=None, state_name="state"):
    fs = SentryFS(str(tree), str(tmp_path / state_name), config=config)
    fs.mount()
    return fs


def read_all(fs, path, actor):
    h = fs.fs_open(path, "read", actor)
    try:
        return fs.fs_read(h, 0, -1)
    finally:
        fs.fs_close(h)


def write_all(fs, path, data, actor):
    h = fs.fs_open(path, "write", actor)
    try:
        fs.fs_write(h, 0, data)
    finally:
        fs.fs_close(h)


# --- mount and paths -----------------------------------------------------------


def test_mount_missing_backing(tmp_path):
    fs = SentryFS(str(tmp_path / "nope"), str(tmp_path / "state"))
    with pytest.raises(BackingMissing):
        fs.mount()


def test_state_dir_must_be_outside_backing(tmp_path, tree):
    with pytest.raises(ValueError):
        SentryFS(str(tree), str(tree / "state"))


def test_path_escapes_rejected():
    for bad in ["../x", "/etc/passwd", "a/../../b", "a\\b", "~root/x"]:
        with pytest.raises(PathEscape):
            normalize_path(bad)
    assert normalize_path("a/./b//c") == "a/b/c"
    assert normalize_path("") == ""


def test_mount_event_first(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    evs = fs.events.events_after(0)
    assert evs[0].kind == "Mount"
    assert evs[0].seq == 1


# --- reads ----------------------------------------------------------------------


def test_read_passthrough(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    assert read_all(fs, "docs/letter.txt", "s1") == b"Dear sir or madam,\n"
    kinds = [e.kind for e in fs.events.events_after(0)]
    assert kinds == ["Mount", "Open", "Read"]


def test_read_missing_raises(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    with pytest.raises(NotFound):
        fs.fs_open("docs/ghost.txt", "read", "s1")


def test_write_handle_cannot_read_and_vice_versa(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    h = fs.fs_open("docs/letter.txt", "write", "s1")
    with pytest.raises(Unsupported):
        fs.fs_read(h, 0, 10)
    fs.fs_close(h)
    h = fs.fs_open("docs/letter.txt", "read", "s1")
    with pytest.raises(Unsupported):
        fs.fs_write(h, 0, b"x")
    fs.fs_close(h)
    with pytest.raises(HandleClosed):
        fs.fs_read(h, 0, 1)


# --- write quarantine -------------------------------------------------------------


def test_write_never_touches_backing(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    before = fs.manifest()
    write_all(fs, "docs/letter.txt", b"ENCRYPTED!", "mal")
    assert fs.manifest() == before
    assert (tree / "docs" / "letter.txt").read_bytes() == b"Dear sir or madam,\n"


def test_session_reads_back_its_own_writes(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    h = fs.fs_open("docs/letter.txt", "read_write", "s1")
    fs.fs_write(h, 0, b"Dear madam or sir,\n")
    assert fs.fs_read(h, 0, -1) == b"Dear madam or sir,\n"
    fs.fs_close(h)
    # a different session still sees the original
    assert read_all(fs, "docs/letter.txt", "s2") == b"Dear sir or madam,\n"


def test_one_clone_per_path_session(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/letter.txt", b"one", "s1")
    write_all(fs, "docs/letter.txt", b"two", "s1")
    clones = [e for e in fs.events.events_after(0) if e.kind == "CloneCreated"]
    assert len(clones) == 1
    assert len(fs.pending_changes()) == 1
    write_all(fs, "docs/letter.txt", b"three", "s2")
    assert len(fs.pending_changes()) == 2


def test_create_is_virtual_until_approved(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/new.txt", b"fresh", "s1")
    assert not (tree / "docs" / "new.txt").exists()
    assert read_all(fs, "docs/new.txt", "s1") == b"fresh"
    with pytest.raises(NotFound):
        read_all(fs, "docs/new.txt", "s2")
    names_s1 = {e.name for e in fs.fs_readdir("docs", "s1")}
    names_s2 = {e.name for e in fs.fs_readdir("docs", "s2")}
    assert "new.txt" in names_s1
    assert "new.txt" not in names_s2


def test_rename_is_virtual_per_session(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    fs.fs_rename("docs/plan.txt", "docs/plan.txt.locked", "mal")
    assert (tree / "docs" / "plan.txt").exists()
    mal_names = {e.name for e in fs.fs_readdir("docs", "mal")}
    assert mal_names == {"letter.txt", "plan.txt.locked"}
    other = {e.name for e in fs.fs_readdir("docs", "s2")}
    assert other == {"letter.txt", "plan.txt"}
    # renamed-in path reads the original bytes for the renamer
    assert read_all(fs, "docs/plan.txt.locked", "mal") == b"step one\nstep two\n"
    with pytest.raises(NotFound):
        read_all(fs, "docs/plan.txt", "mal")


def test_rename_then_write_quarantines_original(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    before = fs.manifest()
    fs.fs_rename("docs/plan.txt", "docs/plan.txt.locked", "mal")
    write_all(fs, "docs/plan.txt.locked", b"\x00garbled\x00", "mal")
    assert fs.manifest() == before
    kinds = {c.kind for c in fs.pending_changes()}
    assert kinds == {"rename", "content_write"}


def test_unlink_is_virtual(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    fs.fs_unlink("docs/plan.txt", "mal")
    assert (tree / "docs" / "plan.txt").exists()
    assert "plan.txt" not in {e.name for e in fs.fs_readdir("docs", "mal")}
    assert "plan.txt" in {e.name for e in fs.fs_readdir("docs", "s2")}
    with pytest.raises(NotFound):
        read_all(fs, "docs/plan.txt", "mal")


def test_unlink_own_creation_cancels_change(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/tmp.txt", b"scratch", "s1")
    assert len(fs.pending_changes()) == 1
    fs.fs_unlink("docs/tmp.txt", "s1")
    assert fs.pending_changes() == []


def test_truncate_virtual_and_stat_reflects_it(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    fs.fs_truncate("docs/plan.txt", 4, "s1")
    assert fs.fs_stat("docs/plan.txt", "s1").size == 4
    assert fs.fs_stat("docs/plan.txt", "s2").size == len(b"step one\nstep two\n")
    assert read_all(fs, "docs/plan.txt", "s1") == b"step"
    assert (tree / "docs" / "plan.txt").read_bytes() == b"step one\nstep two\n"


def test_set_times_virtual(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    fs.fs_set_times("docs/plan.txt", 1234567890.0, "s1")
    assert fs.fs_stat("docs/plan.txt", "s1").mtime == 1234567890.0
    assert fs.fs_stat("docs/plan.txt", "s2").mtime != 1234567890.0


# --- approval ---------------------------------------------------------------------


def test_approve_content_write(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/letter.txt", b"v2 of the letter\n", "s1")
    change = fs.pending_changes()[0]
    fs.approve(change.change_id)
    assert (tree / "docs" / "letter.txt").read_bytes() == b"v2 of the letter\n"
    assert fs.pending_changes() == []
    with pytest.raises(AlreadyResolved):
        fs.approve(change.change_id)
    kinds = [e.kind for e in fs.events.events_after(0)]
    assert "ChangeCommitted" in kinds


def test_approve_new_file(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/new.txt", b"fresh", "s1")
    fs.approve(fs.pending_changes()[0].change_id)
    assert (tree / "docs" / "new.txt").read_bytes() == b"fresh"


def test_approve_rename_and_unlink(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    fs.fs_rename("docs/plan.txt", "docs/plan.old", "s1")
    fs.fs_unlink("docs/letter.txt", "s1")
    by_kind = {c.kind: c for c in fs.pending_changes()}
    fs.approve(by_kind["rename"].change_id)
    fs.approve(by_kind["unlink"].change_id)
    assert (tree / "docs" / "plan.old").exists()
    assert not (tree / "docs" / "plan.txt").exists()
    assert not (tree / "docs" / "letter.txt").exists()


def test_approve_set_attr(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    fs.fs_set_times("docs/plan.txt", 1111111111.0, "s1")
    fs.approve(fs.pending_changes()[0].change_id)
    assert os.path.getmtime(tree / "docs" / "plan.txt") == 1111111111.0


def test_discard_drops_change(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/letter.txt", b"graffiti", "s1")
    fs.discard(fs.pending_changes()[0].change_id)
    assert fs.pending_changes() == []
    assert (tree / "docs" / "letter.txt").read_bytes() == b"Dear sir or madam,\n"
    # after the discard the session sees the backing file again
    assert read_all(fs, "docs/letter.txt", "s1") == b"Dear sir or madam,\n"


def test_stale_base_guard(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/letter.txt", b"mine", "s1")
    change = fs.pending_changes()[0]
    (tree / "docs" / "letter.txt").write_bytes(b"changed by someone else")
    with pytest.raises(StaleBase):
        fs.approve(change.change_id)
    assert len(fs.pending_changes()) == 1  # still resolvable later


def test_stale_base_new_file_squatter(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/new.txt", b"mine", "s1")
    (tree / "docs" / "new.txt").write_bytes(b"squatter")
    with pytest.raises(StaleBase):
        fs.approve(fs.pending_changes()[0].change_id)


def test_commit_of_one_session_stales_the_other(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/letter.txt", b"from s1", "s1")
    write_all(fs, "docs/letter.txt", b"from s2", "s2")
    c1 = next(c for c in fs.pending_changes() if c.actor == "s1")
    c2 = next(c for c in fs.pending_changes() if c.actor == "s2")
    fs.approve(c1.change_id)
    with pytest.raises(StaleBase):
        fs.approve(c2.change_id)


def test_change_preview_caps_at_4096(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/big.bin", b"z" * 10000, "s1")
    change = fs.pending_changes()[0]
    assert fs.change_preview(change.change_id) == b"z" * 4096


# --- decoys and alerts ---------------------------------------------------------------


def test_decoy_write_raises_alert_once(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    fs.write_trusted("docs/accounts_2041.txt", b"SA123...\n")
    fs.register_decoy("docs/accounts_2041.txt", {"recipe_id": "saudi-iban"})
    write_all(fs, "docs/accounts_2041.txt", b"enc1", "mal")
    write_all(fs, "docs/accounts_2041.txt", b"enc2", "mal")
    alerts = fs.alerts()
    assert len(alerts) == 1
    assert alerts[0].path == "docs/accounts_2041.txt"
    assert alerts[0].actor == "mal"
    assert alerts[0].detail["score"] == 1.0
    assert fs.score("mal")["score"] == 1.0
    assert fs.score("mal")["verdict"] == "malign"


def test_decoy_read_is_not_an_alert(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    fs.write_trusted("docs/bait.txt", b"bait")
    fs.register_decoy("docs/bait.txt")
    assert read_all(fs, "docs/bait.txt", "backup") == b"bait"
    assert fs.alerts() == []
    assert fs.score("backup")["score"] < 0.5


def test_decoy_rename_unlink_truncate_alert(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    for i, op in enumerate(["rename", "unlink", "truncate"]):
        path = f"docs/bait{i}.txt"
        fs.write_trusted(path, b"bait")
        fs.register_decoy(path)
        actor = f"mal{i}"
        if op == "rename":
            fs.fs_rename(path, path + ".locked", actor)
        elif op == "unlink":
            fs.fs_unlink(path, actor)
        else:
            fs.fs_truncate(path, 0, actor)
        assert fs.score(actor)["score"] == 1.0, op
    assert len(fs.alerts()) == 3


def test_alert_dedup_is_per_session_and_path(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    fs.write_trusted("docs/bait.txt", b"bait")
    fs.register_decoy("docs/bait.txt")
    write_all(fs, "docs/bait.txt", b"x", "m1")
    write_all(fs, "docs/bait.txt", b"x", "m2")
    assert len(fs.alerts()) == 2


def test_kill_session_on_alert(tmp_path, tree):
    fs = mounted(tmp_path, tree, config=GuardConfig(kill_session_on_alert=True))
    fs.write_trusted("docs/bait.txt", b"bait")
    fs.register_decoy("docs/bait.txt")
    with pytest.raises(SessionKilled):
        write_all(fs, "docs/bait.txt", b"x", "mal")
    with pytest.raises(SessionKilled):
        read_all(fs, "docs/letter.txt", "mal")
    # the alert was still recorded and other sessions are unaffected
    assert len(fs.alerts()) == 1
    assert read_all(fs, "docs/letter.txt", "s2") == b"Dear sir or madam,\n"


# --- restart and healing -----------------------------------------------------------


def test_pending_survive_restart(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/letter.txt", b"edited", "s1")
    change_id = fs.pending_changes()[0].change_id
    fs.unmount()
    fs2 = mounted(tmp_path, tree)
    pend = fs2.pending_changes()
    assert [c.change_id for c in pend] == [change_id]
    fs2.approve(change_id)
    assert (tree / "docs" / "letter.txt").read_bytes() == b"edited"


def test_decoy_registry_survives_restart(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    fs.write_trusted("docs/bait.txt", b"b")
    fs.register_decoy("docs/bait.txt", {"recipe_id": "r"})
    fs.unmount()
    fs2 = mounted(tmp_path, tree)
    assert fs2.is_decoy("docs/bait.txt")
    write_all(fs2, "docs/bait.txt", b"x", "mal")
    assert len(fs2.alerts()) == 1


def test_crash_between_apply_and_resolve_heals(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/letter.txt", b"committed bytes", "s1")
    change = fs.pending_changes()[0]
    # simulate the crash window: apply the backing effect, skip the resolve
    data = fs.quarantine.read_shadow(change)
    (tree / "docs" / "letter.txt").write_bytes(data)
    fs.unmount()
    fs2 = mounted(tmp_path, tree)
    assert fs2.pending_changes() == []
    healed = [e for e in fs2.events.events_after(0)
              if e.kind == "ChangeCommitted" and e.detail.get("healed")]
    assert len(healed) == 1
    assert (tree / "docs" / "letter.txt").read_bytes() == b"committed bytes"


# --- events -----------------------------------------------------------------------


def test_event_stream_shape(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/letter.txt", b"abc", "s1")
    evs = fs.events.events_after(0)
    assert [e.seq for e in evs] == list(range(1, len(evs) + 1))
    kinds = [e.kind for e in evs]
    assert kinds == ["Mount", "Open", "CloneCreated", "Write"]
    w = evs[-1]
    assert w.detail["size"] == 3
    assert "entropy" in w.detail


def test_write_event_entropy_sane(tmp_path, tree):
    fs = mounted(tmp_path, tree)
    write_all(fs, "docs/letter.txt", b"\x00" * 100, "s1")
    w = [e for e in fs.events.events_after(0) if e.kind == "Write"][0]
    assert w.detail["entropy"] == 0.0
