"""sentryctl tests: API/CLI parity (--json is byte-equal to the wire),
verb flows against a live daemon, offline verbs, exit codes."""

import json
import os
import socket
import urllib.request

import pytest

from sentryfs import cli
from sentryfs.daemon import Daemon, DaemonConfig
from sentryfs.fstypes import OpenMode

from tests.test_daemon import make_daemon, make_tree, open_write


@pytest.fixture
def daemon(tmp_path):
    d = make_daemon(tmp_path)
    d.start()
    yield d
    d.stop()


def run(args, *argv):
    """Invoke sentryctl in-process against the test daemon."""
    return cli.main(["--api", args, *argv])


def raw_get(url, path):
    with urllib.request.urlopen(url + path, timeout=30) as r:
        return r.read()


class TestJsonParity:
    def test_status_bytes_match_api(self, daemon, capsysbinary):
        assert run(daemon.url, "--json", "status") == 0
        out = capsysbinary.readouterr().out
        wire = raw_get(daemon.url, "/v1/status")
        assert out == wire + b"\n"

    def test_decoys_bytes_match_api(self, daemon, capsysbinary):
        assert run(daemon.url, "--json", "decoys", "list") == 0
        out = capsysbinary.readouterr().out
        assert out == raw_get(daemon.url, "/v1/decoys") + b"\n"

    def test_pending_bytes_match_api(self, daemon, capsysbinary):
        open_write(daemon.fs, "docs/note0.txt", b"delta\n", actor="amy")
        assert run(daemon.url, "--json", "pending") == 0
        out = capsysbinary.readouterr().out
        assert out == raw_get(daemon.url, "/v1/pending") + b"\n"
        assert json.loads(out)["pending"][0]["path"] == "docs/note0.txt"

    def test_pending_min_score_forwarded(self, daemon, capsysbinary):
        open_write(daemon.fs, "docs/note0.txt", b"delta\n", actor="amy")
        assert run(daemon.url, "--json", "pending", "--min-score", "0.99") == 0
        out = capsysbinary.readouterr().out
        assert out == raw_get(daemon.url, "/v1/pending?min_score=0.99") + b"\n"
        assert json.loads(out)["pending"] == []


class TestVerbFlows:
    def test_status_human(self, daemon, capsys):
        assert run(daemon.url, "status") == 0
        out = capsys.readouterr().out
        assert "mounted at" in out
        assert "profile  none" in out

    def test_pending_approve_discard_cycle(self, daemon, capsys):
        open_write(daemon.fs, "docs/note1.txt", b"one\n", actor="amy")
        open_write(daemon.fs, "docs/note2.txt", b"two\n", actor="amy")
        assert run(daemon.url, "pending") == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l]
        assert len(lines) == 2
        ids = [l.split()[0] for l in lines]

        assert run(daemon.url, "approve", ids[0]) == 0
        assert "committed" in capsys.readouterr().out
        assert run(daemon.url, "discard", ids[1]) == 0
        assert "discarded" in capsys.readouterr().out

        assert run(daemon.url, "pending") == 0
        assert "no pending changes" in capsys.readouterr().out

        # double resolve maps the 409 to exit 1 with a message
        assert run(daemon.url, "approve", ids[0]) == 1
        err = capsys.readouterr().err
        assert "409" in err

    def test_pending_detail_render(self, daemon, capsys):
        open_write(daemon.fs, "docs/note3.txt", b"detail body\n", actor="amy")
        run(daemon.url, "pending")
        cid = capsys.readouterr().out.split()[0]
        assert run(daemon.url, "pending", cid) == 0
        out = capsys.readouterr().out
        assert "score" in out
        assert "entropy_delta" in out
        assert "detail body" in out

    def test_unknown_id_exit_1(self, daemon, capsys):
        assert run(daemon.url, "approve", "0" * 32) == 1
        assert "404" in capsys.readouterr().err

    def test_decoys_list(self, daemon, capsys):
        assert run(daemon.url, "decoys", "list") == 0
        out = capsys.readouterr().out
        assert "recipe=" in out
        assert f"{len(daemon.fs.decoys())} decoys" in out

    def test_profile_show_none(self, daemon, capsys):
        assert run(daemon.url, "profile", "show") == 0
        assert "no active profile" in capsys.readouterr().out

    def test_profile_refresh_noop(self, daemon, capsys):
        assert run(daemon.url, "profile", "refresh") == 0
        assert "no new profiles" in capsys.readouterr().out

    def test_events_tail_count(self, daemon, capsys):
        open_write(daemon.fs, "docs/note0.txt", b"ev\n", actor="amy")
        total = daemon.fs.events.last_seq
        assert run(daemon.url, "--json", "events", "tail", "--count", str(total)) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == total
        seqs = [json.loads(l)["seq"] for l in lines]
        assert seqs == list(range(1, total + 1))

    def test_events_tail_no_wait_drains(self, daemon, capsys):
        assert run(daemon.url, "events", "tail", "--no-wait") == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == daemon.fs.events.last_seq

    def test_simulate_online(self, daemon, capsys):
        assert run(daemon.url, "--json", "simulate", "--strategy", "topk:1",
                   "--seed", "5") == 0
        body = json.loads(capsys.readouterr().out)
        assert body["report"]["alert_raised"] is True

    def test_token_flow(self, tmp_path, capsys):
        d = make_daemon(tmp_path, api_token="hunter2")
        d.start()
        try:
            assert cli.main(["--api", d.url, "status"]) == 1
            assert "401" in capsys.readouterr().err
            assert cli.main(["--api", d.url, "--token", "hunter2", "status"]) == 0
        finally:
            d.stop()


class TestUsageErrors:
    def test_unknown_verb_exit_2(self, capsys):
        assert cli.main(["frobnicate"]) == 2

    def test_missing_required_flag_exit_2(self, capsys):
        assert cli.main(["simulate"]) == 2

    def test_no_config_exit_1(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert cli.main(["status"]) == 1
        assert "no config" in capsys.readouterr().err


class TestOfflineSimulate:
    def test_offline_deterministic(self, capsys):
        argv = ["--json", "simulate", "--strategy", "topk:2",
                "--tree", "4x5", "--seed", "11", "--offline"]
        assert cli.main(argv) == 0
        first = capsys.readouterr().out
        assert cli.main(argv) == 0
        second = capsys.readouterr().out
        assert first == second
        report = json.loads(first)["report"]
        assert report["alert_raised"] is True
        assert report["real_files_modified_after_run"] == 0

    def test_offline_matches_direct_run(self, tmp_path, capsys):
        """The CLI sandbox is the same pipeline as calling the simulator
        directly; reports must agree field for field."""
        assert cli.main(["--json", "simulate", "--strategy", "all",
                         "--tree", "3x4", "--seed", "9", "--offline"]) == 0
        via_cli = json.loads(capsys.readouterr().out)["report"]

        from sentryfs.fscore import GuardConfig, SentryFS
        from sentryfs.intel import default_profile
        from sentryfs.placement import Freshener, PlacementPolicy, Planter
        from sentryfs.ransim import (parse_tree_spec, run_attack,
                                     strategy_from_string, synth_tree)
        backing = str(tmp_path / "tree")
        synth_tree(parse_tree_spec("3x4"), seed=9, root=backing)
        fs = SentryFS(backing, str(tmp_path / "state"),
                      GuardConfig(kill_session_on_alert=True))
        fs.mount()
        try:
            profile = default_profile()
            Planter(fs, profile.decoy_recipes,
                    PlacementPolicy(protected_dirs=("?*",))).run(seed=9 * 7919 + 1)
            Freshener(fs).run_once()
            report = run_attack(fs, strategy_from_string("all"), seed=9)
        finally:
            fs.unmount()
        assert via_cli == {
            "files_enumerated": report.files_enumerated,
            "files_touched_before_alert": report.files_touched_before_alert,
            "alert_raised": report.alert_raised,
            "real_files_modified_after_run": report.real_files_modified_after_run,
            "victims": [[p, c] for p, c in report.victims],
        }

    def test_tree_flag_implies_sandbox(self, capsys):
        # no daemon is running; --tree alone must still work
        assert cli.main(["simulate", "--strategy", "ext:txt",
                         "--tree", "2x3", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "files enumerated" in out


class TestInitServeRegen:
    def _free_port(self):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
        s.close()
        return port

    def test_init_writes_config_and_plants(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        make_tree(str(tmp_path / "data"))
        assert cli.main(["init", "--backing", "data", "--state", "state"]) == 0
        out = capsys.readouterr().out
        assert "initialized" in out
        assert os.path.isfile("sentryfs.toml")
        cfg = DaemonConfig.from_toml("sentryfs.toml")
        assert cfg.backing_root == str(tmp_path / "data")
        # decoy registry persisted by the offline plant
        assert os.path.isfile(os.path.join(cfg.state_dir, "decoys.json"))

        # refusing to clobber an existing config
        assert cli.main(["init", "--backing", "data", "--state", "state"]) == 1
        assert "already exists" in capsys.readouterr().err
        assert cli.main(["init", "--backing", "data", "--state", "state",
                         "--force"]) == 0

    def test_config_discovery_and_status(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        make_tree(str(tmp_path / "data"))
        port = self._free_port()
        assert cli.main(["init", "--backing", "data", "--state", "state",
                         "--bind", f"127.0.0.1:{port}"]) == 0
        capsys.readouterr()
        d = Daemon(DaemonConfig.from_toml("sentryfs.toml"))
        d.start()
        try:
            # config picked up from cwd, no --api needed
            assert cli.main(["status"]) == 0
            assert "mounted at" in capsys.readouterr().out
            # and via SENTRYFS_CONFIG
            monkeypatch.chdir(tmp_path / "data")
            monkeypatch.setenv("SENTRYFS_CONFIG",
                               str(tmp_path / "sentryfs.toml"))
            assert cli.main(["status"]) == 0
        finally:
            d.stop()

    def test_regen_refused_while_running(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        make_tree(str(tmp_path / "data"))
        port = self._free_port()
        assert cli.main(["init", "--backing", "data", "--state", "state",
                         "--bind", f"127.0.0.1:{port}"]) == 0
        d = Daemon(DaemonConfig.from_toml("sentryfs.toml"))
        d.start()
        try:
            assert cli.main(["decoys", "regen"]) == 1
            assert "daemon is running" in capsys.readouterr().err
        finally:
            d.stop()

    def test_regen_offline_replaces_decoys(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        make_tree(str(tmp_path / "data"))
        assert cli.main(["init", "--backing", "data", "--state", "state"]) == 0
        capsys.readouterr()
        assert cli.main(["decoys", "regen"]) == 0
        out = capsys.readouterr().out
        assert "regenerated decoys" in out
