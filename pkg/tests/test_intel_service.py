"""Reference intel server + client sync loop + signing CLI."""

import json
import logging
import os

import pytest

from sentryfs.errors import NetworkUnreachable
from sentryfs.intel import (
    IntelClient,
    canonicalize,
    default_profile,
    load_public_key,
    sign_profile,
)
from sentryfs.intel_service import IntelServer, sign_main
from tests.test_intel import INTEL_DIR, trust_private, trust_public


@pytest.fixture
def server(tmp_path):
    pdir = tmp_path / "profiles"
    rdir = tmp_path / "reports"
    pdir.mkdir()
    srv = IntelServer(str(pdir), str(rdir))
    srv.start()
    yield srv
    srv.stop()


def write_profile(pdir, name, version, tamper=False):
    p = default_profile(version=version).to_dict()
    p["profile_id"] = name
    signed = sign_profile(p, trust_private())
    raw = canonicalize(signed)
    if tamper:
        raw = raw.replace(b'"issued_at":0', b'"issued_at":1', 1)
    with open(os.path.join(pdir, f"{name}.json"), "wb") as f:
        f.write(raw)


class TestServer:
    def test_fetch_roundtrip(self, server, tmp_path):
        write_profile(server.profile_dir, "alpha", 1)
        write_profile(server.profile_dir, "beta", 2)
        client = IntelClient(str(tmp_path / "state"), endpoint=server.url,
                             trust_key=trust_public())
        got = client.fetch_profiles()
        assert sorted(p.profile_id for p in got) == ["alpha", "beta"]

    def test_tampered_entry_dropped_with_warning(self, server, tmp_path, caplog):
        write_profile(server.profile_dir, "good", 1)
        write_profile(server.profile_dir, "evil", 2, tamper=True)
        client = IntelClient(str(tmp_path / "state"), endpoint=server.url,
                             trust_key=trust_public())
        with caplog.at_level(logging.WARNING, logger="sentryfs.intel"):
            got = client.fetch_profiles()
        assert [p.profile_id for p in got] == ["good"]
        assert any("dropping unverifiable" in r.message for r in caplog.records)

    def test_empty_server(self, server, tmp_path):
        client = IntelClient(str(tmp_path / "state"), endpoint=server.url,
                             trust_key=trust_public())
        assert client.fetch_profiles() == []

    def test_unreachable_raises(self, tmp_path):
        client = IntelClient(str(tmp_path), endpoint="http://127.0.0.1:1",
                             trust_key=trust_public())
        with pytest.raises(NetworkUnreachable):
            client.fetch_profiles()

    def test_refresh_applies_and_reports_flow(self, server, tmp_path):
        write_profile(server.profile_dir, "prof", 3)
        client = IntelClient(str(tmp_path / "state"), endpoint=server.url,
                             trust_key=trust_public())
        diffs = client.refresh()
        assert len(diffs) == 1 and diffs[0].new_recipes
        # replay of the same version is skipped quietly
        assert client.refresh() == []

    def test_report_post_and_outbox_flush(self, server, tmp_path):
        client = IntelClient(str(tmp_path / "state"), endpoint=server.url,
                             trust_key=trust_public())
        report = {"v": 1, "instance_id": "i", "profile_id": "p",
                  "profile_version": 1, "events": []}
        assert client.submit_report(report) is True
        assert server.reports() == [report]
        # now queue two offline, then flush against the live server
        offline = IntelClient(str(tmp_path / "state2"), endpoint="http://127.0.0.1:1")
        r2 = dict(report, profile_version=2)
        r3 = dict(report, profile_version=3)
        offline.submit_report(r2)
        offline.submit_report(r3)
        assert len(offline.outbox()) == 2
        offline.endpoint = server.url
        assert offline.flush_outbox() == 2
        assert offline.outbox() == []
        assert server.reports()[1:] == [r2, r3]

    def test_unknown_paths_404(self, server):
        import urllib.error
        import urllib.request
        with pytest.raises(urllib.error.HTTPError) as ei:
            urllib.request.urlopen(server.url + "/v1/nope")
        assert ei.value.code == 404


class TestSignCli:
    def test_keygen_and_sign(self, tmp_path, capsys):
        prefix = str(tmp_path / "k")
        assert sign_main(["--keygen", prefix]) == 0
        assert os.path.exists(prefix + ".key") and os.path.exists(prefix + ".pub")
        ppath = tmp_path / "prof.json"
        ppath.write_text(json.dumps(default_profile().to_dict()))
        assert sign_main([prefix + ".key", str(ppath)]) == 0
        raw = ppath.read_bytes()
        assert canonicalize(json.loads(raw)) == raw  # canonical on disk
        from sentryfs.intel import verify_profile_bytes
        verify_profile_bytes(raw, load_public_key(prefix + ".pub"))

    def test_usage_error(self, capsys):
        assert sign_main([]) == 2

    def test_missing_key_file(self, tmp_path):
        ppath = tmp_path / "p.json"
        ppath.write_text("{}")
        assert sign_main([str(tmp_path / "nokey"), str(ppath)]) == 1
