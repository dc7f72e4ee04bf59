"""Long-running daemon: guarded fs + background tasks + HTTP/JSON API.

One daemon per state_dir, enforced with a pid lock file. The API binds
loopback by default; binding anything else requires a bearer token. Every
response is JSON carrying the schema version `v`, and no response body
exceeds 1 MiB (list endpoints truncate with an explicit flag, previews are
capped at 4 KiB per side).
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import random
import re
import socket
import sys
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import (
    AlreadyResolved,
    AlreadyRunning,
    BindFailed,
    NetworkUnreachable,
    NotFound,
    ParseError,
    SentryError,
    ShadowMissing,
    StaleBase,
)
from .fscore import GuardConfig, SentryFS
from .intel import IntelClient, default_profile, load_public_key
from .placement import Freshener, PlacementPolicy, Planter
from .quarantine import CONTENT_KINDS

log = logging.getLogger("sentryfs.daemon")

SCHEMA_V = 1
PREVIEW_BYTES = 4096
LONGPOLL_SECONDS = 25.0
MAX_RESPONSE = 1 << 20
LIST_CAP = 2000

LOOPBACK_HOSTS = ("127.0.0.1", "localhost", "::1", "")


@dataclass
class DaemonConfig:
    backing_root: str
    state_dir: str
    api_bind: str = "127.0.0.1:0"
    api_token: str = ""
    freshen_interval: float = 600.0
    intel_poll_interval: float = 3600.0
    intel_endpoint: str = ""
    intel_trust_key: str = ""  # path to hex-encoded Ed25519 public key
    kill_session_on_alert: bool = False
    simulate_enabled: bool = False
    ui_dir: str = ""
    protected_dirs: tuple = ("**",)
    decoys_per_dir: int = 1

    @classmethod
    def from_toml(cls, path: str) -> "DaemonConfig":
        with open(path, "rb") as f:
            raw = tomllib.load(f)
        fs = raw.get("fs", {})
        api = raw.get("api", {})
        freshen = raw.get("freshen", {})
        intel = raw.get("intel", {})
        sim = raw.get("simulate", {})
        place = raw.get("placement", {})
        return cls(
            backing_root=fs["backing_root"],
            state_dir=fs["state_dir"],
            kill_session_on_alert=bool(fs.get("kill_session_on_alert", False)),
            api_bind=api.get("bind", "127.0.0.1:0"),
            api_token=api.get("token", ""),
            freshen_interval=float(freshen.get("interval", 600)),
            intel_poll_interval=float(intel.get("poll_interval", 3600)),
            intel_endpoint=intel.get("endpoint", ""),
            intel_trust_key=intel.get("trust_key", ""),
            simulate_enabled=bool(sim.get("enable", False)),
            ui_dir=raw.get("ui", {}).get("dir", ""),
            protected_dirs=tuple(place.get("protected_dirs", ["**"])),
            decoys_per_dir=int(place.get("decoys_per_dir", 1)),
        )


def default_config_toml(backing_root: str, state_dir: str, bind: str = "127.0.0.1:0") -> str:
    return f"""[fs]
backing_root = "{backing_root}"
state_dir = "{state_dir}"
kill_session_on_alert = false

[api]
bind = "{bind}"
token = ""

[freshen]
interval = 600

[intel]
poll_interval = 3600
endpoint = ""
trust_key = ""

[placement]
protected_dirs = ["**"]
decoys_per_dir = 1

[simulate]
enable = false
"""


def _parse_bind(bind: str) -> tuple[str, int]:
    host, _, port = bind.rpartition(":")
    if not host:
        raise BindFailed(f"bind must be host:port, got {bind!r}")
    try:
        return host, int(port)
    except ValueError:
        raise BindFailed(f"bad port in {bind!r}") from None


class _PidLock:
    """One daemon per state_dir. A stale lock (dead pid) is reclaimed."""

    def __init__(self, state_dir: str):
        self.path = os.path.join(state_dir, "daemon.lock")
        self.held = False

    def acquire(self) -> None:
        os.makedirs(os.path.dirname(self.path), exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(fd, str(os.getpid()).encode())
                os.close(fd)
                self.held = True
                return
            except FileExistsError:
                try:
                    with open(self.path) as f:
                        pid = int(f.read().strip() or "0")
                except (OSError, ValueError):
                    pid = 0
                if pid and _pid_alive(pid):
                    raise AlreadyRunning(f"daemon pid {pid} holds {self.path}")
                os.unlink(self.path)  # stale; retry once
        raise AlreadyRunning(self.path)

    def release(self) -> None:
        if self.held:
            try:
                os.unlink(self.path)
            except FileNotFoundError:
                pass
            self.held = False


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    # kill(0) succeeds on zombies; an unreaped holder can't be serving
    try:
        with open(f"/proc/{pid}/stat", "rb") as f:
            if f.read().rpartition(b")")[2].split()[:1] == [b"Z"]:
                return False
    except OSError:
        pass
    return True


class Daemon:
    def __init__(self, config: DaemonConfig):
        self.config = config
        self.fs: Optional[SentryFS] = None
        self.planter: Optional[Planter] = None
        self.freshener: Optional[Freshener] = None
        self.intel: Optional[IntelClient] = None
        self.httpd: Optional[ThreadingHTTPServer] = None
        self.url = ""
        self._lock = _PidLock(config.state_dir)
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._started = time.time()

    # -- lifecycle

    def start(self) -> None:
        host, port = _parse_bind(self.config.api_bind)
        if host not in LOOPBACK_HOSTS and not self.config.api_token:
            raise BindFailed(f"refusing non-loopback bind {host!r} without api.token")
        self._lock.acquire()
        try:
            self._mount_and_plant()
            self._bind(host, port)
        except Exception:
            self._lock.release()
            raise
        self._start_tasks()
        log.info("daemon up at %s over %s", self.url, self.config.backing_root)

    def _mount_and_plant(self) -> None:
        cfg = GuardConfig(kill_session_on_alert=self.config.kill_session_on_alert,
                          preview_bytes=PREVIEW_BYTES)
        self.fs = SentryFS(self.config.backing_root, self.config.state_dir, cfg)
        self.fs.mount()  # recovery completes before the API binds
        trust = None
        if self.config.intel_trust_key:
            trust = load_public_key(self.config.intel_trust_key)
        self.intel = IntelClient(
            os.path.join(self.config.state_dir, "intel"),
            endpoint=self.config.intel_endpoint or None,
            trust_key=trust)
        profile = self.intel.active_profile() or default_profile()
        if profile.score_model is not None:
            self.fs.tracker.model = profile.score_model
        if profile.extension_blocklist:
            self.fs.tracker.ext_blocklist = frozenset(
                e.lower() for e in profile.extension_blocklist)
        policy = PlacementPolicy(protected_dirs=self.config.protected_dirs,
                                 decoys_per_dir=self.config.decoys_per_dir)
        self.planter = Planter(self.fs, profile.decoy_recipes, policy)
        self.planter.run(seed=random.SystemRandom().getrandbits(32))
        self.freshener = Freshener(self.fs)
        self.freshener.run_once()

    def _bind(self, host: str, port: int) -> None:
        handler = _make_handler(self)
        try:
            self.httpd = ThreadingHTTPServer((host, port), handler)
        except OSError as e:
            raise BindFailed(f"{host}:{port}: {e}") from None
        self.url = f"http://{host}:{self.httpd.server_address[1]}"

    def _start_tasks(self) -> None:
        t = threading.Thread(target=self.httpd.serve_forever, daemon=True, name="api")
        t.start()
        self._threads.append(t)
        for name, target in (("freshen", self._freshen_loop), ("intel", self._intel_loop)):
            t = threading.Thread(target=target, daemon=True, name=name)
            t.start()
            self._threads.append(t)

    def stop(self) -> None:
        self._stop.set()
        if self.httpd:
            self.httpd.shutdown()
            self.httpd.server_close()
        for t in self._threads:
            if t is not threading.current_thread():
                t.join(timeout=5)
        if self.fs is not None:
            try:
                self.fs.unmount()  # flushes event log and ledger
            except Exception:
                log.exception("unmount during stop failed")
        self._lock.release()

    def wait(self) -> None:
        self._stop.wait()

    # -- background tasks

    def _jittered(self, interval: float) -> float:
        return interval * random.uniform(0.8, 1.2)  # +-20% per spec default

    def _freshen_loop(self) -> None:
        while not self._stop.wait(self._jittered(self.config.freshen_interval)):
            try:
                self.planter.run(seed=random.SystemRandom().getrandbits(32))
                self.freshener.run_once()
            except Exception:
                log.exception("freshen cycle failed")

    def _intel_loop(self) -> None:
        if not self.config.intel_endpoint:
            return
        while not self._stop.wait(self._jittered(self.config.intel_poll_interval)):
            try:
                self.refresh_intel()
            except NetworkUnreachable as e:
                log.warning("intel poll skipped: %s", e)
            except Exception:
                log.exception("intel cycle failed")

    def refresh_intel(self) -> list:
        """Fetch + apply any new profile versions; returns PlanDiffs."""
        if not self.intel or not self.intel.endpoint:
            return []
        return self.intel.refresh(planter=self.planter, guard=self.fs)

    # -- view models used by the handler

    def status_body(self) -> dict:
        st = self.fs.status()
        active = self.intel.active_profile() if self.intel else None
        st["profile"] = (f"{active.profile_id}@v{active.version}" if active else "none")
        return st

    def alert_entries(self, since: int) -> list:
        out = []
        for e in self.fs.events.events_after(since, limit=10 ** 9):
            if e.kind != "AlertRaised":
                continue
            d = {"seq": e.seq, "ts": e.ts, "path": e.path, "actor": e.actor}
            d.update(e.detail or {})
            out.append(d)
        return out

    def pending_entries(self, min_score: float) -> list:
        out = []
        for ch in self.fs.pending_changes():
            snap = self.fs.score(ch.actor)
            if snap["score"] < min_score:
                continue
            out.append({
                "id": ch.change_id,
                "path": ch.path,
                "actor": ch.actor,
                "kind": ch.kind,
                "created_ts": ch.created_ts,
                "score": snap["score"],
                "verdict": snap["verdict"],
                "detail": ch.detail or {},
            })
        return out

    def pending_detail(self, change_id: str) -> dict:
        # the body is built without the fs lock, so an approve/discard can
        # resolve the change at any point during the build (including
        # unlinking its shadow under the preview read); any of those
        # failures downgrades to the resolution answer
        try:
            return self._pending_detail_live(change_id)
        except (AlreadyResolved, ShadowMissing, FileNotFoundError) as e:
            action = self.fs.quarantine.resolution(change_id)
            if action is None:
                if isinstance(e, FileNotFoundError):
                    raise ShadowMissing(str(e)) from e
                raise
            return {"id": change_id,
                    "status": "Committed" if action == "commit" else "Discarded"}

    def _pending_detail_live(self, change_id: str) -> dict:
        change = self.fs.quarantine.get(change_id)
        snap = self.fs.score(change.actor)
        model = self.fs.tracker.model
        base_path = os.path.join(self.fs.backing_root, change.path)
        base = b""
        base_size = 0
        if change.kind != "new_file" and os.path.isfile(base_path):
            base_size = os.path.getsize(base_path)
            with open(base_path, "rb") as f:
                base = f.read(PREVIEW_BYTES)
        shadow = b""
        shadow_size = 0
        if change.kind in CONTENT_KINDS:
            shadow = self.fs.change_preview(change_id)
            shadow_size = self.fs.quarantine.shadow_size(change)
        return {
            "id": change.change_id,
            "status": "Pending",
            "path": change.path,
            "actor": change.actor,
            "kind": change.kind,
            "created_ts": change.created_ts,
            "detail": change.detail or {},
            "score": snap["score"],
            "verdict": snap["verdict"],
            "features": snap["features"],
            # the weights behind the score, so a client can show contributions
            "model": {
                "weights": dict(model.weights),
                "bias": model.bias,
                "suspicious_threshold": model.suspicious_threshold,
                "malign_threshold": model.malign_threshold,
            },
            "base_sha256": change.base_sha256,
            "preview": {
                "base": _preview_sides(base, base_size),
                "shadow": _preview_sides(shadow, shadow_size),
            },
        }

    def decoy_entries(self) -> list:
        out = []
        for path, meta in sorted(self.fs.decoys().items()):
            d = {"path": path}
            d.update(meta)
            out.append(d)
        return out


def _preview_sides(data: bytes, full_size: int) -> dict:
    return {
        "hex": data.hex(),
        "text": data.decode("utf-8", errors="replace"),
        "size": full_size,
        "truncated": full_size > len(data),
    }


_PENDING_RE = re.compile(r"^/v1/pending/([0-9a-f]{32})$")
_PENDING_ACT_RE = re.compile(r"^/v1/pending/([0-9a-f]{32})/(approve|discard)$")


def _make_handler(daemon: Daemon):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("%s " + fmt, self.address_string(), *args)

        # -- plumbing

        def _send_json(self, status: int, obj: dict) -> None:
            obj.setdefault("v", SCHEMA_V)
            body = json.dumps(obj).encode("utf-8")
            if len(body) > MAX_RESPONSE:
                body = json.dumps({"v": SCHEMA_V, "error": "ResponseTooLarge"}).encode()
                status = 500
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            try:
                self.wfile.write(body)
            except BrokenPipeError:
                pass

        def _authorized(self) -> bool:
            token = daemon.config.api_token
            if not token:
                return True
            got = self.headers.get("Authorization", "")
            return got == f"Bearer {token}"

        def _query(self) -> dict:
            from urllib.parse import parse_qs, urlparse
            q = parse_qs(urlparse(self.path).query)
            return {k: v[-1] for k, v in q.items()}

        def _route(self) -> str:
            from urllib.parse import urlparse
            return urlparse(self.path).path

        def _int_param(self, q: dict, name: str, default: int) -> int:
            raw = q.get(name)
            if raw is None:
                return default
            try:
                return int(raw)
            except ValueError:
                raise _BadParam(name, raw) from None

        def _float_param(self, q: dict, name: str, default: float) -> float:
            raw = q.get(name)
            if raw is None:
                return default
            try:
                return float(raw)
            except ValueError:
                raise _BadParam(name, raw) from None

        # -- verbs

        def do_GET(self):
            if not self._authorized():
                self._send_json(401, {"error": "Unauthorized"})
                return
            path = self._route()
            try:
                if path == "/v1/status":
                    self._send_json(200, daemon.status_body())
                elif path == "/v1/alerts":
                    q = self._query()
                    since = self._int_param(q, "since", 0)
                    alerts = daemon.alert_entries(since)
                    body = {"alerts": alerts[:LIST_CAP], "truncated": len(alerts) > LIST_CAP}
                    self._send_json(200, body)
                elif path == "/v1/pending":
                    q = self._query()
                    min_score = self._float_param(q, "min_score", 0.0)
                    pending = daemon.pending_entries(min_score)
                    body = {"pending": pending[:LIST_CAP], "truncated": len(pending) > LIST_CAP}
                    self._send_json(200, body)
                elif _PENDING_RE.match(path):
                    change_id = _PENDING_RE.match(path).group(1)
                    self._send_json(200, daemon.pending_detail(change_id))
                elif path == "/v1/decoys":
                    decoys = daemon.decoy_entries()
                    body = {"decoys": decoys[:LIST_CAP], "truncated": len(decoys) > LIST_CAP}
                    self._send_json(200, body)
                elif path == "/v1/profile":
                    active = daemon.intel.active_profile() if daemon.intel else None
                    self._send_json(200, {"profile": active.to_dict() if active else None})
                elif path == "/v1/events":
                    q = self._query()
                    since = self._int_param(q, "since", 0)
                    limit = min(self._int_param(q, "limit", 500), 500)
                    wait = min(max(self._float_param(q, "timeout", LONGPOLL_SECONDS),
                                   0.0), LONGPOLL_SECONDS)
                    events = daemon.fs.events.wait_for(since, timeout=wait,
                                                       limit=limit)
                    self._send_json(200, {
                        "events": [e.to_dict() for e in events],
                        "last_seq": daemon.fs.events.last_seq,
                    })
                elif path == "/ui" or path.startswith("/ui/"):
                    self._serve_ui(path)
                else:
                    self._send_json(404, {"error": "NotFound"})
            except _BadParam as e:
                self._send_json(400, {"error": "BadRequest", "detail": str(e)})
            except NotFound:
                self._send_json(404, {"error": "NotFound"})
            except AlreadyResolved:
                self._send_json(409, {"error": "AlreadyResolved"})
            except SentryError as e:
                self._send_json(500, {"error": type(e).__name__, "detail": str(e)})

        def do_POST(self):
            if not self._authorized():
                self._send_json(401, {"error": "Unauthorized"})
                return
            path = self._route()
            try:
                m = _PENDING_ACT_RE.match(path)
                if m:
                    change_id, action = m.group(1), m.group(2)
                    if action == "approve":
                        change = daemon.fs.approve(change_id)
                    else:
                        change = daemon.fs.discard(change_id)
                    self._send_json(200, {
                        "id": change_id,
                        "status": "Committed" if action == "approve" else "Discarded",
                        "path": change.path,
                        "kind": change.kind,
                    })
                elif path == "/v1/profiles/refresh":
                    try:
                        diffs = daemon.refresh_intel()
                    except NetworkUnreachable as e:
                        self._send_json(502, {"error": "NetworkUnreachable", "detail": str(e)})
                        return
                    active = daemon.intel.active_profile() if daemon.intel else None
                    self._send_json(200, {
                        "applied": [
                            {"new_recipes": list(d.new_recipes),
                             "retired_recipes": list(d.retired_recipes),
                             "model_updated": d.model_updated,
                             "blocklist_delta": list(d.blocklist_delta)}
                            for d in diffs
                        ],
                        "profile": (f"{active.profile_id}@v{active.version}"
                                    if active else "none"),
                    })
                elif path == "/v1/simulate":
                    if not daemon.config.simulate_enabled:
                        self._send_json(404, {"error": "NotFound"})
                        return
                    self._simulate()
                else:
                    self._send_json(404, {"error": "NotFound"})
            except NotFound:
                self._send_json(404, {"error": "NotFound"})
            except AlreadyResolved:
                self._send_json(409, {"error": "AlreadyResolved"})
            except StaleBase as e:
                self._send_json(409, {"error": "StaleBase", "detail": str(e)})
            except _BadParam as e:
                self._send_json(400, {"error": "BadRequest", "detail": str(e)})
            except SentryError as e:
                self._send_json(500, {"error": type(e).__name__, "detail": str(e)})

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            if length == 0:
                return {}
            raw = self.rfile.read(length)
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError:
                raise _BadParam("body", "not JSON") from None
            if not isinstance(obj, dict):
                raise _BadParam("body", "not an object")
            return obj

        def _simulate(self) -> None:
            from .ransim import run_attack, strategy_from_string
            body = self._read_body()
            spec = body.get("strategy")
            if not isinstance(spec, str):
                raise _BadParam("strategy", repr(spec))
            seed = body.get("seed", 0)
            if not isinstance(seed, int):
                raise _BadParam("seed", repr(seed))
            active = daemon.intel.active_profile() if daemon.intel else None
            leaked = active.decoy_recipes if active else ()
            try:
                strategy = strategy_from_string(spec, leaked_recipes=leaked)
            except (ParseError, ValueError) as e:
                raise _BadParam("strategy", f"{spec!r} ({e})") from None
            report = run_attack(daemon.fs, strategy, seed=seed)
            self._send_json(200, {"report": {
                "files_enumerated": report.files_enumerated,
                "files_touched_before_alert": report.files_touched_before_alert,
                "alert_raised": report.alert_raised,
                "real_files_modified_after_run": report.real_files_modified_after_run,
                "victims": [[p, c] for p, c in report.victims],
            }})

        def _serve_ui(self, path: str) -> None:
            root = daemon.config.ui_dir
            if not root:
                self._send_json(404, {"error": "NotFound"})
                return
            rel = path[len("/ui"):].lstrip("/") or "index.html"
            full = os.path.realpath(os.path.join(root, rel))
            if not full.startswith(os.path.realpath(root) + os.sep) and \
                    full != os.path.realpath(os.path.join(root, "index.html")):
                self._send_json(404, {"error": "NotFound"})
                return
            if not os.path.isfile(full):
                self._send_json(404, {"error": "NotFound"})
                return
            ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
            with open(full, "rb") as f:
                body = f.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return Handler


class _BadParam(Exception):
    def __init__(self, name: str, value: str):
        super().__init__(f"bad parameter {name}={value}")


def main(argv=None) -> int:
    import argparse
    import signal

    ap = argparse.ArgumentParser(prog="sentryfs-daemon")
    ap.add_argument("--config", required=True, help="path to TOML config")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    config = DaemonConfig.from_toml(args.config)
    daemon = Daemon(config)
    try:
        daemon.start()
    except (AlreadyRunning, BindFailed) as e:
        print(f"sentryfs-daemon: {e}", file=sys.stderr)
        return 1
    print(f"listening at {daemon.url}", flush=True)

    def _term(_sig, _frame):
        daemon.stop()

    signal.signal(signal.SIGTERM, _term)
    signal.signal(signal.SIGINT, _term)
    daemon.wait()
    return 0


if __name__ == "__main__":
    sys.exit(main())
