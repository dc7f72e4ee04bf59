"""sentryctl: operator CLI over the daemon HTTP API.

Every online verb is a thin client of the API; `--json` prints the raw
response body byte for byte so scripts can rely on API/CLI parity. The
offline verbs (init, decoys regen, simulate with a synthetic tree) mount
the filesystem locally and never need a running daemon.

Exit codes: 0 ok, 1 operational failure, 2 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import tempfile
import time
import urllib.error
import urllib.request

from .daemon import DaemonConfig, Daemon, _PidLock, default_config_toml, _parse_bind
from .errors import AlreadyRunning, ParseError, SentryError
from .fscore import GuardConfig, SentryFS
from .intel import IntelClient, default_profile
from .placement import Freshener, PlacementPolicy, Planter

HTTP_TIMEOUT = 30.0  # above the server's 25 s long-poll window


class CliError(Exception):
    """Operational failure; message goes to stderr, exit 1."""


# --- API client --------------------------------------------------------------


class Client:
    def __init__(self, base_url: str, token: str = ""):
        self.base_url = base_url.rstrip("/")
        self.token = token

    def request(self, method: str, path: str, body: dict = None) -> bytes:
        url = self.base_url + path
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(url, data=data, method=method)
        req.add_header("Content-Type", "application/json")
        if self.token:
            req.add_header("Authorization", f"Bearer {self.token}")
        try:
            with urllib.request.urlopen(req, timeout=HTTP_TIMEOUT) as resp:
                return resp.read()
        except urllib.error.HTTPError as e:
            detail = e.read().decode("utf-8", errors="replace")
            raise CliError(f"{method} {path}: HTTP {e.code}: {detail}") from None
        except (urllib.error.URLError, OSError) as e:
            raise CliError(f"{method} {path}: {e}") from None

    def get(self, path: str) -> bytes:
        return self.request("GET", path)

    def post(self, path: str, body: dict = None) -> bytes:
        return self.request("POST", path, body)


def _load_config(args) -> DaemonConfig:
    path = _config_path(args)
    if not os.path.isfile(path):
        raise CliError(f"no config at {path}; run `sentryctl init` or pass --config")
    return DaemonConfig.from_toml(path)


def _config_path(args) -> str:
    return args.config or os.environ.get("SENTRYFS_CONFIG") or "sentryfs.toml"


def _client(args) -> Client:
    if args.api:
        return Client(args.api, token=args.token or "")
    cfg = _load_config(args)
    host, port = _parse_bind(cfg.api_bind)
    if host in ("", "0.0.0.0", "::"):
        host = "127.0.0.1"
    if port == 0:
        raise CliError("config binds port 0; pass --api with the daemon's printed URL")
    return Client(f"http://{host}:{port}", token=args.token or cfg.api_token)


def _emit(args, raw: bytes, render) -> None:
    """--json: raw API bytes. Otherwise a human rendering of the parsed body."""
    if args.json:
        sys.stdout.buffer.write(raw)
        if not raw.endswith(b"\n"):
            sys.stdout.buffer.write(b"\n")
        sys.stdout.buffer.flush()
    else:
        render(json.loads(raw))


def _emit_local(args, obj: dict, render) -> None:
    if args.json:
        print(json.dumps(obj, sort_keys=True))
    else:
        render(obj)


# --- offline helpers ----------------------------------------------------------


def _mount_offline(cfg: DaemonConfig) -> tuple[SentryFS, Planter, Freshener]:
    fs = SentryFS(cfg.backing_root, cfg.state_dir,
                  GuardConfig(kill_session_on_alert=cfg.kill_session_on_alert))
    fs.mount()
    intel = IntelClient(os.path.join(cfg.state_dir, "intel"))
    profile = intel.active_profile() or default_profile()
    policy = PlacementPolicy(protected_dirs=cfg.protected_dirs,
                             decoys_per_dir=cfg.decoys_per_dir)
    planter = Planter(fs, profile.decoy_recipes, policy)
    return fs, planter, Freshener(fs)


# --- verb implementations -------------------------------------------------------


def cmd_init(args) -> int:
    cfg_path = _config_path(args)
    if os.path.exists(cfg_path) and not args.force:
        raise CliError(f"{cfg_path} already exists (use --force to overwrite)")
    backing = os.path.abspath(args.backing)
    state = os.path.abspath(args.state)
    os.makedirs(backing, exist_ok=True)
    os.makedirs(state, exist_ok=True)
    with open(cfg_path, "w") as f:
        f.write(default_config_toml(backing, state, bind=args.bind))
    cfg = DaemonConfig.from_toml(cfg_path)
    fs, planter, freshener = _mount_offline(cfg)
    try:
        planted = planter.run(seed=int(time.time()) & 0xFFFFFFFF)
        freshener.run_once()
        decoys = len(fs.decoys())
    finally:
        fs.unmount()
    out = {"config": cfg_path, "backing_root": backing, "state_dir": state,
           "planted": len(planted), "decoys": decoys}
    _emit_local(args, out, lambda o: print(
        f"initialized {o['backing_root']}: {o['decoys']} decoys "
        f"(config written to {o['config']})"))
    return 0


def cmd_status(args) -> int:
    raw = _client(args).get("/v1/status")

    def render(o):
        print(f"mounted at {o['root']}")
        print(f"  decoys   {o['decoys']}")
        print(f"  pending  {o['pending']}")
        print(f"  alerts   {o['alerts']}")
        print(f"  sessions {o['sessions']}")
        print(f"  profile  {o['profile']}")

    _emit(args, raw, render)
    return 0


def cmd_pending(args) -> int:
    client = _client(args)
    if args.id:
        raw = client.get(f"/v1/pending/{args.id}")

        def render_one(o):
            if o.get("status") != "Pending":
                print(f"{o['id']}  {o['status']}")
                return
            print(f"id       {o['id']}")
            print(f"path     {o['path']}")
            print(f"actor    {o['actor']}")
            print(f"kind     {o['kind']}")
            print(f"score    {o['score']:.3f} ({o['verdict']})")
            for name, val in sorted(o["features"].items()):
                bar = "#" * min(int(round(val * 20)), 20)
                print(f"  {name:<20} {val:6.3f} {bar}")
            shadow = o["preview"]["shadow"]
            if shadow["size"]:
                flag = " (truncated)" if shadow["truncated"] else ""
                print(f"shadow preview{flag}:")
                print(shadow["text"])

        _emit(args, raw, render_one)
        return 0
    qs = f"?min_score={args.min_score}" if args.min_score is not None else ""
    raw = client.get(f"/v1/pending{qs}")

    def render(o):
        if not o["pending"]:
            print("no pending changes")
            return
        for ch in o["pending"]:
            print(f"{ch['id']}  {ch['score']:.3f}  {ch['verdict']:<10}  "
                  f"{ch['kind']:<13} {ch['path']}")
        if o.get("truncated"):
            print("(list truncated)")

    _emit(args, raw, render)
    return 0


def _cmd_resolve(args, action: str) -> int:
    raw = _client(args).post(f"/v1/pending/{args.id}/{action}")
    _emit(args, raw, lambda o: print(f"{o['status'].lower()} {o['id']} ({o['path']})"))
    return 0


def cmd_decoys(args) -> int:
    if args.action == "list":
        raw = _client(args).get("/v1/decoys")

        def render(o):
            for d in o["decoys"]:
                print(f"{d['path']}  recipe={d.get('recipe_id', '?')}")
            print(f"{len(o['decoys'])} decoys" + (" (truncated)" if o.get("truncated") else ""))

        _emit(args, raw, render)
        return 0
    # regen: offline maintenance; refuses to race a live daemon
    cfg = _load_config(args)
    lock = _PidLock(cfg.state_dir)
    try:
        lock.acquire()
    except AlreadyRunning as e:
        raise CliError(f"daemon is running, stop it first ({e})") from None
    try:
        fs, planter, freshener = _mount_offline(cfg)
        try:
            old = set(fs.decoys())
            planter.retire(tuple(planter.recipes))
            planted = planter.run(seed=int(time.time()) & 0xFFFFFFFF)
            freshener.run_once()
            out = {"retired": len(old), "planted": len(planted)}
        finally:
            fs.unmount()
    finally:
        lock.release()
    _emit_local(args, out,
                lambda o: print(f"regenerated decoys: {o['retired']} retired, "
                                f"{o['planted']} planted"))
    return 0


def cmd_profile(args) -> int:
    client = _client(args)
    if args.action == "refresh":
        raw = client.post("/v1/profiles/refresh")

        def render(o):
            if not o["applied"]:
                print(f"no new profiles (active: {o['profile']})")
                return
            for d in o["applied"]:
                parts = []
                if d["new_recipes"]:
                    parts.append("new recipes: " + ", ".join(d["new_recipes"]))
                if d["retired_recipes"]:
                    parts.append("retired: " + ", ".join(d["retired_recipes"]))
                if d["model_updated"]:
                    parts.append("model updated")
                if d["blocklist_delta"]:
                    parts.append("blocklist: " + ", ".join(d["blocklist_delta"]))
                print("applied: " + ("; ".join(parts) or "no-op"))
            print(f"active profile: {o['profile']}")

        _emit(args, raw, render)
        return 0
    raw = client.get("/v1/profile")

    def render(o):
        p = o["profile"]
        if p is None:
            print("no active profile")
            return
        print(f"profile  {p['profile_id']} v{p['version']}")
        print(f"recipes  {', '.join(r['recipe_id'] for r in p['decoy_recipes'])}")
        print(f"criteria {len(p['selection_criteria'])}")
        print(f"blocklist {', '.join(p['extension_blocklist'])}")

    _emit(args, raw, render)
    return 0


def _render_report(o: dict) -> None:
    r = o["report"]
    print(f"files enumerated            {r['files_enumerated']}")
    print(f"files touched before alert  {r['files_touched_before_alert']}")
    print(f"alert raised                {str(r['alert_raised']).lower()}")
    print(f"real files modified         {r['real_files_modified_after_run']}")
    for path, cls in r["victims"]:
        print(f"  victim [{cls}] {path}")


def cmd_simulate(args) -> int:
    from .ransim import (parse_tree_spec, run_attack, strategy_from_string, synth_tree)

    if args.offline or args.tree:
        # sandboxed run: synthesize a disposable tree, never touch the daemon
        try:
            spec = parse_tree_spec(args.tree or "10x10")
            strategy = strategy_from_string(args.strategy,
                                            leaked_recipes=default_profile().decoy_recipes)
        except (ParseError, ValueError) as e:
            raise CliError(str(e)) from None
        with tempfile.TemporaryDirectory() as td:
            backing = os.path.join(td, "tree")
            synth_tree(spec, seed=args.seed, root=backing)
            fs = SentryFS(backing, os.path.join(td, "state"),
                          GuardConfig(kill_session_on_alert=True))
            fs.mount()
            try:
                profile = default_profile()
                planter = Planter(fs, profile.decoy_recipes,
                                  PlacementPolicy(protected_dirs=("?*",)))
                planter.run(seed=args.seed * 7919 + 1)
                Freshener(fs).run_once()
                report = run_attack(fs, strategy, seed=args.seed)
            finally:
                fs.unmount()
        out = {"report": {
            "files_enumerated": report.files_enumerated,
            "files_touched_before_alert": report.files_touched_before_alert,
            "alert_raised": report.alert_raised,
            "real_files_modified_after_run": report.real_files_modified_after_run,
            "victims": [[p, c] for p, c in report.victims],
        }}
        _emit_local(args, out, _render_report)
        return 0
    raw = _client(args).post("/v1/simulate",
                             {"strategy": args.strategy, "seed": args.seed})
    _emit(args, raw, _render_report)
    return 0


def cmd_events(args) -> int:
    client = _client(args)
    since = args.since
    remaining = args.count
    while remaining is None or remaining > 0:
        wait = "&timeout=0" if args.no_wait else ""
        raw = client.get(f"/v1/events?since={since}{wait}")
        body = json.loads(raw)
        events = body["events"]
        for ev in events:
            if args.json:
                print(json.dumps(ev, sort_keys=True), flush=True)
            else:
                detail = json.dumps(ev["detail"]) if ev["detail"] else ""
                print(f"{ev['seq']:>6} {ev['kind']:<16} {ev['actor']:<12} "
                      f"{ev['path']} {detail}", flush=True)
            since = ev["seq"]
            if remaining is not None:
                remaining -= 1
                if remaining == 0:
                    return 0
        if not events and args.no_wait:
            return 0
    return 0


def cmd_serve(args) -> int:
    cfg = _load_config(args)
    daemon = Daemon(cfg)
    try:
        daemon.start()
    except SentryError as e:
        raise CliError(str(e)) from None
    print(f"listening at {daemon.url}", flush=True)

    def _term(_sig, _frame):
        daemon.stop()

    try:
        # without this, SIGTERM kills the process before stop() releases the pid lock
        signal.signal(signal.SIGTERM, _term)
        signal.signal(signal.SIGINT, _term)
    except ValueError:
        pass  # not the main thread; ^C/TERM handling is the caller's problem
    try:
        daemon.wait()
    except KeyboardInterrupt:
        daemon.stop()
    return 0


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sentryctl",
                                 description="control a sentryfs daemon")
    ap.add_argument("--config", help="TOML config path (default: "
                    "$SENTRYFS_CONFIG or ./sentryfs.toml)")
    ap.add_argument("--api", help="API base URL, overrides config bind")
    ap.add_argument("--token", help="bearer token, overrides config")
    ap.add_argument("--json", action="store_true",
                    help="print the raw API response body")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("init", help="write a config and plant initial decoys")
    p.add_argument("--backing", required=True, help="directory tree to protect")
    p.add_argument("--state", required=True, help="state directory (outside backing)")
    p.add_argument("--bind", default="127.0.0.1:8475", help="api bind host:port")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("status", help="daemon summary")
    p.set_defaults(fn=cmd_status)

    p = sub.add_parser("pending", help="list quarantined changes")
    p.add_argument("id", nargs="?", help="show one change in detail")
    p.add_argument("--min-score", type=float, default=None, dest="min_score")
    p.set_defaults(fn=cmd_pending)

    p = sub.add_parser("approve", help="commit a quarantined change")
    p.add_argument("id")
    p.set_defaults(fn=lambda a: _cmd_resolve(a, "approve"))

    p = sub.add_parser("discard", help="drop a quarantined change")
    p.add_argument("id")
    p.set_defaults(fn=lambda a: _cmd_resolve(a, "discard"))

    p = sub.add_parser("decoys", help="decoy management")
    p.add_argument("action", choices=["list", "regen"])
    p.set_defaults(fn=cmd_decoys)

    p = sub.add_parser("profile", help="threat profile management")
    p.add_argument("action", choices=["refresh", "show"])
    p.set_defaults(fn=cmd_profile)

    p = sub.add_parser("simulate", help="run a ransomware simulation")
    p.add_argument("--strategy", required=True,
                   help="all | topk:K | regex:P | ext:a,b | canary:WINDOW")
    p.add_argument("--tree", help="synthesize DIRSxFILES[:iban=F][:window=D] "
                   "and run sandboxed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--offline", action="store_true",
                   help="sandboxed run without a daemon")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("events", help="follow the event log")
    p.add_argument("action", choices=["tail"])
    p.add_argument("--since", type=int, default=0)
    p.add_argument("--count", type=int, default=None,
                   help="stop after N events instead of following forever")
    p.add_argument("--no-wait", action="store_true",
                   help="with --count, stop at the first empty page")
    p.set_defaults(fn=cmd_events)

    p = sub.add_parser("serve", help="run the daemon in the foreground")
    p.set_defaults(fn=cmd_serve)

    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except CliError as e:
        print(f"sentryctl: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
