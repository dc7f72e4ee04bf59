"""Reference intel service for tests and demos.

Serves GET /v1/profiles as one concatenated JSON array of every profile
file in a directory, and appends POSTed reports to a JSONL file. The
signing utility produces fixture profiles from a raw Ed25519 key.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .intel import (
    canonicalize,
    generate_key,
    load_private_key,
    save_private_key,
    save_public_key,
    sign_profile,
)


class IntelServer:
    def __init__(self, profile_dir: str, report_dir: str, host: str = "127.0.0.1", port: int = 0):
        self.profile_dir = profile_dir
        self.report_dir = report_dir
        os.makedirs(report_dir, exist_ok=True)
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # quiet by default
                pass

            def do_GET(self):
                if self.path != "/v1/profiles":
                    self.send_error(404)
                    return
                body = json.dumps(service.profiles()).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self):
                if self.path != "/v1/reports":
                    self.send_error(404)
                    return
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                try:
                    report = json.loads(raw)
                except json.JSONDecodeError:
                    self.send_error(400, "bad JSON")
                    return
                service.append_report(report)
                body = b'{"ok":true}'
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self.httpd = ThreadingHTTPServer((host, port), Handler)
        self.port = self.httpd.server_address[1]
        self.url = f"http://{host}:{self.port}"
        self._thread: threading.Thread | None = None
        self._lock = threading.Lock()

    def profiles(self) -> list:
        out = []
        if os.path.isdir(self.profile_dir):
            for name in sorted(os.listdir(self.profile_dir)):
                if not name.endswith(".json"):
                    continue
                with open(os.path.join(self.profile_dir, name), "r", encoding="utf-8") as f:
                    out.append(json.load(f))
        return out

    def append_report(self, report: dict) -> None:
        path = os.path.join(self.report_dir, "reports.jsonl")
        with self._lock:
            with open(path, "a", encoding="utf-8") as f:
                f.write(json.dumps(report, sort_keys=True) + "\n")

    def reports(self) -> list:
        path = os.path.join(self.report_dir, "reports.jsonl")
        if not os.path.exists(path):
            return []
        with open(path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def sign_main(argv=None) -> int:
    """intel-sign <key> <profile.json>: sign in place (canonical bytes).

    intel-sign --keygen <prefix> writes <prefix>.key / <prefix>.pub first.
    """
    ap = argparse.ArgumentParser(prog="intel-sign",
                                 description="Sign a threat profile with an Ed25519 key.")
    ap.add_argument("--keygen", metavar="PREFIX",
                    help="generate PREFIX.key and PREFIX.pub, then exit")
    ap.add_argument("key", nargs="?", help="path to raw-hex Ed25519 private key")
    ap.add_argument("profile", nargs="?", help="profile JSON to sign in place")
    args = ap.parse_args(argv)

    if args.keygen:
        key = generate_key()
        save_private_key(key, args.keygen + ".key")
        save_public_key(key.public_key(), args.keygen + ".pub")
        print(f"wrote {args.keygen}.key and {args.keygen}.pub")
        return 0
    if not args.key or not args.profile:
        ap.print_usage(sys.stderr)
        return 2
    try:
        key = load_private_key(args.key)
        with open(args.profile, "r", encoding="utf-8") as f:
            profile = json.load(f)
        signed = sign_profile(profile, key)
        # file bytes == canonical bytes, so fixpoint checks are byte-for-byte
        with open(args.profile, "wb") as f:
            f.write(canonicalize(signed))
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print(f"intel-sign: {e}", file=sys.stderr)
        return 1
    print(f"signed {args.profile}")
    return 0


def serve_main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="intel-serve",
                                 description="Reference intel service.")
    ap.add_argument("--profiles", required=True, help="directory of signed profile JSON files")
    ap.add_argument("--reports", required=True, help="directory for received reports")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8343)
    args = ap.parse_args(argv)
    server = IntelServer(args.profiles, args.reports, host=args.host, port=args.port)
    print(f"serving profiles from {args.profiles} at {server.url}")
    try:
        server.httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.httpd.server_close()
    return 0
