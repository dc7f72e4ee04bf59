"""Threat-intel client: signed profile fetch/verify/apply and alert reporting.

A threat profile tells an instance what current ransomware families select
for (recency, content regexes, extensions, naming conventions) and ships
the decoy recipes, score model, and ransom-extension blocklist to counter
them. Profiles travel as canonical JSON with an embedded Ed25519 signature;
nothing unverified is ever applied. Alert reports flow the other way and
are strictly content-free: path class, score, and feature vector, never
user bytes or user paths.
"""

from __future__ import annotations

import json
import logging
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Optional, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import (
    BadSignature,
    NetworkUnreachable,
    NonCanonicalizable,
    ParseError,
    StaleVersion,
)
from .fakedata import IBAN_PATTERN
from .naming import NamePattern
from .recipes import (
    DecoyRecipe,
    pattern_from_dict,
    pattern_to_dict,
    recipe_from_dict,
    recipe_to_dict,
)
from .regexgen import parse_regex
from .scoring import MICRO, ScoreModel

log = logging.getLogger("sentryfs.intel")

SCHEMA_V = 1
SIGNATURE_FIELD = "signature"
HTTP_TIMEOUT = 10.0


# --- canonical JSON -------------------------------------------------------------


def canonicalize(obj) -> bytes:
    """Canonical JSON bytes: UTF-8, keys sorted byte-wise ascending, no
    insignificant whitespace, arrays kept in order. Floats are forbidden
    (integer micro-units keep the schema cross-language stable)."""
    _reject_floats(obj)
    return json.dumps(obj, ensure_ascii=False, sort_keys=True,
                      separators=(",", ":"), allow_nan=False).encode("utf-8")


def _reject_floats(obj, path="$"):
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return
    if isinstance(obj, float):
        raise NonCanonicalizable(f"float at {path}: {obj!r}")
    if isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _reject_floats(v, f"{path}[{i}]")
        return
    if isinstance(obj, dict):
        for k, v in obj.items():
            if not isinstance(k, str):
                raise NonCanonicalizable(f"non-string key at {path}: {k!r}")
            _reject_floats(v, f"{path}.{k}")
        return
    raise NonCanonicalizable(f"unsupported type at {path}: {type(obj).__name__}")


# --- selection criteria ----------------------------------------------------------


@dataclass(frozen=True)
class TopKRecentCriterion:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class ContentRegexCriterion:
    pattern: str

    def __post_init__(self):
        parse_regex(self.pattern)  # must stay samplable by the decoy engine


@dataclass(frozen=True)
class ExtensionSetCriterion:
    extensions: tuple

    def __post_init__(self):
        if not self.extensions:
            raise ValueError("extension set is empty")


@dataclass(frozen=True)
class NamingConventionCriterion:
    pattern: NamePattern


def criterion_to_dict(c) -> dict:
    if isinstance(c, TopKRecentCriterion):
        return {"type": "top_k_recent", "k": c.k}
    if isinstance(c, ContentRegexCriterion):
        return {"type": "content_regex", "pattern": c.pattern}
    if isinstance(c, ExtensionSetCriterion):
        return {"type": "extension_set", "extensions": list(c.extensions)}
    if isinstance(c, NamingConventionCriterion):
        return {"type": "naming_convention", "pattern": pattern_to_dict(c.pattern)}
    raise ParseError(0, f"unknown criterion {type(c).__name__}")


def criterion_from_dict(d: dict):
    t = d.get("type")
    if t == "top_k_recent":
        return TopKRecentCriterion(k=d["k"])
    if t == "content_regex":
        return ContentRegexCriterion(pattern=d["pattern"])
    if t == "extension_set":
        return ExtensionSetCriterion(extensions=tuple(d["extensions"]))
    if t == "naming_convention":
        return NamingConventionCriterion(pattern=pattern_from_dict(d["pattern"]))
    raise ParseError(0, f"unknown criterion type {t!r}")


# --- profiles --------------------------------------------------------------------


@dataclass(frozen=True)
class ThreatProfile:
    profile_id: str
    version: int
    issued_at: int
    decoy_recipes: tuple = ()
    selection_criteria: tuple = ()
    extension_blocklist: tuple = ()
    score_model: Optional[ScoreModel] = None
    signature: Optional[str] = None  # hex of 64-byte Ed25519 sig

    def to_dict(self, with_signature: bool = True) -> dict:
        d = {
            "v": SCHEMA_V,
            "profile_id": self.profile_id,
            "version": self.version,
            "issued_at": self.issued_at,
            "decoy_recipes": [recipe_to_dict(r) for r in self.decoy_recipes],
            "selection_criteria": [criterion_to_dict(c) for c in self.selection_criteria],
            "extension_blocklist": list(self.extension_blocklist),
            "score_model": self.score_model.to_dict() if self.score_model else None,
        }
        if with_signature and self.signature is not None:
            d[SIGNATURE_FIELD] = self.signature
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ThreatProfile":
        model = d.get("score_model")
        return cls(
            profile_id=d["profile_id"],
            version=int(d["version"]),
            issued_at=int(d["issued_at"]),
            decoy_recipes=tuple(recipe_from_dict(r) for r in d.get("decoy_recipes", ())),
            selection_criteria=tuple(criterion_from_dict(c)
                                     for c in d.get("selection_criteria", ())),
            extension_blocklist=tuple(d.get("extension_blocklist", ())),
            score_model=ScoreModel.from_dict(model) if model else None,
            signature=d.get(SIGNATURE_FIELD),
        )


def signing_payload(profile_dict: dict) -> bytes:
    """Canonical bytes of the profile minus its signature field."""
    body = {k: v for k, v in profile_dict.items() if k != SIGNATURE_FIELD}
    return canonicalize(body)


def sign_profile(profile_dict: dict, key: Ed25519PrivateKey) -> dict:
    sig = key.sign(signing_payload(profile_dict))
    signed = dict(profile_dict)
    signed[SIGNATURE_FIELD] = sig.hex()
    return signed


def verify_signature(profile_dict: dict, trust_key: Ed25519PublicKey) -> None:
    """BadSignature on any failure: absent/garbled signature, wrong length,
    uncanonicalizable body, or a signature that does not verify. The hex
    encoding is strict lowercase so no byte of the wire form is malleable."""
    sig_hex = profile_dict.get(SIGNATURE_FIELD)
    if not isinstance(sig_hex, str):
        raise BadSignature("missing signature")
    if len(sig_hex) != 128 or any(c not in "0123456789abcdef" for c in sig_hex):
        raise BadSignature("signature is not 128 lowercase hex chars")
    sig = bytes.fromhex(sig_hex)
    try:
        payload = signing_payload(profile_dict)
    except NonCanonicalizable as e:
        raise BadSignature(f"body not canonicalizable: {e}") from None
    try:
        trust_key.verify(sig, payload)
    except InvalidSignature:
        raise BadSignature("signature does not verify") from None


def verify_profile_bytes(raw: bytes, trust_key: Ed25519PublicKey) -> ThreatProfile:
    """Parse and verify wire bytes. Any single-byte tamper of a canonical
    signed profile lands here as BadSignature: either the JSON breaks, the
    strict-hex signature encoding breaks, or the payload no longer matches
    the signature."""
    try:
        obj = json.loads(raw)
    except ValueError:
        raise BadSignature("wire bytes are not valid JSON") from None
    if not isinstance(obj, dict):
        raise BadSignature("wire value is not an object")
    verify_signature(obj, trust_key)
    try:
        return ThreatProfile.from_dict(obj)
    except (KeyError, TypeError, ValueError, ParseError) as e:
        raise BadSignature(f"verified but unparseable: {e}") from None


# --- key handling ----------------------------------------------------------------


def generate_key() -> Ed25519PrivateKey:
    return Ed25519PrivateKey.generate()


def save_private_key(key: Ed25519PrivateKey, path: str) -> None:
    with open(path, "wb") as f:
        f.write(key.private_bytes_raw().hex().encode() + b"\n")
    os.chmod(path, 0o600)


def load_private_key(path: str) -> Ed25519PrivateKey:
    with open(path, "rb") as f:
        raw = bytes.fromhex(f.read().strip().decode())
    return Ed25519PrivateKey.from_private_bytes(raw)


def save_public_key(key: Ed25519PublicKey, path: str) -> None:
    with open(path, "wb") as f:
        f.write(key.public_bytes_raw().hex().encode() + b"\n")


def load_public_key(path: str) -> Ed25519PublicKey:
    with open(path, "rb") as f:
        raw = bytes.fromhex(f.read().strip().decode())
    return Ed25519PublicKey.from_public_bytes(raw)


# --- apply -----------------------------------------------------------------------


@dataclass(frozen=True)
class PlanDiff:
    new_recipes: tuple = ()
    retired_recipes: tuple = ()
    model_updated: bool = False
    blocklist_delta: tuple = ()

    @property
    def empty(self) -> bool:
        return not (self.new_recipes or self.retired_recipes
                    or self.model_updated or self.blocklist_delta)


@dataclass(frozen=True)
class AlertEvent:
    path_class: str  # FileClass name, never the path itself
    score_micros: int
    features_micros: dict
    ts: int


def build_alert_report(instance_id: str, profile_id: str, profile_version: int,
                       events: Sequence[AlertEvent]) -> dict:
    """Content-free by construction: the schema has no field that could
    carry file bytes or user paths."""
    return {
        "v": SCHEMA_V,
        "instance_id": instance_id,
        "profile_id": profile_id,
        "profile_version": profile_version,
        "events": [
            {
                "path_class": e.path_class,
                "score": e.score_micros,
                "features": dict(sorted(e.features_micros.items())),
                "ts": e.ts,
            }
            for e in events
        ],
    }


class IntelClient:
    """Pull-based profile sync with persisted version monotonicity and a
    disk outbox for reports that could not be delivered."""

    def __init__(self, state_dir: str, endpoint: Optional[str] = None,
                 trust_key: Optional[Ed25519PublicKey] = None,
                 instance_id: str = "sentryfs-dev"):
        self.state_dir = state_dir
        self.endpoint = endpoint.rstrip("/") if endpoint else None
        self.trust_key = trust_key
        self.instance_id = instance_id
        os.makedirs(state_dir, exist_ok=True)
        self._state_path = os.path.join(state_dir, "intel.json")
        self._outbox_path = os.path.join(state_dir, "outbox.jsonl")
        self._state = self._load_state()

    # -- persisted state

    def _load_state(self) -> dict:
        if os.path.exists(self._state_path):
            with open(self._state_path, "r", encoding="utf-8") as f:
                return json.load(f)
        return {"applied_versions": {}, "active_profile": None}

    def _save_state(self) -> None:
        tmp = self._state_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(self._state, f)
        os.replace(tmp, self._state_path)

    def applied_version(self, profile_id: str) -> int:
        return self._state["applied_versions"].get(profile_id, 0)

    def active_profile(self) -> Optional[ThreatProfile]:
        raw = self._state.get("active_profile")
        return ThreatProfile.from_dict(raw) if raw else None

    # -- fetch / verify

    def fetch_profiles(self) -> list:
        """Verified profiles from GET <endpoint>/v1/profiles. Unverifiable
        entries are dropped with a warning; they are never applied."""
        if not self.endpoint:
            return []
        url = f"{self.endpoint}/v1/profiles"
        try:
            with urllib.request.urlopen(url, timeout=HTTP_TIMEOUT) as resp:
                body = resp.read()
        except (urllib.error.URLError, OSError, TimeoutError) as e:
            raise NetworkUnreachable(f"GET {url}: {e}") from None
        try:
            entries = json.loads(body)
        except json.JSONDecodeError as e:
            raise NetworkUnreachable(f"GET {url}: bad JSON ({e})") from None
        if not isinstance(entries, list):
            raise NetworkUnreachable(f"GET {url}: expected array")
        verified = []
        for i, entry in enumerate(entries):
            try:
                if self.trust_key is None:
                    raise BadSignature("no trust key configured")
                verify_signature(entry, self.trust_key)
                verified.append(ThreatProfile.from_dict(entry))
            except (BadSignature, ParseError, KeyError, TypeError, ValueError) as e:
                log.warning("dropping unverifiable profile entry %d: %s", i, e)
        return verified

    def check_version(self, profile: ThreatProfile) -> None:
        if profile.version <= self.applied_version(profile.profile_id):
            raise StaleVersion(
                f"{profile.profile_id} v{profile.version} <= "
                f"applied v{self.applied_version(profile.profile_id)}")

    # -- apply

    def apply_profile(self, profile: ThreatProfile, planter=None, guard=None) -> PlanDiff:
        """Swap the active profile in: retire decoys of dropped recipes,
        plant new ones, swap the score model and blocklist. Re-applying an
        already-newer version raises StaleVersion; re-applying identical
        content under a new version yields an empty diff."""
        self.check_version(profile)
        old = self.active_profile()
        old_recipes = {r.recipe_id for r in old.decoy_recipes} if old else set()
        new_recipes = {r.recipe_id for r in profile.decoy_recipes}
        added = tuple(sorted(new_recipes - old_recipes))
        retired = tuple(sorted(old_recipes - new_recipes))

        old_block = set(old.extension_blocklist) if old else set()
        new_block = set(profile.extension_blocklist)
        delta = tuple(sorted(f"+{e}" for e in new_block - old_block)) + \
            tuple(sorted(f"-{e}" for e in old_block - new_block))

        old_model = old.score_model.to_dict() if old and old.score_model else None
        new_model = profile.score_model.to_dict() if profile.score_model else None
        model_updated = new_model is not None and new_model != old_model

        if planter is not None:
            if retired:
                planter.retire(retired)
            planter.recipes = {r.recipe_id: r for r in profile.decoy_recipes}
            planter.run(seed=profile.version * 1009 + 17)
        if guard is not None:
            if profile.score_model is not None:
                guard.tracker.model = profile.score_model
            guard.tracker.ext_blocklist = frozenset(e.lower() for e in profile.extension_blocklist)

        self._state["applied_versions"][profile.profile_id] = profile.version
        self._state["active_profile"] = profile.to_dict()
        self._save_state()
        return PlanDiff(new_recipes=added, retired_recipes=retired,
                        model_updated=model_updated, blocklist_delta=delta)

    def refresh(self, planter=None, guard=None) -> list:
        """One poll cycle: fetch, apply every new version, flush the report
        outbox. Returns the applied PlanDiffs."""
        diffs = []
        for profile in self.fetch_profiles():
            try:
                diffs.append(self.apply_profile(profile, planter=planter, guard=guard))
            except StaleVersion as e:
                log.info("skipping profile: %s", e)
        self.flush_outbox()
        return diffs

    # -- reports

    def submit_report(self, report: dict) -> bool:
        """POST the report; on any network failure queue it on disk for the
        next flush. Returns True when the server acked."""
        canonicalize(report)  # deterministic + integer-only, or refuse
        if self.endpoint and self._post_report(report):
            return True
        with open(self._outbox_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(report, sort_keys=True) + "\n")
        return False

    def _post_report(self, report: dict) -> bool:
        url = f"{self.endpoint}/v1/reports"
        req = urllib.request.Request(
            url, data=canonicalize(report),
            headers={"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=HTTP_TIMEOUT) as resp:
                return 200 <= resp.status < 300
        except (urllib.error.URLError, OSError, TimeoutError):
            return False

    def outbox(self) -> list:
        if not os.path.exists(self._outbox_path):
            return []
        with open(self._outbox_path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    def flush_outbox(self) -> int:
        """Retry queued reports in order; stop at the first failure so
        ordering is preserved. Returns the number delivered."""
        queued = self.outbox()
        if not queued or not self.endpoint:
            return 0
        sent = 0
        for report in queued:
            if not self._post_report(report):
                break
            sent += 1
        remaining = queued[sent:]
        if remaining:
            with open(self._outbox_path, "w", encoding="utf-8") as f:
                for report in remaining:
                    f.write(json.dumps(report, sort_keys=True) + "\n")
        elif os.path.exists(self._outbox_path):
            os.unlink(self._outbox_path)
        return sent


def default_profile(version: int = 1, issued_at: int = 0) -> ThreatProfile:
    """Built-in profile used before any intel server is configured."""
    from .recipes import DEFAULT_RECIPES
    from .scoring import DEFAULT_EXTENSION_BLOCKLIST, DEFAULT_MODEL

    return ThreatProfile(
        profile_id="builtin-default",
        version=version,
        issued_at=issued_at,
        decoy_recipes=tuple(DEFAULT_RECIPES),
        selection_criteria=(
            TopKRecentCriterion(k=3),
            ContentRegexCriterion(pattern=IBAN_PATTERN),
            ExtensionSetCriterion(extensions=("txt", "docx", "xlsx", "pdf", "jpg")),
        ),
        extension_blocklist=tuple(DEFAULT_EXTENSION_BLOCKLIST),
        score_model=DEFAULT_MODEL,
    )
