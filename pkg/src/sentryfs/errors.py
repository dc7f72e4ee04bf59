"""Exception types shared across the package."""


class SentryError(Exception):
    """Base class for all sentryfs errors."""


# --- mount / state ---------------------------------------------------------

class BackingMissing(SentryError):
    """Backing root does not exist or is not a directory."""


class StateCorrupt(SentryError):
    """Persistent state (ledger, registry) is unreadable beyond a trailing
    partial record. Refuse to start rather than silently reset."""


class AlreadyRunning(SentryError):
    """Another daemon holds the state_dir lock."""


class BindFailed(SentryError):
    """API socket could not be bound."""


# --- vfs operations --------------------------------------------------------

class NotFound(SentryError):
    pass


class NotADirectory(SentryError):
    pass


class PathEscape(SentryError):
    """Path resolves outside the protected tree."""


class HandleClosed(SentryError):
    pass


class Unsupported(SentryError):
    """Symlinks, hardlinks and other out-of-scope constructs."""


class SessionKilled(SentryError):
    """Actor tripped an alert while kill_session_on_alert is set."""


class ShadowStoreFull(SentryError):
    """state_dir ran out of space while writing a shadow."""


# --- quarantine ------------------------------------------------------------

class StaleBase(SentryError):
    """Base file changed since the clone was taken; commit refused."""


class AlreadyResolved(SentryError):
    """Change was already committed or discarded."""


class ShadowMissing(SentryError):
    """Shadow file referenced by the ledger is gone."""


# --- decoy engine ----------------------------------------------------------

class ParseError(SentryError):
    """Regex pattern outside the supported subset or malformed."""

    def __init__(self, position: int, reason: str):
        self.position = position
        self.reason = reason
        super().__init__(f"at {position}: {reason}")


class CorpusTooSmall(SentryError):
    pass


class NameExhausted(SentryError):
    """Could not find a collision-free decoy name within the retry budget."""


class ClockSkew(SentryError):
    """Sibling mtimes lie in the future relative to the freshen clock."""


# --- scoring ---------------------------------------------------------------

class UnknownFeature(SentryError):
    """Score model references a feature outside the fixed vocabulary."""


# --- intel -----------------------------------------------------------------

class NonCanonicalizable(SentryError):
    """Profile payload contains a float; the wire schema is integer-only."""


class BadSignature(SentryError):
    pass


class StaleVersion(SentryError):
    """Profile version does not advance the applied version."""


class NetworkUnreachable(SentryError):
    """Intel endpoint not reachable; callers continue with local state."""
