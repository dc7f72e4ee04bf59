"""Decoy-file ransomware tripwires with copy-on-write write quarantine."""

__version__ = "0.1.0"

from .errors import SentryError

__all__ = ["SentryError", "__version__"]
