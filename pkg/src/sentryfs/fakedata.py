"""Synthetic high-value canary payloads.

Ransomware that picks victims by content looks for strings like bank
account numbers, so decoys carry data that passes the same checks the
attacker would run: account numbers validate under ISO 7064 mod-97-10,
phone numbers match the national mobile pattern.
"""

from __future__ import annotations

import random

from .regexgen import parse_regex, sample_many, sample_regex

IBAN_LENGTH = 24
IBAN_COUNTRY = "SA"
# What a generated IBAN looks like on the wire: SA, two check digits, a
# two-digit bank code, then 18 alphanumeric account characters.
IBAN_PATTERN = "SA[0-9]{4}[0-9A-Z]{18}"

# Saudi mobile numbers: 05 followed by 8 digits.
PHONE_PATTERN = "05[0-9]{8}"
_PHONE_AST = parse_regex(PHONE_PATTERN)

_ALNUM = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _to_numeric(s: str) -> int:
    """IBAN character mapping: digits stay, A..Z become 10..35."""
    digits = []
    for ch in s:
        if ch.isdigit():
            digits.append(ch)
        else:
            digits.append(str(ord(ch) - ord("A") + 10))
    return int("".join(digits))


def _iban(rng: random.Random) -> str:
    # 2-digit bank code + 18 alphanumeric account chars = 22-char BBAN
    bank = f"{rng.randrange(100):02d}"
    account = "".join(rng.choice(_ALNUM) for _ in range(18))
    bban = bank + account
    check = 98 - _to_numeric(bban + IBAN_COUNTRY + "00") % 97
    return f"{IBAN_COUNTRY}{check:02d}{bban}"


def generate_iban(seed: int) -> str:
    """One mod-97-valid 24-character account number, deterministic per seed."""
    return _iban(random.Random(seed))


def generate_iban_lines(seed: int, count: int) -> list[str]:
    rng = random.Random(seed)
    return [_iban(rng) for _ in range(count)]


def generate_phone(seed: int) -> str:
    """One mobile number matching PHONE_PATTERN, deterministic per seed."""
    return sample_regex(_PHONE_AST, seed)


def generate_phone_lines(seed: int, count: int) -> list[str]:
    return sample_many(_PHONE_AST, seed, count)
