"""Name-pattern inference and rendering.

Devices and apps name files mechanically (IMG_0041.JPG, Screenshot
2021-03-01 at 10.22.11.png); a decoy whose name follows the same
convention survives attacker filters that key on those conventions.
"""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence, Union

# --- pattern segments -------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    text: str


@dataclass(frozen=True)
class Digits:
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("digit width must be >= 1")


@dataclass(frozen=True)
class DateLike:
    fmt: str  # "ymd" = 2021-03-01, "hms" = 10.22.11

    def __post_init__(self):
        if self.fmt not in _DATE_FORMATS:
            raise ValueError(f"unknown date format {self.fmt!r}")

Segment = Union[Lit, Digits, DateLike]


@dataclass(frozen=True)
class NamePattern:
    segments: tuple[Segment, ...]
    extension: str  # "" = no extension

    def __post_init__(self):
        if not self.segments:
            raise ValueError("pattern needs at least one segment")


FALLBACK_PATTERN = NamePattern((Lit("notes"),), "txt")

_DATE_FORMATS = {
    # fmt -> (separator, field widths)
    "ymd": ("-", (4, 2, 2)),
    "hms": (".", (2, 2, 2)),
}


# --- tokenizer --------------------------------------------------------------

_TOKEN_RE = re.compile(r"[0-9]+|[A-Za-z]+|[^0-9A-Za-z]+")


def _tokenize(stem: str) -> list[tuple[str, str]]:
    """Maximal runs of digits ('d'), letters ('a') and separators ('s')."""
    out = []
    for run in _TOKEN_RE.findall(stem):
        if run[0].isdigit():
            out.append(("d", run))
        elif run[0].isalpha():
            out.append(("a", run))
        else:
            out.append(("s", run))
    return out


def _split_ext(name: str) -> tuple[str, str]:
    if "." in name[1:]:
        stem, _, ext = name.rpartition(".")
        return stem, ext
    return name, ""


def _shape_key(tokens: list[tuple[str, str]], ext: str) -> tuple:
    # non-digit tokens must match exactly; digit tokens by kind only
    return tuple((k, t) if k != "d" else ("d",) for k, t in tokens) + (ext.lower(),)


def _coalesce_dates(segments: list[Segment], varying: list[bool]) -> list[Segment]:
    """Replace [d4 - d2 - d2] / [d2 . d2 . d2] windows with DateLike when
    any field in the window varied across siblings."""
    def field_ok(seg: Segment, width: int) -> bool:
        if isinstance(seg, Digits):
            return seg.width == width
        return isinstance(seg, Lit) and seg.text.isdigit() and len(seg.text) == width

    out: list[Segment] = []
    i = 0
    while i < len(segments):
        matched = False
        if i + 5 <= len(segments):
            window = segments[i:i + 5]
            for fmt, (sep, widths) in _DATE_FORMATS.items():
                seps_ok = all(
                    isinstance(window[j], Lit) and window[j].text == sep for j in (1, 3)
                )
                fields_ok = all(field_ok(window[2 * j], w) for j, w in enumerate(widths))
                if seps_ok and fields_ok and any(varying[i:i + 5]):
                    out.append(DateLike(fmt))
                    i += 5
                    matched = True
                    break
        if not matched:
            out.append(segments[i])
            i += 1
    return out


def infer_name_pattern(
    sibling_names: Sequence[str],
    fallback: Optional[NamePattern] = None,
) -> NamePattern:
    """Recover the directory's naming convention from sibling names.

    If at least two siblings share a token shape, the shared shape is
    returned with Digits segments where the numerals vary (date-shaped
    windows become DateLike). Otherwise the fallback pattern (profile
    default) is returned.
    """
    fallback = fallback or FALLBACK_PATTERN
    groups: dict[tuple, list[list[tuple[str, str]]]] = {}
    exts: dict[tuple, str] = {}
    for name in sibling_names:
        stem, ext = _split_ext(name)
        tokens = _tokenize(stem)
        if not tokens:
            continue
        key = _shape_key(tokens, ext)
        groups.setdefault(key, []).append(tokens)
        exts[key] = ext
    best_key = None
    for key, members in groups.items():
        if len(members) >= 2 and (best_key is None or len(members) > len(groups[best_key])):
            best_key = key
    if best_key is None:
        return fallback

    members = groups[best_key]
    segments: list[Segment] = []
    varying: list[bool] = []
    for idx, (kind, text) in enumerate(members[0]):
        if kind != "d":
            segments.append(Lit(text))
            varying.append(False)
            continue
        values = [m[idx][1] for m in members]
        if all(v == values[0] for v in values):
            segments.append(Lit(values[0]))
            varying.append(False)
        else:
            width = Counter(len(v) for v in values).most_common(1)[0][0]
            segments.append(Digits(width))
            varying.append(True)
    segments = _coalesce_dates(segments, varying)
    return NamePattern(tuple(_merge_lits(segments)), exts[best_key])


def _merge_lits(segments: list[Segment]) -> list[Segment]:
    out: list[Segment] = []
    for seg in segments:
        if isinstance(seg, Lit) and out and isinstance(out[-1], Lit):
            out[-1] = Lit(out[-1].text + seg.text)
        else:
            out.append(seg)
    return out


# --- rendering --------------------------------------------------------------


def render_name(pattern: NamePattern, rng: random.Random) -> str:
    parts = []
    for seg in pattern.segments:
        if isinstance(seg, Lit):
            parts.append(seg.text)
        elif isinstance(seg, Digits):
            parts.append("".join(rng.choice("0123456789") for _ in range(seg.width)))
        elif isinstance(seg, DateLike):
            sep = _DATE_FORMATS[seg.fmt][0]
            if seg.fmt == "ymd":
                parts.append(sep.join((
                    f"{rng.randint(2018, 2025):04d}",
                    f"{rng.randint(1, 12):02d}",
                    f"{rng.randint(1, 28):02d}",
                )))
            else:
                parts.append(sep.join((
                    f"{rng.randint(0, 23):02d}",
                    f"{rng.randint(0, 59):02d}",
                    f"{rng.randint(0, 59):02d}",
                )))
    stem = "".join(parts)
    return f"{stem}.{pattern.extension}" if pattern.extension else stem


def pattern_to_regex(pattern: NamePattern) -> str:
    """Regex matching every name the pattern can render. Used to probe
    whether an existing name looks like it came from a known recipe."""
    parts = []
    for seg in pattern.segments:
        if isinstance(seg, Lit):
            parts.append(re.escape(seg.text))
        elif isinstance(seg, Digits):
            parts.append(f"[0-9]{{{seg.width}}}")
        elif isinstance(seg, DateLike):
            sep, widths = _DATE_FORMATS[seg.fmt]
            parts.append(re.escape(sep).join(f"[0-9]{{{w}}}" for w in widths))
    body = "".join(parts)
    if pattern.extension:
        body += re.escape(f".{pattern.extension}")
    return f"^{body}$"
