"""Regex subset parser and random-string sampler.

Decoy content has to *match* attacker selection patterns (IBANs, phone
numbers, serial-numbered names), so this module turns a pattern into an
AST and draws strings from the pattern's language.

Supported subset: literals, escapes (\\d \\w \\s and their negations),
``.``, character classes with ranges and negation, alternation ``|``,
groups ``(...)``, quantifiers ``* + ? {m} {m,n} {m,}``. Anchors ``^ $``
are accepted and ignored (generation is whole-string). Backreferences
and lookaround are rejected: sampling them is not tractable in general
and no attacker criterion needs them.

Sampling is uniform over the pattern's language for unambiguous finite
patterns: alternation branches and repeat counts are weighted by the
size of the sub-language they contribute (computed when enumerable,
up to ENUMERABLE_CAP strings), so every string of the language is
equally likely. Unbounded repeats are truncated at ``max_unbounded``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Union

from .errors import ParseError

# Weighted sampling falls back to uniform-over-branches above this many
# strings; keeps size arithmetic cheap and bounded.
ENUMERABLE_CAP = 10**6

# Complement domain for negated classes and ".": printable ASCII. Keeps
# generated decoys text-like; still a subset of what the pattern accepts.
PRINTABLE_LO = 0x20
PRINTABLE_HI = 0x7E

DIGIT_RANGES = ((0x30, 0x39),)
WORD_RANGES = ((0x30, 0x39), (0x41, 0x5A), (0x5F, 0x5F), (0x61, 0x7A))
SPACE_RANGES = ((0x09, 0x0D), (0x20, 0x20))


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class CharClass:
    # Sorted, disjoint, inclusive codepoint ranges; never empty.
    ranges: tuple[tuple[int, int], ...]

    def size(self) -> int:
        return sum(hi - lo + 1 for lo, hi in self.ranges)


@dataclass(frozen=True)
class Concat:
    parts: tuple["Node", ...]


@dataclass(frozen=True)
class Alternation:
    branches: tuple["Node", ...]


@dataclass(frozen=True)
class Group:
    inner: "Node"


@dataclass(frozen=True)
class Repeat:
    inner: "Node"
    min: int
    max: Optional[int]  # None = unbounded

Node = Union[Literal, CharClass, Concat, Alternation, Group, Repeat]


def _normalize_ranges(ranges: list[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    """Sort and merge overlapping/adjacent ranges."""
    merged: list[tuple[int, int]] = []
    for lo, hi in sorted(ranges):
        if merged and lo <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


def _complement(ranges: tuple[tuple[int, int], ...]) -> tuple[tuple[int, int], ...]:
    """Complement within the printable-ASCII domain."""
    out: list[tuple[int, int]] = []
    cursor = PRINTABLE_LO
    for lo, hi in ranges:
        if lo > cursor:
            out.append((cursor, min(lo - 1, PRINTABLE_HI)))
        cursor = max(cursor, hi + 1)
    if cursor <= PRINTABLE_HI:
        out.append((cursor, PRINTABLE_HI))
    return tuple(out)


_CLASS_ESCAPES = {
    "d": DIGIT_RANGES,
    "w": WORD_RANGES,
    "s": SPACE_RANGES,
}
_CHAR_ESCAPES = {
    "n": "\n", "t": "\t", "r": "\r", "f": "\f", "v": "\v", "0": "\0",
}
_METACHARS = set("\\^$.|?*+()[]{}")


class _Parser:
    def __init__(self, pattern: str):
        self.pattern = pattern
        self.pos = 0
        # multi-range class escapes (\d \w \s) queued by _class_char
        self._pending_ranges: list[tuple[int, int]] = []

    def error(self, reason: str, pos: Optional[int] = None) -> ParseError:
        return ParseError(self.pos if pos is None else pos, reason)

    def peek(self) -> Optional[str]:
        if self.pos < len(self.pattern):
            return self.pattern[self.pos]
        return None

    def take(self) -> str:
        ch = self.pattern[self.pos]
        self.pos += 1
        return ch

    # alternation := concat ('|' concat)*
    def parse_alternation(self) -> Node:
        branches = [self.parse_concat()]
        while self.peek() == "|":
            self.take()
            branches.append(self.parse_concat())
        if len(branches) == 1:
            return branches[0]
        return Alternation(tuple(branches))

    def parse_concat(self) -> Node:
        parts: list[Node] = []
        while True:
            ch = self.peek()
            if ch is None or ch in "|)":
                break
            node = self.parse_atom()
            if node is None:  # ignored anchor
                continue
            node = self.parse_quantifier(node)
            parts.append(node)
        merged = _merge_literals(parts)
        if not merged:
            return Literal("")
        if len(merged) == 1:
            return merged[0]
        return Concat(tuple(merged))

    def parse_atom(self) -> Optional[Node]:
        start = self.pos
        ch = self.take()
        if ch in "^$":
            return None  # anchors accepted and ignored
        if ch == "(":
            if self.peek() == "?":
                raise self.error("unsupported group construct (?...)", start)
            inner = self.parse_alternation()
            if self.peek() != ")":
                raise self.error("unbalanced group", start)
            self.take()
            return Group(inner)
        if ch == ")":
            raise self.error("unbalanced group", start)
        if ch == "[":
            return self.parse_class(start)
        if ch == ".":
            return CharClass(((PRINTABLE_LO, PRINTABLE_HI),))
        if ch in "*+?":
            raise self.error("quantifier without target", start)
        if ch == "{":
            # Python re treats a stray '{' as a literal; so do we.
            return Literal("{")
        if ch == "\\":
            return self.parse_escape(start)
        return Literal(ch)

    def parse_escape(self, start: int) -> Node:
        if self.peek() is None:
            raise self.error("dangling escape", start)
        ch = self.take()
        if ch in _CLASS_ESCAPES:
            return CharClass(_CLASS_ESCAPES[ch])
        if ch.lower() in _CLASS_ESCAPES and ch.isupper():
            return CharClass(_complement(_normalize_ranges(list(_CLASS_ESCAPES[ch.lower()]))))
        if ch in _CHAR_ESCAPES:
            return Literal(_CHAR_ESCAPES[ch])
        if ch in _METACHARS or ch in "-/'\"` ":
            return Literal(ch)
        if ch.isdigit():
            raise self.error("backreferences are unsupported", start)
        raise self.error(f"unsupported escape \\{ch}", start)

    def parse_class(self, start: int) -> CharClass:
        negated = False
        if self.peek() == "^":
            self.take()
            negated = True
        ranges: list[tuple[int, int]] = []
        first = True
        while True:
            ch = self.peek()
            if ch is None:
                raise self.error("unclosed character class", start)
            if ch == "]" and not first:
                self.take()
                break
            first = False
            lo = self._class_char(start)
            if lo is None:  # \d \w \s inside a class
                continue
            if self.peek() == "-" and self.pos + 1 < len(self.pattern) and self.pattern[self.pos + 1] != "]":
                self.take()
                hi = self._class_char(start)
                if hi is None:
                    raise self.error("class escape cannot end a range", start)
                if hi < lo:
                    raise self.error(f"bad range {chr(lo)}-{chr(hi)}", start)
                ranges.append((lo, hi))
            else:
                ranges.append((lo, lo))
        # fold in multi-range escapes queued by _class_char
        ranges.extend(self._pending_ranges)
        self._pending_ranges.clear()
        if not ranges:
            raise self.error("empty character class", start)
        norm = _normalize_ranges(ranges)
        if negated:
            norm = _complement(norm)
            if not norm:
                raise self.error("negated class covers everything printable", start)
        return CharClass(norm)

    def _class_char(self, start: int) -> Optional[int]:
        """One class member; returns its codepoint, or None after queuing a
        multi-char escape's ranges."""
        ch = self.take()
        if ch != "\\":
            return ord(ch)
        if self.peek() is None:
            raise self.error("dangling escape in class", start)
        esc = self.take()
        if esc in _CLASS_ESCAPES:
            self._pending_ranges.extend(_CLASS_ESCAPES[esc])
            return None
        if esc in _CHAR_ESCAPES:
            return ord(_CHAR_ESCAPES[esc])
        if esc in _METACHARS or esc in "-/'\"` ]":
            return ord(esc)
        raise self.error(f"unsupported escape \\{esc} in class", start)

    def parse_quantifier(self, node: Node) -> Node:
        ch = self.peek()
        if ch is None:
            return node
        if ch in "*+?":
            if isinstance(node, Repeat):
                raise self.error("multiple repeat")
            self.take()
            lo, hi = {"*": (0, None), "+": (1, None), "?": (0, 1)}[ch]
            return Repeat(node, lo, hi)
        if ch == "{":
            brace = self.pos
            end = self.pattern.find("}", brace)
            body = self.pattern[brace + 1:end] if end != -1 else ""
            if end == -1 or not _looks_like_bound(body):
                return node  # literal brace handled by parse_atom later
            if isinstance(node, Repeat):
                raise self.error("multiple repeat", brace)
            self.pos = end + 1
            if "," not in body:
                m = int(body)
                lo, hi = m, m
            else:
                head, tail = body.split(",", 1)
                lo = int(head) if head else 0
                hi = int(tail) if tail else None
            if hi is not None and hi < lo:
                raise self.error(f"bad repeat bounds {{{body}}}", brace)
            return Repeat(node, lo, hi)
        return node


def _looks_like_bound(body: str) -> bool:
    # mirrors the stdlib engine: {m} {m,n} {m,} {,n} are bounds, the rest
    # is a literal brace
    if not body:
        return False
    if "," not in body:
        return body.isdigit()
    head, tail = body.split(",", 1)
    if not head and not tail:
        return False
    return (head == "" or head.isdigit()) and (tail == "" or tail.isdigit())


def _merge_literals(parts: list[Node]) -> list[Node]:
    """Fuse adjacent single literals: [Lit 'a', Lit 'b'] -> [Lit 'ab']."""
    out: list[Node] = []
    for node in parts:
        if isinstance(node, Literal) and out and isinstance(out[-1], Literal):
            out[-1] = Literal(out[-1].text + node.text)
        else:
            out.append(node)
    return [n for n in out if not (isinstance(n, Literal) and n.text == "" and len(out) > 1)]


def parse_regex(pattern: str) -> Node:
    """Parse a pattern of the supported subset into an AST.

    Raises ParseError(position, reason) for malformed or unsupported
    constructs.
    """
    parser = _Parser(pattern)
    node = parser.parse_alternation()
    if parser.pos != len(pattern):
        raise ParseError(parser.pos, "unbalanced group")
    return node


def language_size(node: Node, cap: int = ENUMERABLE_CAP) -> Optional[int]:
    """Number of strings the node can produce, or None when unbounded or
    above cap. Exact for unambiguous patterns; an overcount if branches
    overlap (acceptable: only used to weight sampling)."""
    if isinstance(node, Literal):
        return 1
    if isinstance(node, CharClass):
        n = node.size()
        return n if n <= cap else None
    if isinstance(node, Group):
        return language_size(node.inner, cap)
    if isinstance(node, Concat):
        total = 1
        for part in node.parts:
            n = language_size(part, cap)
            if n is None:
                return None
            total *= n
            if total > cap:
                return None
        return total
    if isinstance(node, Alternation):
        total = 0
        for branch in node.branches:
            n = language_size(branch, cap)
            if n is None:
                return None
            total += n
            if total > cap:
                return None
        return total
    if isinstance(node, Repeat):
        if node.max is None:
            return None
        inner = language_size(node.inner, cap)
        if inner is None:
            return None
        total = 0
        power = inner ** node.min
        for _ in range(node.min, node.max + 1):
            total += power
            power *= inner
            if total > cap:
                return None
        return total
    raise TypeError(f"not an AST node: {node!r}")


def _sample(node: Node, rng: random.Random, max_unbounded: int) -> str:
    if isinstance(node, Literal):
        return node.text
    if isinstance(node, CharClass):
        # uniform over members: pick a range weighted by width, then a point
        widths = [hi - lo + 1 for lo, hi in node.ranges]
        lo, hi = rng.choices(node.ranges, weights=widths)[0]
        return chr(rng.randint(lo, hi))
    if isinstance(node, Group):
        return _sample(node.inner, rng, max_unbounded)
    if isinstance(node, Concat):
        return "".join(_sample(p, rng, max_unbounded) for p in node.parts)
    if isinstance(node, Alternation):
        sizes = [language_size(b) for b in node.branches]
        if all(s is not None for s in sizes):
            branch = rng.choices(node.branches, weights=sizes)[0]  # type: ignore[arg-type]
        else:
            branch = node.branches[rng.randrange(len(node.branches))]
        return _sample(branch, rng, max_unbounded)
    if isinstance(node, Repeat):
        hi = node.max if node.max is not None else max(node.min, max_unbounded)
        inner_size = language_size(node.inner)
        counts = list(range(node.min, hi + 1))
        if inner_size is not None and inner_size > 0:
            weights = []
            total = 0
            for r in counts:
                w = inner_size ** r
                total += w
                if total > ENUMERABLE_CAP:
                    weights = None
                    break
                weights.append(w)
            r = rng.choices(counts, weights=weights)[0] if weights else counts[rng.randrange(len(counts))]
        else:
            r = counts[rng.randrange(len(counts))]
        return "".join(_sample(node.inner, rng, max_unbounded) for _ in range(r))
    raise TypeError(f"not an AST node: {node!r}")


def sample_regex(ast: Node, seed: int, max_unbounded: int = 32) -> str:
    """Draw one string from the pattern's language, deterministically for a
    fixed seed."""
    rng = random.Random(seed)
    return _sample(ast, rng, max_unbounded)


def sample_many(ast: Node, seed: int, count: int, max_unbounded: int = 32) -> list[str]:
    """Draw count strings from one seeded stream (cheaper than count calls
    to sample_regex and still deterministic)."""
    rng = random.Random(seed)
    return [_sample(ast, rng, max_unbounded) for _ in range(count)]
