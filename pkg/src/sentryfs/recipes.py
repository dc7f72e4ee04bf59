"""Decoy recipes: everything needed to synthesize one honey file.

A recipe names its file (fixed pattern or mimicry of the directory's
naming convention), generates content that satisfies attacker selection
criteria, and carries the freshness rule the placement engine enforces.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Optional, Union

from . import fakedata, naming, textgen
from .errors import NameExhausted
from .fstypes import DirSnapshot
from .naming import FALLBACK_PATTERN, NamePattern, render_name
from .regexgen import parse_regex, sample_many

EMPTY_DIR_SIZE = 4096
NAME_ATTEMPTS = 100


# --- content sources --------------------------------------------------------


@dataclass(frozen=True)
class RegexContent:
    pattern: str
    count: int


@dataclass(frozen=True)
class NGramContent:
    corpus_id: str
    word_count: int


@dataclass(frozen=True)
class IbanContent:
    count: int


@dataclass(frozen=True)
class PhoneContent:
    count: int


@dataclass(frozen=True)
class MixedContent:
    parts: tuple["ContentSource", ...]

ContentSource = Union[RegexContent, NGramContent, IbanContent, PhoneContent, MixedContent]


# --- name sources -----------------------------------------------------------


@dataclass(frozen=True)
class FixedName:
    pattern: NamePattern


@dataclass(frozen=True)
class MimicSiblings:
    fallback: NamePattern = FALLBACK_PATTERN

NameSource = Union[FixedName, MimicSiblings]


# --- size rules -------------------------------------------------------------


@dataclass(frozen=True)
class SiblingBand:
    """Target size drawn log-uniformly between the 25th and 75th percentile
    of sibling sizes; EMPTY_DIR_SIZE when the directory is empty."""


@dataclass(frozen=True)
class FixedBytes:
    size: int

SizeRule = Union[SiblingBand, FixedBytes]


@dataclass(frozen=True)
class TopKRule:
    """Keep the decoy within the top k most recently modified files of its
    directory; mtimes get a random backdating jitter of at most jitter_max
    seconds so freshening leaves no exact-period signature."""
    k: int = 1
    jitter_max: int = 120  # seconds
    size_band: SizeRule = field(default_factory=SiblingBand)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.jitter_max < 0:
            raise ValueError("jitter_max must be >= 0")


@dataclass(frozen=True)
class DecoyRecipe:
    recipe_id: str
    name_source: NameSource
    content_source: ContentSource
    size_rule: SizeRule = field(default_factory=SiblingBand)
    freshness_rule: TopKRule = field(default_factory=TopKRule)


@dataclass(frozen=True)
class DecoyFile:
    path: str  # relative to the protected root
    content: bytes
    mtime: Optional[float]  # target mtime; None = stamp at plant time

    @property
    def size(self) -> int:
        return len(self.content)


# --- corpora ----------------------------------------------------------------

_EXTRA_CORPORA: dict[str, str] = {}


def register_corpus(corpus_id: str, text: str) -> None:
    """Make a corpus available to NGram content sources (profiles may ship
    their own corpora later; tests register fixtures here)."""
    _EXTRA_CORPORA[corpus_id] = text
    _model_for.cache_clear()


def load_corpus(corpus_id: str) -> str:
    if corpus_id in _EXTRA_CORPORA:
        return _EXTRA_CORPORA[corpus_id]
    if corpus_id == "builtin":
        return resources.files("sentryfs").joinpath("data/corpus.txt").read_text("utf-8")
    raise KeyError(f"unknown corpus {corpus_id!r}")


@lru_cache(maxsize=8)
def _model_for(corpus_id: str, n: int = 2) -> textgen.NGramModel:
    return textgen.train_ngram(load_corpus(corpus_id), n=n)


# --- rendering --------------------------------------------------------------


def _render_content(source: ContentSource, rng: random.Random) -> str:
    if isinstance(source, RegexContent):
        ast = parse_regex(source.pattern)
        return "\n".join(sample_many(ast, rng.getrandbits(64), source.count))
    if isinstance(source, NGramContent):
        model = _model_for(source.corpus_id)
        return textgen.generate_text(model, source.word_count, rng.getrandbits(64))
    if isinstance(source, IbanContent):
        return "\n".join(fakedata.generate_iban_lines(rng.getrandbits(64), source.count))
    if isinstance(source, PhoneContent):
        return "\n".join(fakedata.generate_phone_lines(rng.getrandbits(64), source.count))
    if isinstance(source, MixedContent):
        return "\n\n".join(_render_content(part, rng) for part in source.parts)
    raise TypeError(f"not a content source: {source!r}")


def _pick_name(recipe: DecoyRecipe, snapshot: DirSnapshot, rng: random.Random) -> str:
    if isinstance(recipe.name_source, FixedName):
        pattern = recipe.name_source.pattern
    else:
        pattern = naming.infer_name_pattern(
            snapshot.file_names(), fallback=recipe.name_source.fallback
        )
    taken = {e.name for e in snapshot.entries}
    for attempt in range(NAME_ATTEMPTS):
        name = render_name(pattern, rng)
        if attempt:
            stem, dot, ext = name.rpartition(".")
            name = f"{stem}_{attempt}{dot}{ext}" if dot else f"{name}_{attempt}"
        if name not in taken:
            return name
    raise NameExhausted(f"no free name for recipe {recipe.recipe_id} after {NAME_ATTEMPTS} tries")


def _target_size(rule: SizeRule, snapshot: DirSnapshot, rng: random.Random) -> Optional[int]:
    """Band point for SiblingBand (None means 'at least the core content');
    exact size for FixedBytes."""
    if isinstance(rule, FixedBytes):
        return rule.size
    sizes = sorted(s for s in snapshot.file_sizes() if s > 0)
    if not sizes:
        return EMPTY_DIR_SIZE
    p25 = sizes[int(0.25 * (len(sizes) - 1))]
    p75 = sizes[int(0.75 * (len(sizes) - 1))]
    lo, hi = max(p25, 1), max(p75, p25, 1)
    return int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))


def _filler(n_bytes: int, rng: random.Random) -> bytes:
    """Prose padding so size adjustments stay plausible to a content scan."""
    if n_bytes <= 0:
        return b""
    model = _model_for("builtin")
    words = max(2, n_bytes // 5)
    text = textgen.generate_text(model, words, rng.getrandbits(64))
    while len(text.encode("utf-8")) < n_bytes:
        text += "\n" + textgen.generate_text(model, words, rng.getrandbits(64))
    return text.encode("utf-8")[:n_bytes]


def render_decoy(recipe: DecoyRecipe, dir_context: DirSnapshot, seed: int) -> DecoyFile:
    """Synthesize one honey file for a directory.

    The name is collision-free against the snapshot (random re-roll, then
    numeric suffixes, at most NAME_ATTEMPTS tries). Content comes from the
    recipe's source; SiblingBand pads with prose up to a size drawn from
    the sibling size band, FixedBytes pads or truncates to the exact size.
    """
    rng = random.Random(seed)
    name = _pick_name(recipe, dir_context, rng)
    content = _render_content(recipe.content_source, rng).encode("utf-8")
    if content and not content.endswith(b"\n"):
        content += b"\n"
    target = _target_size(recipe.size_rule, dir_context, rng)
    if isinstance(recipe.size_rule, FixedBytes):
        if len(content) > target:
            content = content[:target]
        elif len(content) < target:
            content += _filler(target - len(content), rng)
    elif target is not None and len(content) < target:
        content += _filler(target - len(content), rng)
    path = f"{dir_context.path}/{name}" if dir_context.path else name
    return DecoyFile(path=path, content=content, mtime=None)


# --- serialization (profiles carry recipes as JSON) -------------------------


def _segment_to_dict(seg: naming.Segment) -> dict:
    if isinstance(seg, naming.Lit):
        return {"kind": "lit", "text": seg.text}
    if isinstance(seg, naming.Digits):
        return {"kind": "digits", "width": seg.width}
    return {"kind": "date", "fmt": seg.fmt}


def _segment_from_dict(d: dict) -> naming.Segment:
    if d["kind"] == "lit":
        return naming.Lit(d["text"])
    if d["kind"] == "digits":
        return naming.Digits(d["width"])
    return naming.DateLike(d["fmt"])


def pattern_to_dict(p: NamePattern) -> dict:
    return {"segments": [_segment_to_dict(s) for s in p.segments], "extension": p.extension}


def pattern_from_dict(d: dict) -> NamePattern:
    return NamePattern(tuple(_segment_from_dict(s) for s in d["segments"]), d["extension"])


def _content_to_dict(c: ContentSource) -> dict:
    if isinstance(c, RegexContent):
        return {"kind": "regex", "pattern": c.pattern, "count": c.count}
    if isinstance(c, NGramContent):
        return {"kind": "ngram", "corpus_id": c.corpus_id, "word_count": c.word_count}
    if isinstance(c, IbanContent):
        return {"kind": "iban", "count": c.count}
    if isinstance(c, PhoneContent):
        return {"kind": "phone", "count": c.count}
    return {"kind": "mixed", "parts": [_content_to_dict(p) for p in c.parts]}


def _content_from_dict(d: dict) -> ContentSource:
    kind = d["kind"]
    if kind == "regex":
        return RegexContent(d["pattern"], d["count"])
    if kind == "ngram":
        return NGramContent(d["corpus_id"], d["word_count"])
    if kind == "iban":
        return IbanContent(d["count"])
    if kind == "phone":
        return PhoneContent(d["count"])
    if kind == "mixed":
        return MixedContent(tuple(_content_from_dict(p) for p in d["parts"]))
    raise ValueError(f"unknown content source kind {kind!r}")


def _size_to_dict(s: SizeRule) -> dict:
    if isinstance(s, FixedBytes):
        return {"kind": "fixed_bytes", "size": s.size}
    return {"kind": "sibling_band"}


def _size_from_dict(d: dict) -> SizeRule:
    if d["kind"] == "fixed_bytes":
        return FixedBytes(d["size"])
    return SiblingBand()


def recipe_to_dict(r: DecoyRecipe) -> dict:
    if isinstance(r.name_source, FixedName):
        name_source = {"kind": "fixed", "pattern": pattern_to_dict(r.name_source.pattern)}
    else:
        name_source = {"kind": "mimic", "fallback": pattern_to_dict(r.name_source.fallback)}
    return {
        "recipe_id": r.recipe_id,
        "name_source": name_source,
        "content_source": _content_to_dict(r.content_source),
        "size_rule": _size_to_dict(r.size_rule),
        "freshness_rule": {
            "k": r.freshness_rule.k,
            "jitter_max": r.freshness_rule.jitter_max,
            "size_band": _size_to_dict(r.freshness_rule.size_band),
        },
    }


def recipe_from_dict(d: dict) -> DecoyRecipe:
    ns = d["name_source"]
    if ns["kind"] == "fixed":
        name_source: NameSource = FixedName(pattern_from_dict(ns["pattern"]))
    else:
        name_source = MimicSiblings(pattern_from_dict(ns["fallback"]))
    fr = d["freshness_rule"]
    return DecoyRecipe(
        recipe_id=d["recipe_id"],
        name_source=name_source,
        content_source=_content_from_dict(d["content_source"]),
        size_rule=_size_from_dict(d["size_rule"]),
        freshness_rule=TopKRule(fr["k"], fr["jitter_max"], _size_from_dict(fr["size_band"])),
    )


# --- defaults ---------------------------------------------------------------

DEFAULT_RECIPES: tuple[DecoyRecipe, ...] = (
    DecoyRecipe(
        recipe_id="saudi-iban",
        name_source=FixedName(NamePattern((naming.Lit("accounts_"), naming.Digits(4)), "txt")),
        content_source=MixedContent((
            NGramContent("builtin", 40),
            IbanContent(20),
        )),
    ),
    DecoyRecipe(
        recipe_id="saudi-phone",
        name_source=FixedName(NamePattern((naming.Lit("contacts_"), naming.Digits(4)), "txt")),
        content_source=MixedContent((
            NGramContent("builtin", 30),
            PhoneContent(30),
        )),
    ),
    DecoyRecipe(
        recipe_id="mimic-notes",
        name_source=MimicSiblings(),
        content_source=NGramContent("builtin", 150),
    ),
)
