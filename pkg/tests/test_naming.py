"""Directory naming-convention inference and rendering."""

import random
import re

import pytest

from sentryfs.naming import (
    FALLBACK_PATTERN,
    DateLike,
    Digits,
    Lit,
    NamePattern,
    infer_name_pattern,
    pattern_to_regex,
    render_name,
)


def test_infer_numbered_photo_names():
    pat = infer_name_pattern(["IMG_0041.JPG", "IMG_0042.JPG", "IMG_0187.JPG"])
    assert pat.segments == (Lit("IMG_"), Digits(4))
    assert pat.extension == "JPG"


def test_infer_requires_two_shape_siblings():
    pat = infer_name_pattern(["IMG_0041.JPG", "report.pdf", "notes.txt"])
    assert pat == FALLBACK_PATTERN


def test_infer_empty_dir_uses_fallback():
    assert infer_name_pattern([]) == FALLBACK_PATTERN
    custom = NamePattern((Lit("misc"),), "dat")
    assert infer_name_pattern([], fallback=custom) == custom


def test_infer_constant_digits_stay_literal():
    # the "2024_" year is shared; only the tail varies
    pat = infer_name_pattern(["report_2024_01.docx", "report_2024_02.docx", "report_2024_11.docx"])
    assert pat.segments == (Lit("report_2024_"), Digits(2))
    assert pat.extension == "docx"


def test_infer_screenshot_dates():
    names = [
        "Screenshot 2024-01-15 at 09.30.12.png",
        "Screenshot 2024-03-02 at 14.05.59.png",
        "Screenshot 2025-11-30 at 23.59.01.png",
    ]
    pat = infer_name_pattern(names)
    kinds = [type(s).__name__ for s in pat.segments]
    assert "DateLike" in kinds
    date_fmts = [s.fmt for s in pat.segments if isinstance(s, DateLike)]
    assert date_fmts == ["ymd", "hms"]
    assert pat.extension == "png"


def test_render_matches_inferred_shape():
    pat = infer_name_pattern(["INV-001.pdf", "INV-002.pdf", "INV-307.pdf"])
    rng = random.Random(7)
    for _ in range(30):
        name = render_name(pat, rng)
        assert re.fullmatch(r"INV-[0-9]{3}\.pdf", name)


def test_render_date_fields_are_plausible():
    pat = NamePattern((Lit("shot "), DateLike("ymd"), Lit(" at "), DateLike("hms")), "png")
    rng = random.Random(0)
    for _ in range(50):
        name = render_name(pat, rng)
        m = re.fullmatch(r"shot (\d{4})-(\d{2})-(\d{2}) at (\d{2})\.(\d{2})\.(\d{2})\.png", name)
        assert m, name
        y, mo, d, h, mi, s = map(int, m.groups())
        assert 2000 <= y <= 2100
        assert 1 <= mo <= 12 and 1 <= d <= 28
        assert h <= 23 and mi <= 59 and s <= 59


def test_render_determinism_via_rng():
    pat = infer_name_pattern(["a1.txt", "a2.txt"])
    assert render_name(pat, random.Random(3)) == render_name(pat, random.Random(3))


def test_pattern_to_regex_round_trip():
    names = ["IMG_0041.JPG", "IMG_0042.JPG"]
    pat = infer_name_pattern(names)
    rx = re.compile(pattern_to_regex(pat))
    for n in names:
        assert rx.fullmatch(n)
    assert rx.fullmatch(render_name(pat, random.Random(1)))
    assert not rx.fullmatch("IMG_41.JPG")
    assert not rx.fullmatch("DSC_0041.JPG")


def test_no_extension_names():
    pat = infer_name_pattern(["run_01", "run_02"])  # no dot anywhere
    assert pat.segments == (Lit("run_"), Digits(2))
    name = render_name(pat, random.Random(2))
    assert "." not in name


def test_pattern_validation():
    with pytest.raises(ValueError):
        NamePattern((), "txt")
    with pytest.raises(ValueError):
        Digits(0)
