"""TextGrid-to-alignment-CSV conversion, including the UTF-8 round trip
and the invariants shared with the toneprobe loaders."""

import pytest

from toneprobe.corpus import YORUBA, build_segments, get_scheme, load_alignments
from toneprobe.corpus import UtteranceFeatures
import numpy as np

from toneprobe_extractor import AlignmentConvertError, convert_alignments, parse_phone_intervals


def textgrid(intervals, tier_name="phones", declared=None, extra_tier=True):
    """Long-format TextGrid with an optional words tier before phones."""
    xmax = max((e for _, _, e in intervals), default=1.0)
    n = declared if declared is not None else len(intervals)
    head = (
        'File type = "ooTextFile"\n'
        'Object class = "TextGrid"\n'
        "\n"
        "xmin = 0\n"
        f"xmax = {xmax}\n"
        "tiers? <exists>\n"
        f"size = {2 if extra_tier else 1}\n"
        "item []:\n"
    )
    body = ""
    item = 1
    if extra_tier:
        body += (
            f"    item [{item}]:\n"
            '        class = "IntervalTier"\n'
            '        name = "words"\n'
            "        xmin = 0\n"
            f"        xmax = {xmax}\n"
            "        intervals: size = 1\n"
            "        intervals [1]:\n"
            "            xmin = 0\n"
            f"            xmax = {xmax}\n"
            '            text = "word"\n'
        )
        item += 1
    body += (
        f"    item [{item}]:\n"
        '        class = "IntervalTier"\n'
        f'        name = "{tier_name}"\n'
        "        xmin = 0\n"
        f"        xmax = {xmax}\n"
        f"        intervals: size = {n}\n"
    )
    for i, (label, start, end) in enumerate(intervals, 1):
        body += (
            f"        intervals [{i}]:\n"
            f"            xmin = {start}\n"
            f"            xmax = {end}\n"
            f'            text = "{label}"\n'
        )
    return head + body


YORUBA_INTERVALS = [
    ("", 0.0, 0.10),
    ("ɛH", 0.10, 0.30),
    ("b", 0.30, 0.42),
    ("ɛL", 0.42, 0.60),
    ("ɔ", 0.60, 0.80),
    ("sil", 0.80, 1.00),
]


def test_parse_phone_intervals_in_order(tmp_path):
    grid = tmp_path / "u1.TextGrid"
    grid.write_text(textgrid(YORUBA_INTERVALS), encoding="utf-8")
    triples = parse_phone_intervals(grid)
    assert [t[0] for t in triples] == ["", "ɛH", "b", "ɛL", "ɔ", "sil"]
    assert triples[1] == ("ɛH", 0.10, 0.30)


def test_convert_round_trips_utf8_labels(tmp_path):
    (tmp_path / "u1.TextGrid").write_text(textgrid(YORUBA_INTERVALS), encoding="utf-8")
    out = convert_alignments(tmp_path, YORUBA, tmp_path / "align.csv")
    text = out.read_text(encoding="utf-8")
    assert text.splitlines()[0] == "utt_id,phone,start_s,end_s"
    assert "u1,ɛH,0.100,0.300" in text
    assert "u1,sil,0.800,1.000" in text  # labels verbatim, silences included
    assert ",,," not in text  # empty-text padding dropped

    entries = load_alignments(out, YORUBA)
    labels = [e.phone_label for e in entries]
    assert labels == ["ɛH", "b", "ɛL", "ɔ", "sil"]


def test_converted_csv_feeds_segment_building(tmp_path):
    (tmp_path / "u1.TextGrid").write_text(textgrid(YORUBA_INTERVALS), encoding="utf-8")
    out = convert_alignments(tmp_path, YORUBA, tmp_path / "align.csv")
    features = {"u1": UtteranceFeatures("u1", np.zeros((50, 4), dtype=np.float32))}
    segments, dropped = build_segments(features, load_alignments(out, YORUBA), YORUBA)
    assert [(s.vowel, s.tone) for s in segments] == [
        ("ɛ", "H"),
        ("ɛ", "L"),
        ("ɔ", "Neutral"),
    ]
    assert dropped == 2  # "b" and "sil"


def test_multiple_files_sorted_and_deterministic(tmp_path):
    (tmp_path / "b.TextGrid").write_text(
        textgrid([("aH", 0.0, 0.2)]), encoding="utf-8"
    )
    (tmp_path / "a.textgrid").write_text(
        textgrid([("oL", 0.0, 0.3)]), encoding="utf-8"
    )
    out1 = convert_alignments(tmp_path, YORUBA, tmp_path / "one.csv")
    out2 = convert_alignments(tmp_path, YORUBA, tmp_path / "two.csv")
    assert out1.read_bytes() == out2.read_bytes()
    lines = out1.read_text(encoding="utf-8").splitlines()
    assert lines[1].startswith("a,") and lines[2].startswith("b,")


def test_overlapping_intervals_rejected(tmp_path):
    bad = [("aH", 0.0, 0.30), ("oL", 0.25, 0.50)]
    (tmp_path / "u1.TextGrid").write_text(textgrid(bad), encoding="utf-8")
    with pytest.raises(AlignmentConvertError, match="overlapping"):
        convert_alignments(tmp_path, YORUBA, tmp_path / "align.csv")


def test_backwards_interval_rejected(tmp_path):
    (tmp_path / "u1.TextGrid").write_text(
        textgrid([("aH", 0.5, 0.2)]), encoding="utf-8"
    )
    with pytest.raises(AlignmentConvertError, match="xmax"):
        parse_phone_intervals(tmp_path / "u1.TextGrid")


def test_missing_phones_tier(tmp_path):
    (tmp_path / "u1.TextGrid").write_text(
        textgrid([("aH", 0.0, 0.2)], tier_name="tones"), encoding="utf-8"
    )
    with pytest.raises(AlignmentConvertError, match="phones"):
        parse_phone_intervals(tmp_path / "u1.TextGrid")


def test_declared_size_mismatch(tmp_path):
    (tmp_path / "u1.TextGrid").write_text(
        textgrid([("aH", 0.0, 0.2)], declared=3), encoding="utf-8"
    )
    with pytest.raises(AlignmentConvertError, match="declares 3"):
        parse_phone_intervals(tmp_path / "u1.TextGrid")


def test_unparseable_number(tmp_path):
    grid = textgrid([("aH", 0.0, 0.2)]).replace("xmin = 0.0", "xmin = zero")
    (tmp_path / "u1.TextGrid").write_text(grid, encoding="utf-8")
    with pytest.raises(AlignmentConvertError, match="bad number"):
        parse_phone_intervals(tmp_path / "u1.TextGrid")


def test_not_a_textgrid(tmp_path):
    (tmp_path / "u1.TextGrid").write_text("just some text\n", encoding="utf-8")
    with pytest.raises(AlignmentConvertError, match="ooTextFile"):
        parse_phone_intervals(tmp_path / "u1.TextGrid")


def test_empty_directory(tmp_path):
    with pytest.raises(AlignmentConvertError, match="no TextGrid files"):
        convert_alignments(tmp_path, YORUBA, tmp_path / "align.csv")


def test_quote_escapes_unescaped(tmp_path):
    intervals = [('a""b', 0.0, 0.2)]  # praat doubles quotes inside strings
    (tmp_path / "u1.TextGrid").write_text(textgrid(intervals), encoding="utf-8")
    triples = parse_phone_intervals(tmp_path / "u1.TextGrid")
    assert triples[0][0] == 'a"b'


def test_comma_label_rejected_as_csv_unsafe(tmp_path):
    (tmp_path / "u1.TextGrid").write_text(
        textgrid([("a,b", 0.0, 0.2)]), encoding="utf-8"
    )
    with pytest.raises(AlignmentConvertError, match="unsafe"):
        convert_alignments(tmp_path, get_scheme("yoruba"), tmp_path / "align.csv")
