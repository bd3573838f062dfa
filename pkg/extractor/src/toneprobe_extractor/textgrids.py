"""Convert forced-aligner TextGrid interval files to alignment CSVs.

Reads the long ("ooTextFile") format aligners emit, takes the interval
tier named "phones", and writes the alignment CSV the toneprobe loaders
accept.  Labels pass through verbatim (UTF-8, aligner notation kept);
empty-text intervals are silence padding, not phones, and are skipped.
"""

from __future__ import annotations

from pathlib import Path

from toneprobe.corpus import LabelScheme, load_alignments


class AlignmentConvertError(ValueError):
    """Malformed TextGrid, missing phones tier, or intervals breaking
    the alignment invariants."""


def _unquote(raw: str, where: str) -> str:
    raw = raw.strip()
    if len(raw) < 2 or not raw.startswith('"') or not raw.endswith('"'):
        raise AlignmentConvertError(f"{where}: expected a quoted string, got {raw!r}")
    return raw[1:-1].replace('""', '"')


def _parse_float(raw: str, where: str) -> float:
    try:
        return float(raw.strip())
    except ValueError as exc:
        raise AlignmentConvertError(f"{where}: bad number {raw.strip()!r}") from exc


def parse_phone_intervals(path) -> list[tuple[str, float, float]]:
    """(label, xmin, xmax) triples from the "phones" tier, in file order.

    Enforces per-file invariants the alignment CSV relies on: intervals
    complete (xmin, xmax, text all present), xmin <= xmax, no overlap,
    and the tier's declared interval count matches what is found.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except (OSError, UnicodeDecodeError) as exc:
        raise AlignmentConvertError(f"{path}: unreadable: {exc}") from exc
    lines = text.splitlines()
    if not lines or "ooTextFile" not in lines[0]:
        raise AlignmentConvertError(f"{path}: not an ooTextFile TextGrid")
    if len(lines) < 2 or "TextGrid" not in lines[1]:
        raise AlignmentConvertError(f"{path}: missing TextGrid object header")

    in_phones = False
    found_phones = False
    declared: int | None = None
    intervals: list[dict] = []
    tier_name_pending = False

    for lineno, raw_line in enumerate(lines, 1):
        line = raw_line.strip()
        where = f"{path}:{lineno}"
        if line.startswith("item ["):
            if in_phones:
                break  # the phones tier is complete
            tier_name_pending = False
            continue
        if line.startswith("intervals"):
            if in_phones:
                if "size" in line:
                    declared = int(_parse_float(line.rpartition("=")[2], where))
                else:
                    intervals.append({"line": lineno})
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            key = key.strip()
            if key == "class":
                tier_name_pending = _unquote(value, where) == "IntervalTier"
                continue
            if key == "name":
                if tier_name_pending and _unquote(value, where) == "phones":
                    in_phones = True
                    found_phones = True
                tier_name_pending = False
                continue
            if not in_phones:
                continue
            if key == "xmin" and intervals:
                intervals[-1]["xmin"] = _parse_float(value, where)
            elif key == "xmax" and intervals:
                intervals[-1]["xmax"] = _parse_float(value, where)
            elif key == "text":
                if not intervals:
                    raise AlignmentConvertError(f"{where}: text outside an interval")
                intervals[-1]["text"] = _unquote(value, where)
            continue

    if not found_phones:
        raise AlignmentConvertError(f'{path}: no IntervalTier named "phones"')
    if declared is not None and declared != len(intervals):
        raise AlignmentConvertError(
            f"{path}: phones tier declares {declared} intervals, found {len(intervals)}"
        )

    triples = []
    for interval in intervals:
        where = f"{path}:{interval['line']}"
        missing = [k for k in ("xmin", "xmax", "text") if k not in interval]
        if missing:
            raise AlignmentConvertError(f"{where}: interval missing {', '.join(missing)}")
        xmin, xmax = interval["xmin"], interval["xmax"]
        if xmax < xmin:
            raise AlignmentConvertError(f"{where}: xmax {xmax} < xmin {xmin}")
        triples.append((interval["text"], xmin, xmax))

    previous_end = None
    for label, xmin, xmax in triples:
        if previous_end is not None and xmin < previous_end - 1e-9:
            raise AlignmentConvertError(
                f"{path}: overlapping intervals at {xmin:.6g} (previous ends {previous_end:.6g})"
            )
        previous_end = xmax
    return triples


def convert_alignments(in_dir, scheme: LabelScheme, out_csv) -> Path:
    """One CSV row per non-empty phone interval across every TextGrid in
    in_dir (utterance id = file stem, files in sorted order).  The result
    is re-read through the toneprobe alignment loader before returning, so
    a returned path is guaranteed ingestible."""
    in_dir = Path(in_dir)
    grids = sorted(
        {p for pattern in ("*.TextGrid", "*.textgrid") for p in in_dir.glob(pattern)}
    )
    if not grids:
        raise AlignmentConvertError(f"{in_dir}: no TextGrid files")
    lines = ["utt_id,phone,start_s,end_s\n"]
    for grid in grids:
        utt = grid.stem
        if "," in utt or '"' in utt:
            raise AlignmentConvertError(f"{grid}: utterance id {utt!r} unsafe for CSV")
        for label, xmin, xmax in parse_phone_intervals(grid):
            if not label.strip():
                continue
            if "," in label or '"' in label or "\n" in label:
                raise AlignmentConvertError(f"{grid}: phone label {label!r} unsafe for CSV")
            lines.append(f"{utt},{label},{xmin:.3f},{xmax:.3f}\n")
    out_csv = Path(out_csv)
    out_csv.write_text("".join(lines), encoding="utf-8")
    try:
        load_alignments(out_csv, scheme)
    except Exception as exc:
        raise AlignmentConvertError(f"converted CSV fails the loader: {exc}") from exc
    return out_csv
