"""Feature and alignment loading.

Two on-disk carriers are defined here and used across the toolkit:

* SSLF feature file (one per utterance, binary, little-endian):
  magic ``SSLF``, u32 version (= 1), u32 T, u32 D, then T*D float32
  values row-major.  A manifest text file lists
  ``utterance_id<TAB>relative_path`` lines, one per utterance.
* Alignment CSV with header ``utt_id,phone,start_s,end_s`` (UTF-8,
  '.' decimal separator), holding forced-alignment phone intervals.

Labels are interpreted under one of two schemes: Mandarin monophthong
vowels with a trailing tone digit ("a1".."u5") or Yoruba oral vowels
with a trailing H/L (absent suffix means the neutral tone).
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

SSLF_MAGIC = b"SSLF"
SSLF_VERSION = 1
DEFAULT_FRAME_HOP = 0.02  # seconds per frame; 50 frames per second


class CorpusError(ValueError):
    """Invalid corpus data: malformed files, bad spans, unknown utterances."""


class FeatureFormatError(CorpusError):
    """SSLF file violates the format; message carries path and byte offset."""

    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: {message} (offset {offset})")
        self.path = str(path)
        self.offset = offset


@dataclass(frozen=True)
class UtteranceFeatures:
    """Frame-level feature matrix for one utterance, (T, D) float32."""

    utterance_id: str
    frames: np.ndarray
    frame_hop: float = DEFAULT_FRAME_HOP

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise CorpusError(
                f"{self.utterance_id}: frames must be a non-empty 2-d matrix, "
                f"got shape {frames.shape}"
            )
        if not np.isfinite(frames).all():
            t, d = np.argwhere(~np.isfinite(frames))[0]
            raise CorpusError(f"{self.utterance_id}: non-finite value at ({t}, {d})")
        if not self.frame_hop > 0:
            raise CorpusError(f"{self.utterance_id}: frame_hop must be > 0")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def duration(self) -> float:
        return self.num_frames * self.frame_hop


@dataclass(frozen=True)
class AlignmentEntry:
    """One aligned phone interval, in seconds."""

    utterance_id: str
    phone_label: str
    start: float
    end: float

    def __post_init__(self):
        if not (0.0 <= self.start < self.end):
            raise CorpusError(
                f"{self.utterance_id}/{self.phone_label}: bad interval "
                f"[{self.start}, {self.end}) (need 0 <= start < end)"
            )


@dataclass(frozen=True)
class LabelScheme:
    """Vowel/tone inventory plus the rule splitting a phone label in two.

    ``style`` selects the parse rule: "digit_suffix" (Mandarin: tone is the
    trailing digit) or "hl_suffix" (Yoruba: trailing H/L, no suffix means
    the neutral tone).
    """

    name: str
    vowels: tuple[str, ...]
    tones: tuple[str, ...]
    style: str

    def parse(self, phone_label: str) -> Optional[tuple[str, Optional[str]]]:
        """Split a phone label into (vowel, tone).

        Returns None for labels outside the vowel inventory (consonants,
        nasal vowels, diphthongs, silences).  A bare vowel parses to the
        vowel with the scheme's no-suffix tone: "Neutral" for Yoruba, and
        None (undefined) for Mandarin, whose inventory always carries a
        tone digit.  Total: never raises.
        """
        if self.style == "digit_suffix":
            if len(phone_label) >= 2 and phone_label[-1].isdigit():
                base, tone = phone_label[:-1], phone_label[-1]
                if base in self.vowels and tone in self.tones:
                    return base, tone
                return None
            if phone_label in self.vowels:
                return phone_label, None
            return None
        if len(phone_label) >= 2 and phone_label[-1] in ("H", "L"):
            base, tone = phone_label[:-1], phone_label[-1]
            if base in self.vowels:
                return base, tone
            return None
        if phone_label in self.vowels:
            return phone_label, "Neutral"
        return None

    def compose(self, vowel: str, tone: str) -> str:
        """Inverse of parse for valid (vowel, tone) pairs."""
        if vowel not in self.vowels or tone not in self.tones:
            raise CorpusError(f"({vowel}, {tone}) not in the {self.name} inventory")
        if self.style == "hl_suffix" and tone == "Neutral":
            return vowel
        return vowel + tone


MANDARIN = LabelScheme(
    name="mandarin",
    vowels=("a", "e", "i", "o", "u"),
    tones=("1", "2", "3", "4", "5"),
    style="digit_suffix",
)

YORUBA = LabelScheme(
    name="yoruba",
    vowels=("a", "e", "ɛ", "i", "o", "ɔ", "u"),
    tones=("H", "L", "Neutral"),
    style="hl_suffix",
)

_SCHEMES = {"mandarin": MANDARIN, "yoruba": YORUBA}


def get_scheme(name: str) -> LabelScheme:
    try:
        return _SCHEMES[name.lower()]
    except KeyError:
        raise CorpusError(f"unknown label scheme {name!r} (expected mandarin or yoruba)")


def parse_label(phone_label: str, scheme: LabelScheme) -> Optional[tuple[str, Optional[str]]]:
    """Module-level alias for LabelScheme.parse."""
    return scheme.parse(phone_label)


@dataclass(frozen=True)
class PhoneSegment:
    """One vowel phone occurrence as a frame span ([start, end), end exclusive)."""

    utterance_id: str
    frame_start: int
    frame_end: int
    vowel: str
    tone: str

    def __post_init__(self):
        if self.frame_end <= self.frame_start or self.frame_start < 0:
            raise CorpusError(
                f"{self.utterance_id}: empty or negative frame span "
                f"[{self.frame_start}, {self.frame_end})"
            )

    @property
    def length(self) -> int:
        return self.frame_end - self.frame_start


class TaskKind(Enum):
    """The three label tasks defined over vowel phone segments."""

    VOWEL_WITH_TONE = "vowel-with-tone"
    VOWEL_WITHOUT_TONE = "vowel-without-tone"
    TONE_ONLY = "tone-only"

    def label(self, segment: PhoneSegment, scheme: LabelScheme) -> str:
        if self is TaskKind.VOWEL_WITH_TONE:
            return scheme.compose(segment.vowel, segment.tone)
        if self is TaskKind.VOWEL_WITHOUT_TONE:
            return segment.vowel
        return segment.tone

    def vocabulary(self, scheme: LabelScheme) -> tuple[str, ...]:
        """Canonical class list: vowels grouped, tones in scheme order within."""
        if self is TaskKind.VOWEL_WITH_TONE:
            return tuple(scheme.compose(v, t) for v in scheme.vowels for t in scheme.tones)
        if self is TaskKind.VOWEL_WITHOUT_TONE:
            return scheme.vowels
        return scheme.tones


# ---------------------------------------------------------------------------
# SSLF feature files

_HEADER = struct.Struct("<4sIII")  # magic, version, T, D


def load_features(
    path,
    utterance_id: Optional[str] = None,
    frame_hop: float = DEFAULT_FRAME_HOP,
) -> UtteranceFeatures:
    """Read one SSLF feature file.

    The declared T and D must match the payload exactly; a short or long
    payload is an error, never silently truncated.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FeatureFormatError(path, len(data), "truncated header")
    magic, version, n_frames, dim = _HEADER.unpack_from(data, 0)
    if magic != SSLF_MAGIC:
        raise FeatureFormatError(path, 0, f"bad magic {magic!r}")
    if version != SSLF_VERSION:
        raise FeatureFormatError(path, 4, f"unsupported version {version}")
    if n_frames < 1 or dim < 1:
        raise FeatureFormatError(path, 8, f"empty matrix ({n_frames}x{dim})")
    expected = n_frames * dim * 4
    payload = data[_HEADER.size:]
    if len(payload) < expected:
        raise FeatureFormatError(path, _HEADER.size + len(payload), "truncated payload")
    if len(payload) > expected:
        raise FeatureFormatError(path, _HEADER.size + expected, "unexpected trailing data")
    frames = np.frombuffer(payload, dtype="<f4").reshape(n_frames, dim).copy()
    bad = ~np.isfinite(frames)
    if bad.any():
        t, d = np.argwhere(bad)[0]
        offset = _HEADER.size + 4 * (int(t) * dim + int(d))
        raise FeatureFormatError(path, offset, f"non-finite value at ({t}, {d})")
    if utterance_id is None:
        utterance_id = path.stem
    return UtteranceFeatures(utterance_id=utterance_id, frames=frames, frame_hop=frame_hop)


def write_features(features: UtteranceFeatures, path) -> None:
    """Write one SSLF feature file; load_features round-trips bit-identically."""
    path = Path(path)
    n_frames, dim = features.frames.shape
    header = _HEADER.pack(SSLF_MAGIC, SSLF_VERSION, n_frames, dim)
    payload = np.ascontiguousarray(features.frames, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def write_manifest(entries: Sequence[tuple[str, str]], path) -> None:
    """Write `utterance_id<TAB>relative_path` lines."""
    lines = [f"{utt}\t{rel}\n" for utt, rel in entries]
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_manifest(path) -> list[tuple[str, str]]:
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusError(f"{path}:{lineno}: expected 'utterance_id<TAB>path'")
        entries.append((parts[0], parts[1]))
    seen = set()
    for utt, _ in entries:
        if utt in seen:
            raise CorpusError(f"{path}: duplicate utterance id {utt!r}")
        seen.add(utt)
    return entries


def load_corpus(manifest_path, frame_hop: float = DEFAULT_FRAME_HOP) -> dict[str, UtteranceFeatures]:
    """Load every feature file listed in a manifest, keyed by utterance id."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    corpus = {}
    for utt, rel in load_manifest(manifest_path):
        corpus[utt] = load_features(root / rel, utterance_id=utt, frame_hop=frame_hop)
    return corpus


# ---------------------------------------------------------------------------
# Alignments

_ALIGNMENT_HEADER = ["utt_id", "phone", "start_s", "end_s"]


def load_alignments(path, scheme: LabelScheme) -> list[AlignmentEntry]:
    """Read an alignment CSV, grouped by utterance and sorted by start time.

    All phones are retained, vowels and non-vowels alike; downstream probe
    construction selects the vowels.  Overlapping intervals within one
    utterance are an error.
    """
    del scheme  # labels pass through verbatim; parsing happens downstream
    path = Path(path)
    by_utt: dict[str, list[AlignmentEntry]] = {}
    order: list[str] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != _ALIGNMENT_HEADER:
            raise CorpusError(f"{path}: expected header {','.join(_ALIGNMENT_HEADER)!r}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 4:
                raise CorpusError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            utt, phone, start_s, end_s = row
            try:
                start, end = float(start_s), float(end_s)
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: unparsable time {start_s!r}/{end_s!r}")
            try:
                entry = AlignmentEntry(utt, phone, start, end)
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}")
            if utt not in by_utt:
                by_utt[utt] = []
                order.append(utt)
            by_utt[utt].append(entry)
    result = []
    for utt in order:
        entries = sorted(by_utt[utt], key=lambda e: (e.start, e.end))
        for prev, cur in zip(entries, entries[1:]):
            if cur.start < prev.end - 1e-9:
                raise CorpusError(
                    f"{path}: overlapping intervals in {utt!r}: "
                    f"[{prev.start}, {prev.end}) and [{cur.start}, {cur.end})"
                )
        result.extend(entries)
    return result


def time_to_frames(start: float, end: float, frame_hop: float, num_frames: int) -> tuple[int, int]:
    """Convert a time interval to a frame span.

    frame_start = floor(start/hop), frame_end = min(T, ceil(end/hop)); a
    span that comes out empty after clamping expands to one frame.  The
    1e-9 slack keeps exact frame-boundary times from flipping a frame.
    """
    if not (0.0 <= start < end):
        raise CorpusError(f"bad interval [{start}, {end})")
    if frame_hop <= 0 or num_frames < 1:
        raise CorpusError("frame_hop must be > 0 and num_frames >= 1")
    frame_start = math.floor(start / frame_hop + 1e-9)
    if frame_start >= num_frames:
        raise CorpusError(
            f"start {start}s is beyond the utterance end ({num_frames} frames "
            f"of {frame_hop}s)"
        )
    frame_end = min(num_frames, math.ceil(end / frame_hop - 1e-9))
    if frame_end <= frame_start:
        frame_start = min(frame_start, num_frames - 1)
        frame_end = frame_start + 1
    return frame_start, frame_end


def build_segments(
    features: Mapping[str, UtteranceFeatures],
    alignments: Iterable[AlignmentEntry],
    scheme: LabelScheme,
) -> tuple[list[PhoneSegment], int]:
    """Turn alignment entries into vowel phone segments.

    Non-vowel phones (and Mandarin bare vowels, whose tone is undefined)
    are dropped, not errors; the second return value counts them.
    """
    segments = []
    dropped = 0
    for entry in alignments:
        utt = features.get(entry.utterance_id)
        if utt is None:
            raise CorpusError(f"alignment references unknown utterance {entry.utterance_id!r}")
        if entry.end > utt.duration + utt.frame_hop:
            raise CorpusError(
                f"{entry.utterance_id}/{entry.phone_label}: interval ends at "
                f"{entry.end}s, more than one frame past the utterance end "
                f"({utt.duration:.4f}s)"
            )
        parsed = scheme.parse(entry.phone_label)
        if parsed is None or parsed[1] is None:
            dropped += 1
            continue
        vowel, tone = parsed
        frame_start, frame_end = time_to_frames(
            entry.start, entry.end, utt.frame_hop, utt.num_frames
        )
        segments.append(
            PhoneSegment(
                utterance_id=entry.utterance_id,
                frame_start=frame_start,
                frame_end=frame_end,
                vowel=vowel,
                tone=tone,
            )
        )
    return segments, dropped
