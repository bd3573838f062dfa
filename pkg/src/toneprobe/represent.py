"""Per-phone representations and probe dataset assembly.

Each vowel phone segment yields three views of the same span of frames:
the latent sequence (L x D), the averaged latent (one D-vector), and the
discrete symbol sequence (length L, codebook indices).  A ProbeDataset
pairs these with task labels and a stratified 80:20 train/test split.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from toneprobe.corpus import (
    LabelScheme,
    PhoneSegment,
    TaskKind,
    UtteranceFeatures,
    write_features,
)
from toneprobe.quantize import Codebook, assign_symbols

TEST_FRACTION = 0.2


class RepresentError(ValueError):
    """Inconsistent segment/feature/codebook inputs."""


@dataclass(frozen=True)
class PhoneRepresentation:
    """The three representations of one phone occurrence."""

    segment: PhoneSegment
    latent_seq: np.ndarray
    avg_latent: np.ndarray
    symbol_seq: np.ndarray

    def __post_init__(self):
        for name in ("latent_seq", "avg_latent", "symbol_seq"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.latent_seq.ndim != 2 or self.latent_seq.shape[0] < 1:
            raise RepresentError("latent_seq must have at least one row")

    @property
    def length(self) -> int:
        return self.latent_seq.shape[0]


@dataclass(frozen=True)
class ProbeDataset:
    """Phone representations + labels + split for one classification task."""

    items: tuple[PhoneRepresentation, ...]
    task: TaskKind
    scheme_name: str
    label_vocabulary: tuple[str, ...]
    labels: tuple[str, ...]
    split_assignment: tuple[str, ...]
    codebook_k: int

    def __post_init__(self):
        if not (len(self.items) == len(self.labels) == len(self.split_assignment)):
            raise RepresentError("items, labels, split_assignment must align")
        vocab = set(self.label_vocabulary)
        for label in self.labels:
            if label not in vocab:
                raise RepresentError(f"label {label!r} outside the vocabulary")

    def train_indices(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.split_assignment) == "train")

    def test_indices(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.split_assignment) == "test")

    def class_counts(self) -> dict[str, tuple[int, int]]:
        """Per class: (train count, test count)."""
        counts = {label: [0, 0] for label in self.label_vocabulary}
        for label, split in zip(self.labels, self.split_assignment):
            counts[label][0 if split == "train" else 1] += 1
        return {label: (c[0], c[1]) for label, c in counts.items()}


def average_latents(latent_seq) -> np.ndarray:
    """Column-wise arithmetic mean, accumulated in double precision."""
    latent_seq = np.asarray(latent_seq)
    if latent_seq.ndim != 2 or latent_seq.shape[0] < 1:
        raise RepresentError(f"need a non-empty L x D matrix, got shape {latent_seq.shape}")
    return latent_seq.astype(np.float64).mean(axis=0)


def dedup_runs(symbols: np.ndarray) -> np.ndarray:
    """Collapse adjacent repeats: 3 3 1 1 1 3 -> 3 1 3."""
    symbols = np.asarray(symbols)
    if symbols.shape[0] < 2:
        return symbols
    keep = np.empty(symbols.shape[0], dtype=bool)
    keep[0] = True
    keep[1:] = symbols[1:] != symbols[:-1]
    return symbols[keep]


def symbolize_segment(
    segment: PhoneSegment,
    codebook: Codebook,
    features: UtteranceFeatures,
    dedup: bool = False,
) -> np.ndarray:
    """Discrete symbols for the segment's frame rows.

    Repeated symbols stay by default; dedup=True collapses runs.
    """
    if segment.utterance_id != features.utterance_id:
        raise RepresentError(
            f"segment is from {segment.utterance_id!r}, features from "
            f"{features.utterance_id!r}"
        )
    if segment.frame_end > features.num_frames:
        raise RepresentError(
            f"{segment.utterance_id}: segment [{segment.frame_start}, "
            f"{segment.frame_end}) exceeds the {features.num_frames}-frame utterance"
        )
    symbols = assign_symbols(codebook, features.frames[segment.frame_start : segment.frame_end])
    return dedup_runs(symbols) if dedup else symbols


def build_dataset(
    segments: Sequence[PhoneSegment],
    features: Mapping[str, UtteranceFeatures],
    codebook: Codebook,
    task: TaskKind,
    scheme: LabelScheme,
    split_seed: int,
    dedup_symbols: bool = False,
) -> ProbeDataset:
    """Assemble representations and a stratified 80:20 split.

    The vocabulary is the canonical task class list restricted to classes
    present in the segments.  Any class with fewer than 2 occurrences
    cannot appear on both sides of the split and is an error.
    """
    if not segments:
        raise RepresentError("no segments to build a dataset from")
    items = []
    labels = []
    for segment in segments:
        utt = features.get(segment.utterance_id)
        if utt is None:
            raise RepresentError(f"no features for utterance {segment.utterance_id!r}")
        latent_seq = utt.frames[segment.frame_start : segment.frame_end]
        symbol_seq = symbolize_segment(segment, codebook, utt, dedup=dedup_symbols)
        items.append(
            PhoneRepresentation(
                segment=segment,
                latent_seq=latent_seq,
                avg_latent=average_latents(latent_seq),
                symbol_seq=symbol_seq,
            )
        )
        labels.append(task.label(segment, scheme))

    present = set(labels)
    vocabulary = tuple(c for c in task.vocabulary(scheme) if c in present)
    label_arr = np.asarray(labels)
    split = np.empty(len(items), dtype=object)
    rng = np.random.default_rng(split_seed)
    for cls in vocabulary:
        idx = np.flatnonzero(label_arr == cls)
        if idx.shape[0] < 2:
            raise RepresentError(
                f"class {cls!r} has {idx.shape[0]} item(s); need at least 2 to split"
            )
        n = idx.shape[0]
        n_test = min(n - 1, max(1, int(n * TEST_FRACTION + 0.5)))
        perm = rng.permutation(idx)
        split[perm[:n_test]] = "test"
        split[perm[n_test:]] = "train"

    return ProbeDataset(
        items=tuple(items),
        task=task,
        scheme_name=scheme.name,
        label_vocabulary=vocabulary,
        labels=tuple(labels),
        split_assignment=tuple(split.tolist()),
        codebook_k=codebook.k,
    )


def export_dataset(dataset: ProbeDataset, records_path, sidecar_path=None) -> None:
    """Write the dataset as text records plus an averaged-latent sidecar.

    Records: header then one line per item,
    ``utt_id,frame_start,frame_end,vowel,tone,split,symbol_seq`` with the
    symbol sequence space-separated.  The sidecar is an SSLF file whose
    row i is item i's averaged latent (float32, N x D).
    """
    records_path = Path(records_path)
    if sidecar_path is None:
        sidecar_path = records_path.with_suffix(".avg.sslf")
    lines = ["utt_id,frame_start,frame_end,vowel,tone,split,symbol_seq\n"]
    for item, split in zip(dataset.items, dataset.split_assignment):
        seg = item.segment
        symbols = " ".join(str(int(s)) for s in item.symbol_seq)
        lines.append(
            f"{seg.utterance_id},{seg.frame_start},{seg.frame_end},"
            f"{seg.vowel},{seg.tone},{split},{symbols}\n"
        )
    records_path.write_text("".join(lines), encoding="utf-8")
    averaged = np.vstack([item.avg_latent for item in dataset.items]).astype(np.float32)
    write_features(
        UtteranceFeatures(utterance_id=records_path.stem, frames=averaged),
        sidecar_path,
    )
