"""Synthetic corpora with planted vowel identities and tone trajectories.

Each phone occupies a handful of frames.  Its vowel contributes a fixed
unit basis vector (one axis per vowel), its tone contributes a trajectory
in a separate two-axis subspace, evaluated at the relative position t/L
of each frame, and isotropic gaussian noise covers everything.  Vowel
and tone cues therefore live in disjoint orthogonal subspaces with
independently controllable amplitudes: the tone cue is deliberately the
weaker one, and whether vector quantization discards it is measurable
downstream rather than assumed.

Generation is deterministic for a given config: utterance u draws from
np.random.default_rng([seed, u]) regardless of how many workers run.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from toneprobe.corpus import (
    DEFAULT_FRAME_HOP,
    LabelScheme,
    UtteranceFeatures,
    write_features,
    write_manifest,
)

PHONES_PER_UTTERANCE = 20

# Peak trajectory value, as a fraction of tone_amplitude.  Calibrated so
# that per-frame tone-axis variance stays at the level of one noise axis:
# k-means then carves clusters along noise directions instead of tone,
# while sequence models still read the trajectory reliably.
TONE_SHAPE_PEAK = 0.30


class SynthError(ValueError):
    """Invalid synthesis configuration."""


def tone_trajectory(shape: str, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Trajectory values (two tone-subspace coordinates) at relative
    positions s in [0, 1).

    Level shapes are constant on the first axis.  Rising and falling
    sweep it linearly while arcing the second axis through an opposite-
    signed midpoint bump; dip descends to -peak at the midpoint and
    recovers, staying on the first axis.  Every contour's per-frame
    values overlap the level shapes' range, so single frames are
    ambiguous and only the transit order separates the five curves."""
    s = np.asarray(s, dtype=np.float64)
    peak = TONE_SHAPE_PEAK
    zero = np.zeros_like(s)
    bump = 4.0 * s * (1.0 - s)
    if shape == "level-high":
        return np.full_like(s, peak), zero
    if shape == "level-low":
        return np.full_like(s, -peak), zero
    if shape == "mid-level":
        return zero, zero
    if shape == "rising":
        return peak * (2.0 * s - 1.0), peak * bump
    if shape == "falling":
        return peak * (1.0 - 2.0 * s), -peak * bump
    if shape == "dip":
        return peak * (np.abs(4.0 * s - 2.0) - 1.0), zero
    raise SynthError(f"unknown tone shape {shape!r}")


_SCHEME_TONE_SHAPES = {
    "mandarin": {"1": "level-high", "2": "rising", "3": "dip", "4": "falling", "5": "level-low"},
    "yoruba": {"H": "level-high", "L": "level-low", "Neutral": "mid-level"},
}


@dataclass(frozen=True)
class SynthConfig:
    scheme: LabelScheme
    latent_dim: int = 32
    phones_per_corpus: int = 5000
    phone_amplitude: float = 1.0
    tone_amplitude: float = 0.25
    noise_sigma: float = 0.10
    min_duration: int = 5
    max_duration: int = 10
    seed: int = 0

    def __post_init__(self):
        needed = len(self.scheme.vowels) + 2
        if self.latent_dim < needed:
            raise SynthError(
                f"latent_dim {self.latent_dim} cannot host {len(self.scheme.vowels)} "
                f"vowel axes plus 2 tone axes (need >= {needed})"
            )
        if self.scheme.name not in _SCHEME_TONE_SHAPES:
            raise SynthError(f"no tone-shape mapping for scheme {self.scheme.name!r}")
        if self.phones_per_corpus < 1:
            raise SynthError("phones_per_corpus must be >= 1")
        if self.phone_amplitude <= 0 or self.noise_sigma < 0 or self.tone_amplitude < 0:
            raise SynthError("amplitudes must be non-negative, phone_amplitude positive")
        if not self.tone_amplitude < self.phone_amplitude:
            raise SynthError("tone_amplitude must stay below phone_amplitude")
        if not (1 <= self.min_duration <= self.max_duration <= 50):
            raise SynthError("duration range must satisfy 1 <= min <= max <= 50")
        if self.seed < 0:
            raise SynthError("seed must be >= 0")


def _generate_utterance(config: SynthConfig, utt_index: int, n_phones: int):
    """All frames plus (label, frame_start, frame_end) spans for one
    utterance.  Per-phone draw order: vowel, tone, duration, noise."""
    rng = np.random.default_rng([config.seed, utt_index])
    scheme = config.scheme
    shape_of = _SCHEME_TONE_SHAPES[scheme.name]
    n_vowels = len(scheme.vowels)
    dim = config.latent_dim

    chunks = []
    spans = []
    cursor = 0
    for _ in range(n_phones):
        vowel_idx = int(rng.integers(n_vowels))
        tone_idx = int(rng.integers(len(scheme.tones)))
        length = int(rng.integers(config.min_duration, config.max_duration + 1))
        frames = config.noise_sigma * rng.standard_normal((length, dim))
        frames[:, vowel_idx] += config.phone_amplitude
        v1, v2 = tone_trajectory(shape_of[scheme.tones[tone_idx]], np.arange(length) / length)
        frames[:, n_vowels] += config.tone_amplitude * v1
        frames[:, n_vowels + 1] += config.tone_amplitude * v2
        chunks.append(frames)
        label = scheme.compose(scheme.vowels[vowel_idx], scheme.tones[tone_idx])
        spans.append((label, cursor, cursor + length))
        cursor += length
    return np.concatenate(chunks).astype(np.float32), spans


def generate_corpus(config: SynthConfig, out_dir, threads: int = 1):
    """Write a synthetic corpus under out_dir and return
    (manifest path, alignment CSV path).

    Layout: features/<utt>.sslf per utterance, manifest.tsv,
    alignments.csv, and provenance.json recording the full config.
    Output bytes are identical for a given config regardless of
    threads."""
    if threads < 1:
        raise SynthError("threads must be >= 1")
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)

    total = config.phones_per_corpus
    n_utts = math.ceil(total / PHONES_PER_UTTERANCE)
    width = max(4, len(str(n_utts - 1)))
    counts = [
        min(PHONES_PER_UTTERANCE, total - u * PHONES_PER_UTTERANCE) for u in range(n_utts)
    ]

    if threads == 1:
        results = [_generate_utterance(config, u, counts[u]) for u in range(n_utts)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda u: _generate_utterance(config, u, counts[u]), range(n_utts)))

    manifest_entries = []
    align_lines = ["utt_id,phone,start_s,end_s\n"]
    hop = DEFAULT_FRAME_HOP
    for u, (frames, spans) in enumerate(results):
        utt_id = f"u{u:0{width}d}"
        rel = f"features/{utt_id}.sslf"
        write_features(UtteranceFeatures(utt_id, frames, frame_hop=hop), out_dir / rel)
        manifest_entries.append((utt_id, rel))
        for label, start, end in spans:
            align_lines.append(f"{utt_id},{label},{start * hop:.3f},{end * hop:.3f}\n")

    manifest_path = out_dir / "manifest.tsv"
    alignment_path = out_dir / "alignments.csv"
    write_manifest(manifest_entries, manifest_path)
    alignment_path.write_text("".join(align_lines), encoding="utf-8")

    provenance = {
        "scheme": config.scheme.name,
        "latent_dim": config.latent_dim,
        "phones_per_corpus": config.phones_per_corpus,
        "phone_amplitude": config.phone_amplitude,
        "tone_amplitude": config.tone_amplitude,
        "noise_sigma": config.noise_sigma,
        "duration_frames": [config.min_duration, config.max_duration],
        "seed": config.seed,
        "frame_hop": hop,
        "phones_per_utterance": PHONES_PER_UTTERANCE,
        "tone_shape_peak": TONE_SHAPE_PEAK,
        "num_utterances": n_utts,
        "manifest": manifest_path.name,
        "alignments": alignment_path.name,
    }
    (out_dir / "provenance.json").write_text(
        json.dumps(provenance, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest_path, alignment_path
