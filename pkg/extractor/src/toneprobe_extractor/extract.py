"""Dump hidden-layer activations of pretrained speech models to SSLF files.

The adapter owns everything between raw audio and the interchange
formats: decoding 16-bit PCM WAV, downmixing to mono, resampling to
16 kHz, per-utterance mean/variance normalization (the standard
inference recipe for this model family), and one forward pass per file
with hidden states exposed.  Model choice, batch shape, and device
never leak into the output bytes; a fixed checkpoint and audio file
give a byte-identical dump.
"""

from __future__ import annotations

import json
import math
import wave
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from toneprobe.corpus import UtteranceFeatures, write_features, write_manifest


class ExtractError(ValueError):
    """Unresolvable model, undecodable audio, or a bad manifest/config."""


# friendly names for the checkpoints the reference tables cite; anything
# else is passed through as a model-hub id or local path
MODEL_ALIASES = {
    "HuBERT base": "facebook/hubert-base-ls960",
    "MandarinHuBERT": "TencentGameMate/chinese-hubert-base",
    "XLS-R": "facebook/wav2vec2-xls-r-300m",
}

TARGET_SAMPLE_RATE = 16_000
EXPECTED_HIDDEN_SIZES = (768, 1024)
_NORM_EPS = 1e-7


@dataclass(frozen=True)
class ExtractionJob:
    """One extraction run: which checkpoint, which layer, which audio."""

    model: str
    audio_manifest: str
    out_dir: str
    layer: int = 9
    threads: int = 1

    def __post_init__(self):
        if not self.model:
            raise ExtractError("model must be non-empty")
        if self.layer < 0:
            raise ExtractError("layer must be >= 0")
        if self.threads < 1:
            raise ExtractError("threads must be >= 1")


def resolve_model_id(name: str) -> str:
    return MODEL_ALIASES.get(name, name)


def read_audio_manifest(path) -> list[tuple[str, Path]]:
    """`utterance_id<TAB>wav_path` lines; relative paths resolve against
    the manifest's directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ExtractError(f"cannot read audio manifest: {exc}") from exc
    entries = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ExtractError(f"{path}:{lineno}: expected 'utterance_id<TAB>wav_path'")
        utt, wav = parts
        if utt in seen:
            raise ExtractError(f"{path}: duplicate utterance id {utt!r}")
        seen.add(utt)
        entries.append((utt, path.parent / wav))
    if not entries:
        raise ExtractError(f"{path}: empty audio manifest")
    return entries


def load_wav(path) -> tuple[np.ndarray, int]:
    """Decode a 16-bit PCM WAV to float32 in [-1, 1); stereo is averaged
    to mono.  Returns (samples, sample_rate)."""
    try:
        with wave.open(str(path), "rb") as handle:
            width = handle.getsampwidth()
            if width != 2:
                raise ExtractError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
            rate = handle.getframerate()
            channels = handle.getnchannels()
            raw = handle.readframes(handle.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise ExtractError(f"{path}: undecodable audio: {exc}") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    if samples.size == 0:
        raise ExtractError(f"{path}: empty audio")
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def resample_to_target(samples: np.ndarray, rate: int) -> np.ndarray:
    if rate == TARGET_SAMPLE_RATE:
        return samples
    from scipy.signal import resample_poly

    g = math.gcd(rate, TARGET_SAMPLE_RATE)
    out = resample_poly(samples.astype(np.float64), TARGET_SAMPLE_RATE // g, rate // g)
    return out.astype(np.float32)


def _normalize(samples: np.ndarray) -> np.ndarray:
    mean = samples.mean()
    var = samples.var()
    return ((samples - mean) / np.sqrt(var + _NORM_EPS)).astype(np.float32)


def _load_model(name: str):
    import torch
    from transformers import AutoModel

    model_id = resolve_model_id(name)
    try:
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise ExtractError(f"cannot resolve model {name!r} ({model_id}): {exc}") from exc
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model, model_id


def dump_latents(job: ExtractionJob) -> Path:
    """Extract one hidden layer for every manifest entry.

    Writes features/<utt>.sslf per utterance, a manifest the core
    loaders accept directly, and provenance.json.  Returns the manifest
    path.  Files are processed in manifest order; the thread count never
    changes output bytes.
    """
    import torch

    entries = read_audio_manifest(job.audio_manifest)
    model, model_id = _load_model(job.model)
    n_layers = model.config.num_hidden_layers
    if job.layer > n_layers:
        raise ExtractError(
            f"layer {job.layer} out of range: {model_id} has hidden states 0..{n_layers}"
        )
    hidden_size = model.config.hidden_size
    if hidden_size not in EXPECTED_HIDDEN_SIZES:
        raise ExtractError(
            f"{model_id}: hidden size {hidden_size} not in {EXPECTED_HIDDEN_SIZES}"
        )

    out_dir = Path(job.out_dir)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)

    def extract_one(entry: tuple[str, Path]) -> tuple[str, str]:
        utt, wav_path = entry
        samples, rate = load_wav(wav_path)
        samples = _normalize(resample_to_target(samples, rate))
        with torch.no_grad():
            outputs = model(
                torch.from_numpy(samples)[None, :], output_hidden_states=True
            )
        frames = outputs.hidden_states[job.layer][0].numpy().astype(np.float32)
        rel = f"features/{utt}.sslf"
        write_features(UtteranceFeatures(utt, frames), out_dir / rel)
        return utt, rel

    if job.threads == 1:
        manifest_entries = [extract_one(entry) for entry in entries]
    else:
        with ThreadPoolExecutor(max_workers=job.threads) as pool:
            manifest_entries = list(pool.map(extract_one, entries))

    manifest_path = out_dir / "manifest.tsv"
    write_manifest(manifest_entries, manifest_path)
    provenance = {
        "model": job.model,
        "resolved_model": model_id,
        "layer": job.layer,
        "hidden_size": hidden_size,
        "target_sample_rate": TARGET_SAMPLE_RATE,
        "normalization": "per-utterance zero mean, unit variance",
        "utterances": len(manifest_entries),
    }
    (out_dir / "provenance.json").write_text(
        json.dumps(provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path
