"""Adapters from real speech models and aligner output to toneprobe's
interchange formats: SSLF feature dumps per utterance plus alignment
CSVs, both validated against the toneprobe loaders."""

from toneprobe_extractor.extract import (
    MODEL_ALIASES,
    TARGET_SAMPLE_RATE,
    ExtractError,
    ExtractionJob,
    dump_latents,
    load_wav,
    read_audio_manifest,
    resample_to_target,
    resolve_model_id,
)
from toneprobe_extractor.textgrids import (
    AlignmentConvertError,
    convert_alignments,
    parse_phone_intervals,
)

__version__ = "0.1.0"
