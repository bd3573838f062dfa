"""Command-line interface: feature extraction and alignment conversion.

    toneprobe-extractor extract --model "HuBERT base" --layer 9 \
        --audio-manifest wavs/manifest.tsv --out dumps/
    toneprobe-extractor convert-align --in aligned/ --scheme yoruba \
        --out dumps/alignments.csv
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from toneprobe.corpus import CorpusError, get_scheme

from toneprobe_extractor.extract import ExtractError, ExtractionJob, dump_latents
from toneprobe_extractor.textgrids import AlignmentConvertError, convert_alignments


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toneprobe-extractor",
        description="Dump speech-model activations and aligner output "
        "into toneprobe's interchange formats.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    extract = sub.add_parser("extract", help="dump one hidden layer to SSLF files")
    extract.add_argument("--model", required=True, metavar="<id>",
                         help='checkpoint: "HuBERT base", "MandarinHuBERT", '
                         '"XLS-R", a model-hub id, or a local path')
    extract.add_argument("--layer", type=int, default=9, metavar="<n>",
                         help="hidden-state index to dump (default 9)")
    extract.add_argument("--audio-manifest", required=True, metavar="<path>",
                         help="TSV of utterance_id<TAB>wav_path")
    extract.add_argument("--out", required=True, metavar="<dir>")
    extract.add_argument("--threads", type=int, default=1, metavar="<n>",
                         help="files extracted concurrently")

    convert = sub.add_parser("convert-align", help="TextGrids to an alignment CSV")
    convert.add_argument("--in", dest="in_dir", required=True, metavar="<dir>",
                         help="directory of aligner TextGrid files")
    convert.add_argument("--scheme", required=True, choices=("mandarin", "yoruba"))
    convert.add_argument("--out", required=True, metavar="<csv>")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "extract":
            manifest = dump_latents(
                ExtractionJob(
                    model=args.model,
                    audio_manifest=args.audio_manifest,
                    out_dir=args.out,
                    layer=args.layer,
                    threads=args.threads,
                )
            )
            print(f"features written: {manifest}")
        else:
            path = convert_alignments(args.in_dir, get_scheme(args.scheme), args.out)
            print(f"alignments written: {path}")
        return 0
    except (ExtractError, AlignmentConvertError, CorpusError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
