"""Command-line interface: staged subcommands plus the full pipeline.

Every subcommand reads the same JSON config (see report.load_pipeline_config)
and shares one working directory given by --out, so stages can be run
one at a time with intermediate artifacts found by convention:

    toneprobe synth          --config c.json --out D     corpus under D/corpus
    toneprobe kmeans-fit     --config c.json --out D     D/codebook.sslk
    toneprobe segment        --config c.json --out D     D/segments.csv
    toneprobe probe classify --config c.json --out D     D/f1_summary.csv
    toneprobe probe editdist --config c.json --out D     D/distance_*.csv + PGMs
    toneprobe report         --config c.json --out D     D/reference_f1.csv
    toneprobe run            --config c.json --out D     everything above

--seed overrides the seed of the subcommand's primary operation; --threads
fans out wherever the underlying module supports it.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from toneprobe.corpus import (
    CorpusError,
    build_segments,
    get_scheme,
    load_alignments,
    load_corpus,
)
from toneprobe.probe_classify import (
    ProbeError,
    export_class_reports,
    export_summary,
    run_probe_suite,
)
from toneprobe.probe_editdist import (
    EditDistError,
    diagonal_contrast,
    export_distance_matrix,
    pairwise_class_distance,
)
from toneprobe.quantize import QuantizeError, kmeans_fit, load_codebook, save_codebook
from toneprobe.report import (
    HeatmapSpec,
    ReportError,
    export_reference_table,
    load_pipeline_config,
    render_heatmap,
    run_pipeline,
)
from toneprobe.represent import RepresentError, build_dataset
from toneprobe.synth import SynthError, generate_corpus

_ERRORS = (
    CorpusError,
    QuantizeError,
    RepresentError,
    ProbeError,
    EditDistError,
    SynthError,
    ReportError,
    OSError,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toneprobe",
        description="Probe what vector quantization does to tone and vowel cues.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="<path>", help="JSON config file")
    common.add_argument("--out", required=True, metavar="<dir>", help="working/report directory")
    common.add_argument("--seed", type=int, default=None, metavar="<u64>",
                        help="override the subcommand's primary seed")
    common.add_argument("--threads", type=int, default=1, metavar="<n>",
                        help="worker threads where supported")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate the synthetic corpus")
    sub.add_parser("kmeans-fit", parents=[common], help="fit the codebook on pooled frames")
    sub.add_parser("segment", parents=[common], help="emit the vowel segment table")
    probe = sub.add_parser("probe", help="train and score probes")
    probe_sub = probe.add_subparsers(dest="probe_command", required=True)
    probe_sub.add_parser("classify", parents=[common], help="classification probes, all cells")
    probe_sub.add_parser("editdist", parents=[common], help="edit-distance matrices + heatmaps")
    sub.add_parser("report", parents=[common], help="reference table + provenance")
    sub.add_parser("run", parents=[common], help="full pipeline in one go")
    return parser


def _corpus_paths(config, out_dir: Path):
    """Locate the manifest/alignments for a staged invocation."""
    if config.synth is not None:
        manifest = out_dir / "corpus" / "manifest.tsv"
        alignments = out_dir / "corpus" / "alignments.csv"
        if not manifest.exists():
            raise ReportError(
                f"no corpus at {manifest}; run `toneprobe synth` into this --out first"
            )
        return manifest, alignments
    return config.manifest, config.alignments


def _load_segments(config, out_dir: Path):
    manifest, alignments = _corpus_paths(config, out_dir)
    scheme = get_scheme(config.scheme_name)
    features = load_corpus(manifest)
    entries = load_alignments(alignments, scheme)
    segments, dropped = build_segments(features, entries, scheme)
    return scheme, features, segments, dropped


def _require_codebook(out_dir: Path):
    path = out_dir / "codebook.sslk"
    if not path.exists():
        raise ReportError(
            f"no codebook at {path}; run `toneprobe kmeans-fit` into this --out first"
        )
    return load_codebook(path)


def _datasets(config, scheme, features, segments, codebook):
    return {
        task: build_dataset(
            segments, features, codebook, task, scheme,
            split_seed=config.split_seed, dedup_symbols=config.dedup_symbols,
        )
        for task in config.tasks
    }


def _cmd_synth(config, out_dir, seed, threads):
    if config.synth is None:
        raise ReportError("config corpus section has no synth sub-config")
    synth_config = config.synth
    if seed is not None:
        synth_config = dataclasses.replace(synth_config, seed=seed)
    manifest, _ = generate_corpus(synth_config, out_dir / "corpus", threads=threads)
    print(f"corpus written: {manifest}")
    return 0


def _cmd_kmeans_fit(config, out_dir, seed, threads):
    _, features, _, _ = _load_segments(config, out_dir)
    kmeans_config = config.kmeans
    if seed is not None:
        kmeans_config = dataclasses.replace(kmeans_config, seed=seed)
    frames = np.concatenate([utt.frames for utt in features.values()])
    codebook = kmeans_fit(frames, kmeans_config)
    path = out_dir / "codebook.sslk"
    save_codebook(codebook, path)
    print(
        f"codebook written: {path} (K={codebook.k}, "
        f"inertia={codebook.inertia_trace[-1]:.6g}, "
        f"{len(codebook.inertia_trace)} iterations)"
    )
    return 0


def _cmd_segment(config, out_dir, seed, threads):
    _, _, segments, dropped = _load_segments(config, out_dir)
    path = out_dir / "segments.csv"
    lines = ["utt_id,frame_start,frame_end,vowel,tone\n"]
    for s in segments:
        lines.append(f"{s.utterance_id},{s.frame_start},{s.frame_end},{s.vowel},{s.tone}\n")
    path.write_text("".join(lines), encoding="utf-8")
    print(f"{len(segments)} vowel segments written: {path} ({dropped} non-vowel phones dropped)")
    return 0


def _cmd_probe_classify(config, out_dir, seed, threads):
    scheme, features, segments, _ = _load_segments(config, out_dir)
    codebook = _require_codebook(out_dir)
    lstm_config, logreg_config = config.lstm, config.logreg
    if seed is not None:
        lstm_config = dataclasses.replace(lstm_config, seed=seed)
        logreg_config = dataclasses.replace(logreg_config, seed=seed)
    datasets = _datasets(config, scheme, features, segments, codebook)
    suite = run_probe_suite(datasets, lstm_config, logreg_config)
    export_summary(suite, out_dir / "f1_summary.csv")
    export_class_reports(suite, out_dir / "class_f1.csv")
    print(f"F1 tables written: {out_dir / 'f1_summary.csv'}")
    for task in config.tasks:
        cells = []
        for representation in ("Latents", "AveragedLatents", "DiscreteSymbols"):
            report = suite[(representation, task.value)]
            cells.append(f"{representation}={report.macro_f1:.4f}")
        print(f"  {task.value}: " + " ".join(cells))
    return 0


def _cmd_probe_editdist(config, out_dir, seed, threads):
    scheme, features, segments, _ = _load_segments(config, out_dir)
    codebook = _require_codebook(out_dir)
    sampling = config.editdist
    if seed is not None:
        sampling = dataclasses.replace(sampling, seed=seed)
    datasets = _datasets(config, scheme, features, segments, codebook)
    for task in config.tasks:
        dataset = datasets[task]
        pairs = [
            (dataset.labels[i], dataset.items[i].symbol_seq)
            for i in range(len(dataset.items))
        ]
        matrix = pairwise_class_distance(
            pairs, sampling, task=task,
            class_order=dataset.label_vocabulary, threads=threads,
        )
        slug = task.value.replace("-", "_")
        export_distance_matrix(matrix, out_dir / f"distance_{slug}.csv")
        if matrix.flagged_cells():
            print(f"  {task.value}: flagged cells, heatmap skipped")
            continue
        render_heatmap(
            HeatmapSpec(matrix, cell_size=config.heatmap_cell_size),
            out_dir / f"heatmap_{slug}.pgm",
        )
        print(f"  {task.value}: diagonal contrast {diagonal_contrast(matrix):+.4f}")
    print(f"distance matrices written under {out_dir}")
    return 0


def _cmd_report(config, out_dir, seed, threads):
    path = out_dir / "reference_f1.csv"
    export_reference_table(path)
    print(f"reference table written: {path}")
    return 0


def _cmd_run(config_path, out_dir, seed, threads):
    config = load_pipeline_config(config_path)
    if seed is not None:
        if config.synth is None:
            raise ReportError("--seed with `run` needs a synth corpus to apply to")
        config = dataclasses.replace(
            config, synth=dataclasses.replace(config.synth, seed=seed)
        )
    run_pipeline(config, out_dir, threads=threads)
    print(f"pipeline complete: {out_dir}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    command = args.command
    if command == "probe":
        command = f"probe-{args.probe_command}"
    out_dir = Path(args.out)
    try:
        if args.threads < 1:
            raise ReportError("--threads must be >= 1")
        if command == "run":
            return _cmd_run(args.config, out_dir, args.seed, args.threads)
        config = load_pipeline_config(args.config)
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = {
            "synth": _cmd_synth,
            "kmeans-fit": _cmd_kmeans_fit,
            "segment": _cmd_segment,
            "probe-classify": _cmd_probe_classify,
            "probe-editdist": _cmd_probe_editdist,
            "report": _cmd_report,
        }[command]
        return handler(config, out_dir, args.seed, args.threads)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
