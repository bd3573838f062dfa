"""Published reference tables, PGM heatmaps, and pipeline orchestration.

Reference F1 values are display-only context for locally computed
results; a desk-scale run cannot and should not be compared against
them numerically.  Heatmaps are 8-bit binary PGM, lighter = lower
distance, one image per distance matrix with a text legend sidecar.
run_pipeline chains corpus -> codebook -> representations -> both
probes -> report artifacts from a single JSON config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

from toneprobe.corpus import (
    TaskKind,
    build_segments,
    get_scheme,
    load_alignments,
    load_corpus,
)
from toneprobe.probe_classify import (
    REPRESENTATIONS,
    TASK_ROW_ORDER,
    TrainConfig,
    export_class_reports,
    export_summary,
    run_probe_suite,
)
from toneprobe.probe_editdist import (
    DistanceMatrix,
    PairSamplingConfig,
    diagonal_contrast,
    export_distance_matrix,
    pairwise_class_distance,
)
from toneprobe.quantize import KMeansConfig, kmeans_fit, save_codebook
from toneprobe.represent import build_dataset
from toneprobe.synth import SynthConfig, generate_corpus


class ReportError(ValueError):
    """Bad report input, unknown reference key, or pipeline failure."""


# ---------------------------------------------------------------------------
# published reference tables

_TASK_ORDER = ("vowel-without-tone", "vowel-with-tone", "tone-only")

# (language, model) -> rows in _TASK_ORDER, columns in REPRESENTATIONS
# (Latents, AveragedLatents, DiscreteSymbols).
_REFERENCE_TABLES = {
    ("Mandarin", "HuBERT base"): (
        (0.97, 0.94, 0.79),
        (0.70, 0.62, 0.38),
        (0.71, 0.65, 0.45),
    ),
    ("Mandarin", "MandarinHuBERT"): (
        (0.99, 0.98, 0.86),
        (0.79, 0.74, 0.46),
        (0.79, 0.76, 0.49),
    ),
    ("Yoruba", "HuBERT base"): (
        (0.96, 0.92, 0.57),
        (0.83, 0.78, 0.33),
        (0.86, 0.74, 0.49),
    ),
    ("Yoruba", "XLS-R"): (
        (0.97, 0.96, 0.60),
        (0.65, 0.86, 0.37),
        (0.89, 0.82, 0.52),
    ),
}

REFERENCE_LANGUAGES = ("Mandarin", "Yoruba")
REFERENCE_MODELS = {
    "Mandarin": ("HuBERT base", "MandarinHuBERT"),
    "Yoruba": ("HuBERT base", "XLS-R"),
}


def reference_f1(
    language: str, model: str, task: Union[TaskKind, str], representation: str
) -> float:
    """Published F1 for one (language, model, task, representation) cell."""
    task_value = task.value if isinstance(task, TaskKind) else task
    table = _REFERENCE_TABLES.get((language, model))
    if table is None:
        raise ReportError(f"no reference table for ({language!r}, {model!r})")
    if task_value not in _TASK_ORDER:
        raise ReportError(f"unknown task {task_value!r}")
    if representation not in REPRESENTATIONS:
        raise ReportError(f"unknown representation {representation!r}")
    row = table[_TASK_ORDER.index(task_value)]
    return row[REPRESENTATIONS.index(representation)]


def reference_rows() -> list[tuple[str, str, str, str, float]]:
    """Every reference cell as (language, model, task, representation, f1),
    in fixed display order."""
    rows = []
    for language in REFERENCE_LANGUAGES:
        for model in REFERENCE_MODELS[language]:
            for task_value in _TASK_ORDER:
                for representation in REPRESENTATIONS:
                    rows.append(
                        (
                            language,
                            model,
                            task_value,
                            representation,
                            reference_f1(language, model, task_value, representation),
                        )
                    )
    return rows


def export_reference_table(path) -> None:
    lines = ["language,model,task,representation,f1\n"]
    for language, model, task_value, representation, f1 in reference_rows():
        lines.append(f"{language},{model},{task_value},{representation},{f1:.2f}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


# ---------------------------------------------------------------------------
# heatmap rendering

COLOR_RULE = "lighter = lower distance"


@dataclass(frozen=True)
class HeatmapSpec:
    """Rendering parameters for one distance matrix.

    The color rule is fixed; the field exists so the convention is
    recorded on the spec object and in legends rather than implied.
    """

    matrix: DistanceMatrix
    cell_size: int = 24
    color_rule: str = COLOR_RULE

    def __post_init__(self):
        if self.cell_size < 1:
            raise ReportError("cell_size must be >= 1")
        if self.color_rule != COLOR_RULE:
            raise ReportError(f"color rule is fixed to {COLOR_RULE!r}")


def render_heatmap(spec: HeatmapSpec, path) -> tuple[Path, Path]:
    """Write a binary PGM plus a .legend.txt sidecar; returns both paths.

    Min-max scaled per matrix: the smallest distance renders white (255)
    and the largest black (0).  A constant matrix renders uniform
    mid-gray and the legend records the degenerate scale.
    """
    matrix = spec.matrix
    flagged = matrix.flagged_cells()
    if flagged:
        raise ReportError(f"matrix has flagged cells: {flagged}")
    values = matrix.values
    lo = float(values.min())
    hi = float(values.max())
    degenerate = not hi > lo
    if degenerate:
        cells = np.full(values.shape, 128.0)
    else:
        cells = np.rint(255.0 * (1.0 - (values - lo) / (hi - lo)))
    pixels = np.repeat(np.repeat(cells, spec.cell_size, 0), spec.cell_size, 1)
    h, w = pixels.shape

    path = Path(path)
    path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + pixels.astype(np.uint8).tobytes())

    legend_lines = [
        f"task: {matrix.task_name or 'unspecified'}\n",
        f"classes: {', '.join(matrix.classes)}\n",
        f"scale: min={lo:.10g} max={hi:.10g}\n",
        f"color rule: {spec.color_rule}\n",
        f"cell size: {spec.cell_size} px\n",
        f"normalized distances: {str(matrix.normalized).lower()}\n",
    ]
    if degenerate:
        legend_lines.append("degenerate scale: all distances equal; rendered mid-gray\n")
    legend_path = path.with_suffix(".legend.txt")
    legend_path.write_text("".join(legend_lines), encoding="utf-8")
    return path, legend_path


def read_heatmap_cells(path, n_classes: int, cell_size: int) -> np.ndarray:
    """Recover the per-cell gray levels from a rendered PGM.

    The inverse of render_heatmap's pixel expansion, for audits that
    re-derive statistics from emitted bytes rather than trusting the
    in-memory matrix.
    """
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5" or len(parts) < 4:
        raise ReportError(f"{path}: not a binary PGM")
    w, h = (int(x) for x in parts[1].split())
    if int(parts[2]) != 255:
        raise ReportError(f"{path}: expected 8-bit max value 255")
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)
    if h != n_classes * cell_size or w != n_classes * cell_size:
        raise ReportError(f"{path}: size {w}x{h} does not match {n_classes} cells")
    return pixels[::cell_size, ::cell_size].astype(np.float64)


# ---------------------------------------------------------------------------
# pipeline configuration

_TOP_LEVEL_KEYS = {
    "scheme",
    "corpus",
    "kmeans",
    "split_seed",
    "dedup_symbols",
    "tasks",
    "lstm",
    "logreg",
    "editdist",
    "heatmap_cell_size",
}


def _from_mapping(cls, raw: Mapping, what: str, **fixed):
    allowed = {f.name for f in fields(cls)} - set(fixed)
    unknown = set(raw) - allowed
    if unknown:
        raise ReportError(f"{what}: unknown keys {sorted(unknown)}")
    return cls(**dict(raw), **fixed)


@dataclass(frozen=True)
class PipelineConfig:
    scheme_name: str
    synth: Optional[SynthConfig]
    manifest: Optional[Path]
    alignments: Optional[Path]
    kmeans: KMeansConfig
    split_seed: int
    dedup_symbols: bool
    tasks: tuple[TaskKind, ...]
    lstm: TrainConfig
    logreg: TrainConfig
    editdist: PairSamplingConfig
    heatmap_cell_size: int


def parse_pipeline_config(raw: Mapping, base_dir=None) -> PipelineConfig:
    """Validate a config mapping; unknown keys anywhere are errors.

    The corpus section must contain either a "synth" sub-config or
    "manifest" + "alignments" paths (resolved against base_dir).
    """
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ReportError(f"config: unknown keys {sorted(unknown)}")
    for key in ("scheme", "corpus"):
        if key not in raw:
            raise ReportError(f"config: missing required key {key!r}")
    scheme_name = raw["scheme"]
    scheme = get_scheme(scheme_name)

    corpus_raw = dict(raw["corpus"])
    synth_config = manifest = alignments = None
    if "synth" in corpus_raw:
        synth_raw = corpus_raw.pop("synth")
        if corpus_raw:
            raise ReportError(f"corpus: unknown keys {sorted(corpus_raw)} next to synth")
        synth_config = _from_mapping(SynthConfig, synth_raw, "corpus.synth", scheme=scheme)
    else:
        unknown = set(corpus_raw) - {"manifest", "alignments"}
        if unknown:
            raise ReportError(f"corpus: unknown keys {sorted(unknown)}")
        for key in ("manifest", "alignments"):
            if key not in corpus_raw:
                raise ReportError(f"corpus: missing required key {key!r}")
        base = Path(base_dir) if base_dir is not None else Path(".")
        manifest = base / corpus_raw["manifest"]
        alignments = base / corpus_raw["alignments"]

    task_values = raw.get("tasks", list(_TASK_ORDER))
    tasks = []
    for value in task_values:
        try:
            tasks.append(TaskKind(value))
        except ValueError:
            raise ReportError(f"tasks: unknown task {value!r}")
    if not tasks:
        raise ReportError("tasks: need at least one")

    return PipelineConfig(
        scheme_name=scheme.name,
        synth=synth_config,
        manifest=manifest,
        alignments=alignments,
        kmeans=_from_mapping(KMeansConfig, raw.get("kmeans", {}), "kmeans"),
        split_seed=int(raw.get("split_seed", 42)),
        dedup_symbols=bool(raw.get("dedup_symbols", False)),
        tasks=tuple(tasks),
        lstm=_from_mapping(TrainConfig, raw.get("lstm", {}), "lstm"),
        logreg=_from_mapping(TrainConfig, raw.get("logreg", {}), "logreg"),
        editdist=_from_mapping(PairSamplingConfig, raw.get("editdist", {}), "editdist"),
        heatmap_cell_size=int(raw.get("heatmap_cell_size", 24)),
    )


def load_pipeline_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReportError(f"config {path}: invalid JSON ({exc})")
    if not isinstance(raw, dict):
        raise ReportError(f"config {path}: top level must be a JSON object")
    return parse_pipeline_config(raw, base_dir=path.parent)


# ---------------------------------------------------------------------------
# pipeline


def _config_provenance(config: PipelineConfig) -> dict:
    def plain(obj):
        out = {}
        for f in fields(obj):
            value = getattr(obj, f.name)
            out[f.name] = value.name if f.name == "scheme" else value
        return out

    corpus = (
        {"synth": plain(config.synth)}
        if config.synth is not None
        else {"manifest": str(config.manifest), "alignments": str(config.alignments)}
    )
    return {
        "scheme": config.scheme_name,
        "corpus": corpus,
        "kmeans": plain(config.kmeans),
        "split_seed": config.split_seed,
        "dedup_symbols": config.dedup_symbols,
        "tasks": [task.value for task in config.tasks],
        "lstm": plain(config.lstm),
        "logreg": plain(config.logreg),
        "editdist": plain(config.editdist),
        "heatmap_cell_size": config.heatmap_cell_size,
    }


def run_pipeline(
    config: Union[PipelineConfig, Mapping, str, Path], out_dir, threads: int = 1
) -> Path:
    """Execute corpus -> codebook -> datasets -> probes -> report.

    Any stage failure raises ReportError naming the stage; the status
    file in out_dir reads "incomplete" until the run finishes, when it
    flips to "complete".  All artifacts are deterministic for a config.
    """
    if isinstance(config, (str, Path)):
        config = load_pipeline_config(config)
    elif isinstance(config, Mapping):
        config = parse_pipeline_config(config)
    if threads < 1:
        raise ReportError("threads must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    status_path = out_dir / "status.txt"
    status_path.write_text("incomplete\n", encoding="utf-8")

    scheme = get_scheme(config.scheme_name)

    def stage(name, fn):
        try:
            return fn()
        except ReportError:
            raise
        except Exception as exc:
            raise ReportError(f"stage {name}: {exc}") from exc

    def corpus_stage():
        if config.synth is not None:
            corpus_dir = out_dir / "corpus"
            return generate_corpus(config.synth, corpus_dir, threads=threads)
        return config.manifest, config.alignments

    manifest_path, alignment_path = stage("corpus", corpus_stage)

    def segments_stage():
        features = load_corpus(manifest_path)
        entries = load_alignments(alignment_path, scheme)
        segments, dropped = build_segments(features, entries, scheme)
        if not segments:
            raise ReportError("no vowel segments in the corpus")
        return features, segments, dropped

    features, segments, dropped_phones = stage("segments", segments_stage)

    def kmeans_stage():
        frames = np.concatenate([utt.frames for utt in features.values()])
        codebook = kmeans_fit(frames, config.kmeans)
        save_codebook(codebook, out_dir / "codebook.sslk")
        return codebook

    codebook = stage("kmeans", kmeans_stage)

    def datasets_stage():
        table = {}
        for task in config.tasks:
            table[task] = build_dataset(
                segments,
                features,
                codebook,
                task,
                scheme,
                split_seed=config.split_seed,
                dedup_symbols=config.dedup_symbols,
            )
        return table

    datasets = stage("datasets", datasets_stage)

    def classify_stage():
        suite = run_probe_suite(datasets, config.lstm, config.logreg)
        export_summary(suite, out_dir / "f1_summary.csv")
        export_class_reports(suite, out_dir / "class_f1.csv")
        return suite

    stage("probe-classify", classify_stage)

    def editdist_stage():
        contrasts = {}
        for task in config.tasks:
            dataset = datasets[task]
            pairs = [
                (dataset.labels[i], dataset.items[i].symbol_seq)
                for i in range(len(dataset.items))
            ]
            matrix = pairwise_class_distance(
                pairs,
                config.editdist,
                task=task,
                class_order=dataset.label_vocabulary,
                threads=threads,
            )
            slug = task.value.replace("-", "_")
            export_distance_matrix(matrix, out_dir / f"distance_{slug}.csv")
            if not matrix.flagged_cells():
                spec = HeatmapSpec(matrix, cell_size=config.heatmap_cell_size)
                render_heatmap(spec, out_dir / f"heatmap_{slug}.pgm")
                contrasts[task.value] = diagonal_contrast(matrix)
            else:
                contrasts[task.value] = None
        return contrasts

    contrasts = stage("probe-editdist", editdist_stage)

    def report_stage():
        export_reference_table(out_dir / "reference_f1.csv")
        provenance = {
            "config": _config_provenance(config),
            "diagonal_contrast": contrasts,
            "dropped_phones": dropped_phones,
            "artifacts": sorted(
                p.relative_to(out_dir).as_posix()
                for p in out_dir.rglob("*")
                if p.is_file() and p.name != "status.txt"
            ),
        }
        (out_dir / "provenance.json").write_text(
            json.dumps(provenance, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    stage("report", report_stage)
    status_path.write_text("complete\n", encoding="utf-8")
    return out_dir
