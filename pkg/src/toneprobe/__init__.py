"""Probing toolkit for phonetic and tone information in speech representations.

The pipeline: load frame-level feature dumps and phone alignments
(corpus), fit a k-means codebook and discretize frames (quantize), build
per-phone latent / averaged / discrete-symbol representations
(represent), train classification probes (probe_classify) and pairwise
edit-distance probes (probe_editdist), generate synthetic corpora with
known structure (synth), and render reports (report).
"""

from toneprobe.corpus import (
    MANDARIN,
    YORUBA,
    AlignmentEntry,
    CorpusError,
    LabelScheme,
    PhoneSegment,
    TaskKind,
    UtteranceFeatures,
    build_segments,
    get_scheme,
    load_alignments,
    load_corpus,
    load_features,
    write_features,
)
from toneprobe.probe_classify import (
    ClassificationReport,
    ProbeError,
    TrainConfig,
    evaluate,
    export_class_reports,
    export_summary,
    report_from_confusion,
    run_probe_suite,
    train_logreg,
    train_lstm,
)
from toneprobe.probe_editdist import (
    DistanceMatrix,
    EditDistError,
    PairSamplingConfig,
    diagonal_contrast,
    export_distance_matrix,
    levenshtein,
    pairwise_class_distance,
)
from toneprobe.quantize import (
    Codebook,
    KMeansConfig,
    QuantizeError,
    assign_symbols,
    inertia,
    kmeans_fit,
    load_codebook,
    save_codebook,
)
from toneprobe.report import (
    HeatmapSpec,
    PipelineConfig,
    ReportError,
    export_reference_table,
    load_pipeline_config,
    parse_pipeline_config,
    reference_f1,
    reference_rows,
    render_heatmap,
    run_pipeline,
)
from toneprobe.represent import (
    PhoneRepresentation,
    ProbeDataset,
    RepresentError,
    build_dataset,
    dedup_runs,
    export_dataset,
    symbolize_segment,
)
from toneprobe.synth import SynthConfig, SynthError, generate_corpus, tone_trajectory

__version__ = "0.1.0"
