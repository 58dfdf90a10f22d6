"""Deterministic variance-preserving dataset curation over embeddings."""

from varpedis.bias import (
    BiasReport,
    ClassBias,
    ClassSpec,
    PopulationSpec,
    SubgroupSpec,
    evaluate_selection,
    generate_population,
    load_population_spec,
    subgroup_counts,
)
from varpedis.selection import (
    Bucket,
    ClassSelection,
    SelectionConfig,
    bucketize,
    sample_bucket,
    select_class,
    select_dataset,
    threshold_filter,
)
from varpedis.similarity import (
    ClassCentroid,
    ScoredRecord,
    ZeroNormError,
    centroid,
    cosine,
    score_class,
)
from varpedis.store import (
    Dataset,
    EmbeddingRecord,
    FormatError,
    ManifestEntry,
    SelectionManifest,
    read_binary,
    read_csv,
    read_dataset,
    read_manifest,
    write_binary,
    write_csv,
    write_manifest,
)

__version__ = "0.1.0"

__all__ = [
    "BiasReport",
    "Bucket",
    "ClassBias",
    "ClassCentroid",
    "ClassSelection",
    "ClassSpec",
    "Dataset",
    "EmbeddingRecord",
    "FormatError",
    "ManifestEntry",
    "PopulationSpec",
    "ScoredRecord",
    "SelectionConfig",
    "SelectionManifest",
    "SubgroupSpec",
    "ZeroNormError",
    "bucketize",
    "centroid",
    "cosine",
    "evaluate_selection",
    "generate_population",
    "load_population_spec",
    "read_binary",
    "read_csv",
    "read_dataset",
    "read_manifest",
    "sample_bucket",
    "score_class",
    "select_class",
    "select_dataset",
    "subgroup_counts",
    "threshold_filter",
    "write_binary",
    "write_csv",
    "write_manifest",
]
