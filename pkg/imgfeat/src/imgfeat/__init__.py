"""Image embeddings from a pinned CNN backbone, plus a desk-scale
two-phase training demo."""

from imgfeat.backbone import backbone_dim, ensure_weights, load_backbone, preprocess
from imgfeat.extract import ExtractJob, ExtractResult, extract
from imgfeat.formats import (
    read_embeddings,
    read_label_map,
    write_embeddings,
    write_skip_report,
)
from imgfeat.train import (
    EarlyStopper,
    Phase1Config,
    Phase2Config,
    SplitData,
    TrainConfig,
    TrainLog,
    accuracy,
    make_toy_data,
    make_toy_model,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "EarlyStopper",
    "ExtractJob",
    "ExtractResult",
    "Phase1Config",
    "Phase2Config",
    "SplitData",
    "TrainConfig",
    "TrainLog",
    "accuracy",
    "backbone_dim",
    "ensure_weights",
    "extract",
    "load_backbone",
    "make_toy_data",
    "make_toy_model",
    "preprocess",
    "read_embeddings",
    "read_label_map",
    "train",
    "write_embeddings",
    "write_skip_report",
]
