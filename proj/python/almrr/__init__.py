"""Anomaly localization by feature reconstruction and refinement."""

from ._almrr import (
    ArgumentError,
    DataContractError,
    Error,
    FormatError,
    LossReport,
    NumericalError,
    Predictor,
    RunConfig,
    ShapeError,
    TrainResult,
    UndefinedMetricError,
    auroc,
    average_precision,
    binarize,
    evaluate,
    load_config,
    make_synth_corpus,
    perlin,
    read_image,
    synthesize,
    train,
    train_category,
)

__all__ = [
    "ArgumentError",
    "DataContractError",
    "Error",
    "FormatError",
    "LossReport",
    "NumericalError",
    "Predictor",
    "RunConfig",
    "ShapeError",
    "TrainResult",
    "UndefinedMetricError",
    "auroc",
    "average_precision",
    "binarize",
    "evaluate",
    "load_config",
    "make_synth_corpus",
    "perlin",
    "read_image",
    "synthesize",
    "train",
    "train_category",
]
