"""Active-learning bootstrapping benchmark with five selection strategies."""

from .data import (
    LabeledPool,
    LabelOracle,
    RawDataset,
    UnlabeledPool,
    load_dataset,
    normalize,
    stratified_seed,
)
from .explain import (
    PatchGrid,
    PatchSurrogateExplainer,
    kld,
    mean_divergence,
    mean_divergence_matrix,
    sample_neighborhood,
    to_distribution,
)
from .harness import (
    ALConfig,
    RunRecord,
    RunReport,
    evaluate_accuracy,
    load_checkpoint,
    run_experiment,
    save_checkpoint,
)
from .net import (
    Architecture,
    SoftmaxNetClassifier,
    TrainConfig,
    load_model_blob,
    margin_score,
    save_model_blob,
    softmax,
    train_params,
    uncertainty_score,
)
from .output import export_curves, read_ppm, render_heatmap
from .strategies import (
    STRATEGIES,
    SelectionContext,
    SelectionResult,
    kmeans,
    select_alex,
    select_density_weighted,
    select_margin,
    select_random,
    select_uncertainty,
)

__version__ = "0.1.0"

__all__ = [
    "ALConfig",
    "Architecture",
    "LabelOracle",
    "LabeledPool",
    "PatchGrid",
    "PatchSurrogateExplainer",
    "RawDataset",
    "RunRecord",
    "RunReport",
    "STRATEGIES",
    "SelectionContext",
    "SelectionResult",
    "SoftmaxNetClassifier",
    "TrainConfig",
    "UnlabeledPool",
    "evaluate_accuracy",
    "export_curves",
    "kld",
    "kmeans",
    "load_checkpoint",
    "load_dataset",
    "load_model_blob",
    "margin_score",
    "mean_divergence",
    "mean_divergence_matrix",
    "normalize",
    "read_ppm",
    "render_heatmap",
    "run_experiment",
    "sample_neighborhood",
    "save_checkpoint",
    "save_model_blob",
    "select_alex",
    "select_density_weighted",
    "select_margin",
    "select_random",
    "select_uncertainty",
    "softmax",
    "stratified_seed",
    "to_distribution",
    "train_params",
    "uncertainty_score",
]
