"""Tree-ensemble out-of-distribution detection."""

from .datasets import Dataset, HypercubeSpec, load_csv, minmax_scale
from .embedding import aphd, aphd_batched, embed, hamming
from .forest import ForestConfig, ForestModel, apply, fit, predict
from .metrics import EvalReport, auroc, aupr, fpr_at_tpr, report
from .persist import load, save

__version__ = "0.1.0"

__all__ = [
    "Dataset", "HypercubeSpec", "load_csv", "minmax_scale",
    "ForestConfig", "ForestModel", "fit", "apply", "predict", "save", "load",
    "embed", "hamming", "aphd", "aphd_batched",
    "EvalReport", "auroc", "aupr", "fpr_at_tpr", "report",
]
