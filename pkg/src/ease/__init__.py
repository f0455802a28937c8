"""Semi-supervised least-squares estimation: SNP imputation, EASE and inference."""
from ._backend import NAME as BACKEND
from .data import SemiSupervisedDataset, load_dataset, partition_folds
from .dimred import DimredPolicy, SliceScheme
from .estimators import combine_ease, fit_np, fit_ols, fit_snp
from .inference import confidence_report, estimate_delta, estimate_influences, fit_ease
from .kernels import KernelSpec
from .smoothing import SmootherPolicy

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DimredPolicy",
    "KernelSpec",
    "SemiSupervisedDataset",
    "SliceScheme",
    "SmootherPolicy",
    "combine_ease",
    "confidence_report",
    "estimate_delta",
    "estimate_influences",
    "fit_ease",
    "fit_np",
    "fit_ols",
    "fit_snp",
    "load_dataset",
    "partition_folds",
    "__version__",
]
