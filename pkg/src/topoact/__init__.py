"""Topological analysis of neural activation point clouds.

Rips persistence in degrees 0 and 1, a fixed 41-component barcode summary,
a global pipeline (subsample, summarize, prune, PCA/CCA, logistic model,
linear SHAP), a local pipeline over neuron-wise layer-pair embeddings,
and dispersion statistics for difference representations.
"""

from .errors import (CoverageError, DataError, DegenerateInputError, DomainError, FormatError, NumericalError,
                     PeakCountError, SizeError, TopoactError, UsageError)
from .features import FEATURE_NAMES, BarcodeSummary, persistent_entropy, summarize
from .ph import Barcode, DistanceMatrix, PointCloud, barcode, distance_matrix, rips_persistence, subsample

__version__ = "0.1.0"

__all__ = [
    "Barcode",
    "BarcodeSummary",
    "CoverageError",
    "DataError",
    "DegenerateInputError",
    "DistanceMatrix",
    "DomainError",
    "FEATURE_NAMES",
    "FormatError",
    "NumericalError",
    "PeakCountError",
    "PointCloud",
    "SizeError",
    "TopoactError",
    "UsageError",
    "barcode",
    "distance_matrix",
    "persistent_entropy",
    "rips_persistence",
    "subsample",
    "summarize",
]
