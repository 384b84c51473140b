"""Approximate factor models with stationary-vine copula dependent factors.

The package estimates a latent factor model by principal components,
resolves the rotational indeterminacy by jointly maximizing a kernel-entropy
margin likelihood with a stationary M-vine copula likelihood over oblique
rotations, and produces Monte-Carlo distributional forecasts with VaR
backtesting.
"""

from . import dataio, dgp, factors, forecast, margins, mvine, paircop, pipeline, rotation
from .dataio import PanelData, load_csv, load_model, save_model, standardize
from .errors import (
    DataError,
    ModelFormatError,
    NumericsError,
    SingularRotationError,
    SvineFactorError,
)
from .estimator import SVineFactorModel
from .factors import FactorDecomposition, pca_factors, select_k
from .forecast import ForecastEnsemble
from .mvine import MVineModel, MVineStructure, build_structure
from .paircop import PairCopula
from .pipeline import FitOptions, FittedModel, contour_scan, eval_objective, fit
from .rotation import RotationAngles

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "FactorDecomposition",
    "FitOptions",
    "FittedModel",
    "ForecastEnsemble",
    "MVineModel",
    "MVineStructure",
    "ModelFormatError",
    "NumericsError",
    "PairCopula",
    "PanelData",
    "RotationAngles",
    "SVineFactorModel",
    "SingularRotationError",
    "SvineFactorError",
    "build_structure",
    "contour_scan",
    "dataio",
    "dgp",
    "eval_objective",
    "factors",
    "fit",
    "forecast",
    "load_csv",
    "load_model",
    "margins",
    "mvine",
    "paircop",
    "pca_factors",
    "pipeline",
    "rotation",
    "save_model",
    "select_k",
    "standardize",
]
