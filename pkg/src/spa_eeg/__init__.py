"""Motor-imagery EEG classification by local sphere approximation.

CSP spatial features classified by fitting a small sphere to each class's
nearest neighbors and picking the class whose sphere lies closest, plus
LDA and Riemannian baselines and a reproducible evaluation harness.
"""

__version__ = "0.1.0"

from .csp import CspModel, FeatureMatrix, csp_features, fit_csp, normalized_covariance
from .errors import SpaEegError
from .evaluation import kfold_cv, method_spec, subsample_experiment
from .ingest import ContinuousRecording, EpochSet, epochs_from_events, read_epochs, read_gdf, write_epochs
from .preprocess import BandpassSpec, design_butterworth_bandpass, filtfilt, preprocess_set
from .spa import HyperparamGrid, SpaModel, Sphere, spa_fit, spa_predict, spca_fit, tune_hyperparameters

__all__ = [
    "BandpassSpec", "ContinuousRecording", "CspModel", "EpochSet", "FeatureMatrix",
    "HyperparamGrid", "SpaEegError", "SpaModel", "Sphere", "csp_features",
    "design_butterworth_bandpass", "epochs_from_events", "filtfilt", "fit_csp",
    "kfold_cv", "method_spec", "normalized_covariance", "preprocess_set", "read_epochs",
    "read_gdf", "spa_fit", "spa_predict", "spca_fit", "subsample_experiment",
    "tune_hyperparameters", "write_epochs",
]
