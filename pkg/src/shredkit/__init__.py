"""shredkit: reconstruct and forecast high-dimensional spatiotemporal fields
from sparse, lagged sensor histories.

Pipeline in one breath: register fields with a ShredDataManager (sensors,
scaling, optional SVD/Fourier compression), prepare lagged datasets, fit a
ShredModel (recurrent encoder + shallow decoder), then drive reconstruction,
forecasting, and physical-space evaluation through a ShredEngine.
"""

from .data import (FourierCompression, MobileSensor, PreparedDatasets,
                   RandomSensors, SensorMeasurements, ShredDataManager,
                   SplitDataset, StationarySensor, SvdCompression,
                   build_lagged_sequences, extract_measurements)
from .engine import ShredEngine, vorticity
from .forecast import (DivergenceError, LatentSequenceForecaster,
                       RecurrentForecaster, SindyForecaster,
                       SindyLibrarySpec, SindyModel, build_library,
                       equations_text, fit_recurrent_forecaster, sindy_fit,
                       sindy_forecast, sindy_threshold, sindy_consistency)
from .linalg import (FourierTruncation, MinMaxScaler, SvdFactors,
                     fourier_reconstruct, fourier_truncate, randomized_svd,
                     ridge_solve)
from .model import (NumericalError, ShredModel, TrainConfig, TrainReport)
from .synthetic import (DoubleGyreParams, ParameterSample, double_gyre,
                        double_gyre_ensemble, sample_parameters,
                        traveling_wave)

__version__ = "0.1.0"

__all__ = [
    "FourierCompression", "MobileSensor", "PreparedDatasets", "RandomSensors",
    "SensorMeasurements", "ShredDataManager", "SplitDataset",
    "StationarySensor", "SvdCompression", "build_lagged_sequences",
    "extract_measurements", "ShredEngine", "vorticity", "DivergenceError",
    "LatentSequenceForecaster", "RecurrentForecaster", "SindyForecaster",
    "SindyLibrarySpec", "SindyModel", "build_library", "equations_text",
    "fit_recurrent_forecaster", "sindy_fit", "sindy_forecast",
    "sindy_threshold", "sindy_consistency", "FourierTruncation",
    "MinMaxScaler", "SvdFactors", "fourier_reconstruct", "fourier_truncate",
    "randomized_svd", "ridge_solve", "NumericalError", "ShredModel",
    "TrainConfig", "TrainReport", "DoubleGyreParams", "ParameterSample",
    "double_gyre", "double_gyre_ensemble", "sample_parameters",
    "traveling_wave",
]
