"""Variance-based genetic ensemble of Bayesian recurrent networks for
telemetry anomaly detection."""

from .bayes import PredictiveDistribution, mc_predict
from .dataset import ChannelData, SignalScaler, load_channel, make_windows
from .detect import DetectionResult, DetectorConfig, detect, flag, score, tune_tau
from .ensemble import EnsembleOutput, combine, combine_distributions
from .estimators import BayesianRNNRegressor, VGEAnomalyDetector
from .evaluation import Confusion, MetricSet, aggregate, confusion, metrics
from .ga import GaConfig, Genome, evolve
from .npy_io import parse_labels_csv, parse_npy, write_npy
from .pipeline import PipelineConfig, run_pipeline
from .preprocess import AdaptiveWindowSmoother, SmoothConfig, smooth
from .synthetic import make_synthetic

__version__ = "0.1.0"

__all__ = [
    "AdaptiveWindowSmoother", "BayesianRNNRegressor", "ChannelData", "Confusion",
    "DetectionResult", "DetectorConfig", "EnsembleOutput", "GaConfig", "Genome",
    "MetricSet", "PipelineConfig", "PredictiveDistribution", "SignalScaler",
    "SmoothConfig", "VGEAnomalyDetector", "aggregate", "combine", "combine_distributions",
    "confusion", "detect", "evolve", "flag", "load_channel", "make_synthetic",
    "make_windows", "mc_predict", "metrics", "parse_labels_csv", "parse_npy",
    "run_pipeline", "score", "smooth", "tune_tau", "write_npy",
]
