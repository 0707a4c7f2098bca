"""Micro-expression spotting in long videos.

Two spotters share one evaluation protocol: LTP-ML (temporal PCA patterns of
facial ROIs, a linear SVM and a local-to-global fusion) and the LBP-chi2
feature-difference baseline.
"""

from .dataio import (
    DatasetConfig,
    FrameSequence,
    GroundTruthInterval,
    LandmarkTrack,
    dataset_config,
)
from .fusion import SpottedInterval
from .lbpchi2 import LbpChi2Spotter
from .ltp import LtpTransformer, extract_ltp_features
from .metrics import database_metrics, evaluate, interval_iou, match_intervals
from .pipeline import LtpMlSpotter

__version__ = "0.1.0"

__all__ = [
    "DatasetConfig",
    "FrameSequence",
    "GroundTruthInterval",
    "LandmarkTrack",
    "LbpChi2Spotter",
    "LtpMlSpotter",
    "LtpTransformer",
    "SpottedInterval",
    "database_metrics",
    "dataset_config",
    "evaluate",
    "extract_ltp_features",
    "interval_iou",
    "match_intervals",
]
