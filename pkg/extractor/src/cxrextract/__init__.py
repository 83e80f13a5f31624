"""Feature extraction companion for the cxrpipe classifier.

Turns folders of chest X-ray images into the feature-matrix, labels,
and manifest files the pipeline consumes, and generates synthetic
datasets with planted signal for testing.
"""

from .errors import ExtractError, InvalidInputError
from .extract import ExtractionResult, extract_features, load_image, scan_dataset
from .fmx import write_fmx, write_labels, write_manifest
from .spec import (
    BACKBONES,
    FINE_TUNE_BATCH_SIZES,
    FINE_TUNE_LEARNING_RATES,
    ExtractionSpec,
    FineTuneSpec,
)
from .synth import SynthResult, synth_features, write_synth, write_synth_dataset

__version__ = "0.1.0"

__all__ = [
    "BACKBONES",
    "FINE_TUNE_BATCH_SIZES",
    "FINE_TUNE_LEARNING_RATES",
    "ExtractError",
    "ExtractionResult",
    "ExtractionSpec",
    "FineTuneSpec",
    "InvalidInputError",
    "SynthResult",
    "extract_features",
    "load_image",
    "scan_dataset",
    "synth_features",
    "write_fmx",
    "write_labels",
    "write_manifest",
    "write_synth",
    "write_synth_dataset",
    "__version__",
]
