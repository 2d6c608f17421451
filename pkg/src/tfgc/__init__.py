"""Coherence-analysis toolkit for detecting generated talking-face video."""

from .config import RunConfig, load_config
from .head import DetectionOutput, joint_loss
from .media_io import Clip, LabeledPair, Waveform, load_clip, normalize, synth_pair
from .manifest import (
    ScenarioDescriptor,
    ScenarioRecord,
    derive_labels,
    enumerate_scenarios,
    split_report,
)
from .model import CoherenceDetector

__version__ = "0.1.0"

__all__ = [
    "Clip",
    "CoherenceDetector",
    "DetectionOutput",
    "LabeledPair",
    "RunConfig",
    "ScenarioDescriptor",
    "ScenarioRecord",
    "Waveform",
    "derive_labels",
    "enumerate_scenarios",
    "joint_loss",
    "load_clip",
    "load_config",
    "normalize",
    "split_report",
    "synth_pair",
    "__version__",
]
