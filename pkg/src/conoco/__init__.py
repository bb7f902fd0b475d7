"""Remote watermark detection for stochastic robot policies.

The owner injects band-limited colored noise into a Gaussian policy's
exploration; an auditor holding the key detects it from remote observations
by spectral coherency, without knowing the exact policy rate or the robot's
dynamics.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .detect import DetectionConfig, DetectionReport, detect, detect_with_offset
from .errors import (BandEdgeError, ConfigurationError, ConocoError, DataFormatError,
                     EmptyBandError, InsufficientDataError, ReplicationError)
from .watermark import (ExplorationScaleSchedule, PolicyRateBounds, SecretKey,
                        WatermarkSequence, generate_watermark, inject_action)

__all__ = [
    "__version__",
    "SecretKey",
    "PolicyRateBounds",
    "WatermarkSequence",
    "ExplorationScaleSchedule",
    "generate_watermark",
    "inject_action",
    "DetectionConfig",
    "DetectionReport",
    "detect",
    "detect_with_offset",
    "ConocoError",
    "BandEdgeError",
    "EmptyBandError",
    "InsufficientDataError",
    "ConfigurationError",
    "DataFormatError",
    "ReplicationError",
]
