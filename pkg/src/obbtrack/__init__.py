"""Oriented-box multi-object tracking toolkit for multispectral aerial video.

Geometry, motion filtering, association, four motion-based trackers,
camera motion compensation, tracking metrics, data formats, a synthetic
scenario harness and a numeric reference of a spectral 3D input stem.
"""

from .geometry import OrientedBox, riou, iof, canonicalize_angle, canonicalize_box
from .frames import CLASS_NAMES, SUPERCLASS, FrameSet, Instance
from .cmc import SimilarityTransform
from .trackers import Algorithm, Detection, Tracker, TrackerConfig, run_sequence
from .metrics import evaluate

__version__ = "0.1.0"

__all__ = [
    "OrientedBox",
    "riou",
    "iof",
    "canonicalize_angle",
    "canonicalize_box",
    "CLASS_NAMES",
    "SUPERCLASS",
    "FrameSet",
    "Instance",
    "SimilarityTransform",
    "Algorithm",
    "Detection",
    "Tracker",
    "TrackerConfig",
    "run_sequence",
    "evaluate",
]
