"""detections package"""
from detections.models import (
    KEYPOINT_ORDER,
    BoundingBox,
    CameraSide,
    DetectionFrame,
    FishDetection,
    Keypoint,
    KeypointName,
    QualityClass,
)
from detections.io import read_detection_file, write_detection_file

__all__ = [
    "KEYPOINT_ORDER", "BoundingBox", "CameraSide", "DetectionFrame",
    "FishDetection", "Keypoint", "KeypointName", "QualityClass",
    "read_detection_file", "write_detection_file",
]
