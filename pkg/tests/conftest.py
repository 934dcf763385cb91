"""共用 fixtures：模擬 rig 與偵測產生器"""
from typing import Dict, Optional, Sequence, Tuple

import pytest

from detections.models import (
    KEYPOINT_ORDER,
    BoundingBox,
    FishDetection,
    Keypoint,
    QualityClass,
)
from geometry.camera import Pixel
from simulation.scene import default_rig

# 預設 keypoints 相對 bbox 中心的位移 (px)：一條水平向右游的魚
DEFAULT_OFFSETS: Tuple[Tuple[float, float], ...] = (
    (-40.0, 0.0),
    (-34.0, -3.0),
    (0.0, -10.0),
    (4.0, 9.0),
    (40.0, 0.0),
)

_SCORES: Dict[QualityClass, Tuple[float, float, float]] = {
    QualityClass.LOW: (0.8, 0.1, 0.1),
    QualityClass.MEDIUM: (0.1, 0.8, 0.1),
    QualityClass.HIGH: (0.1, 0.1, 0.8),
}


def make_detection(
    det_id: str = "d0",
    center: Tuple[float, float] = (1000.0, 1000.0),
    width: float = 90.0,
    height: float = 30.0,
    offsets: Optional[Sequence[Tuple[float, float]]] = None,
    quality: QualityClass = QualityClass.HIGH,
) -> FishDetection:
    offsets = DEFAULT_OFFSETS if offsets is None else offsets
    return FishDetection(
        id=det_id,
        bbox=BoundingBox(Pixel(*center), width, height),
        keypoints={
            name: Keypoint(Pixel(center[0] + du, center[1] + dv), 1.0)
            for name, (du, dv) in zip(KEYPOINT_ORDER, offsets)
        },
        quality=quality,
        quality_scores=_SCORES[quality],
    )


@pytest.fixture
def rig():
    return default_rig()


@pytest.fixture
def detection_factory():
    return make_detection
