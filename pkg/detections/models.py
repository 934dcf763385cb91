"""
魚隻偵測資料模型
bbox 以 center + size 儲存，五個具名 keypoints，三級品質
"""
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from geometry.camera import Pixel

QUALITY_SUM_TOLERANCE = 1e-6


class KeypointName(str, Enum):
    """固定順序：mouth, eye, dorsal fin, ventral fin, caudal fin"""
    MOUTH = "mouth"
    EYE = "eye"
    DORSAL_FIN = "dorsal_fin"
    VENTRAL_FIN = "ventral_fin"
    CAUDAL_FIN = "caudal_fin"


KEYPOINT_ORDER: Tuple[KeypointName, ...] = tuple(KeypointName)


class QualityClass(IntEnum):
    """數值越大品質越好，可直接比較"""
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "QualityClass":
        return cls[label.upper()]


class CameraSide(str, Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class BoundingBox:
    center: Pixel
    width: float
    height: float

    @property
    def aspect_ratio(self) -> float:
        """width / height"""
        return self.width / self.height


@dataclass(frozen=True)
class Keypoint:
    position: Pixel
    confidence: float = 1.0


@dataclass(frozen=True)
class FishDetection:
    """單一魚隻的偵測結果 (標註或模型預測)"""
    id: str
    bbox: BoundingBox
    keypoints: Dict[KeypointName, Keypoint]
    quality: QualityClass
    quality_scores: Tuple[float, float, float]

    def keypoint(self, name: KeypointName) -> Pixel:
        return self.keypoints[name].position

    def keypoint_array(self) -> NDArray[np.float64]:
        """(5, 2)，依 KEYPOINT_ORDER 排列"""
        return np.array([self.keypoints[name].position for name in KEYPOINT_ORDER], dtype=np.float64)

    def with_keypoints(self, positions: Dict[KeypointName, Pixel]) -> "FishDetection":
        keypoints = dict(self.keypoints)
        for name, position in positions.items():
            keypoints[name] = Keypoint(position, keypoints[name].confidence)
        return replace(self, keypoints=keypoints)

    def invariant_violations(self) -> List[str]:
        """回傳所有違反的不變量描述，空 list 代表合法"""
        problems = []
        if not (self.bbox.width > 0 and self.bbox.height > 0):
            problems.append(f"bbox size must be positive (w={self.bbox.width}, h={self.bbox.height})")
        for name in KEYPOINT_ORDER:
            if name not in self.keypoints:
                problems.append(f"missing keypoint '{name.value}'")
        for name, kp in self.keypoints.items():
            if not 0.0 <= kp.confidence <= 1.0:
                problems.append(f"keypoint '{name.value}' confidence {kp.confidence} outside [0, 1]")
        if len(self.quality_scores) != 3:
            problems.append("quality_scores must have exactly three entries")
        else:
            if abs(sum(self.quality_scores) - 1.0) > QUALITY_SUM_TOLERANCE:
                problems.append(f"quality_scores sum to {sum(self.quality_scores)}, expected 1")
            argmax = QualityClass(int(np.argmax(self.quality_scores)))
            if argmax != self.quality:
                problems.append(
                    f"quality '{self.quality.label}' is not the argmax of quality_scores ('{argmax.label}')"
                )
        return problems


@dataclass(frozen=True)
class DetectionFrame:
    frame_id: int
    camera: CameraSide
    detections: List[FishDetection] = field(default_factory=list)
    image_path: Optional[str] = None

    def by_id(self) -> Dict[str, FishDetection]:
        return {det.id: det for det in self.detections}
