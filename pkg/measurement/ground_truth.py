"""
Ground truth JSON (模擬器輸出)
每個 frame 的每條魚：3D keypoints、長度、左右偵測 id 與無雜訊 bbox 中心
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from detections.models import KEYPOINT_ORDER, KeypointName, QualityClass
from errors import ConfigError, ParseError
from geometry.camera import Pixel, Vec3

FLOAT_DECIMALS = 9


@dataclass(frozen=True)
class GroundTruthFish:
    fish_id: str
    left_detection_id: str
    right_detection_id: str
    left_center: Pixel
    right_center: Pixel
    length_mm: float
    keypoints_3d: Dict[KeypointName, Vec3] = field(default_factory=dict)
    quality_truth: QualityClass = QualityClass.HIGH


@dataclass(frozen=True)
class GroundTruthFrame:
    frame_id: int
    fish: List[GroundTruthFish] = field(default_factory=list)

    def by_id(self) -> Dict[str, GroundTruthFish]:
        return {f.fish_id: f for f in self.fish}


# ===== 檔案 schema =====

class GroundTruthFishRecord(BaseModel):
    fish_id: str
    left_detection_id: str
    right_detection_id: str
    left_center: Tuple[float, float]
    right_center: Tuple[float, float]
    length_mm: float = Field(gt=0)
    keypoints_3d: Dict[KeypointName, Tuple[float, float, float]] = Field(default_factory=dict)
    quality_truth: str = "high"


class GroundTruthFrameRecord(BaseModel):
    frame_id: int
    fish: List[GroundTruthFishRecord] = Field(default_factory=list)


class GroundTruthRecord(BaseModel):
    frames: List[GroundTruthFrameRecord]


# ===== record ↔ domain =====

def _fish_to_record(fish: GroundTruthFish) -> GroundTruthFishRecord:
    def r(value: float) -> float:
        return round(float(value), FLOAT_DECIMALS)

    return GroundTruthFishRecord(
        fish_id=fish.fish_id,
        left_detection_id=fish.left_detection_id,
        right_detection_id=fish.right_detection_id,
        left_center=(r(fish.left_center[0]), r(fish.left_center[1])),
        right_center=(r(fish.right_center[0]), r(fish.right_center[1])),
        length_mm=r(fish.length_mm),
        keypoints_3d={
            name: tuple(r(c) for c in fish.keypoints_3d[name])
            for name in KEYPOINT_ORDER
            if name in fish.keypoints_3d
        },
        quality_truth=fish.quality_truth.label,
    )


def _fish_from_record(record: GroundTruthFishRecord) -> GroundTruthFish:
    try:
        quality = QualityClass.from_label(record.quality_truth)
    except KeyError:
        raise ParseError(f"unknown quality class '{record.quality_truth}'", field="quality_truth")
    return GroundTruthFish(
        fish_id=record.fish_id,
        left_detection_id=record.left_detection_id,
        right_detection_id=record.right_detection_id,
        left_center=Pixel(*record.left_center),
        right_center=Pixel(*record.right_center),
        length_mm=record.length_mm,
        keypoints_3d={
            name: np.asarray(xyz, dtype=np.float64) for name, xyz in record.keypoints_3d.items()
        },
        quality_truth=quality,
    )


def write_ground_truth(frames: List[GroundTruthFrame], path: Union[str, Path]) -> None:
    record = GroundTruthRecord(
        frames=[
            GroundTruthFrameRecord(frame_id=f.frame_id, fish=[_fish_to_record(fish) for fish in f.fish])
            for f in frames
        ]
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = record.model_dump(mode="json")
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_ground_truth(path: Union[str, Path]) -> List[GroundTruthFrame]:
    """
    讀取模擬器輸出的 ground truth

    Raises:
        ConfigError: 檔案不存在
        ParseError: JSON 語法錯誤或欄位不符 schema (field 為出錯的欄位路徑)
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"ground-truth file not found: {path}")
    try:
        record = GroundTruthRecord.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e.msg})", line=e.lineno) from e
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ParseError(f"{path}: {first['msg']}", field=location) from e
    return [
        GroundTruthFrame(frame_id=frame.frame_id, fish=[_fish_from_record(fish) for fish in frame.fish])
        for frame in record.frames
    ]
