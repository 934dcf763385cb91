"""
偵測檔讀寫 (JSON-lines，一行一個 frame)

每行格式：
{"camera": "left", "detections": [...], "frame_id": 0, "image_path": null, "schema_version": 1}

detection：
{"bbox": {"cx": .., "cy": .., "w": .., "h": ..}, "id": "..",
 "keypoints": {"mouth": {"u": .., "v": .., "confidence": ..}, ...},
 "quality": "high", "quality_scores": [low, medium, high]}

quality_scores 必須已經 normalize (總和 = 1)，轉檔工具負責 softmax。
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

from pydantic import BaseModel, Field, ValidationError

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
from errors import DetectionValidationError, ParseError, UnknownSchemaVersion
from geometry.camera import Pixel

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_DECIMALS = 6


# ===== 檔案 schema =====

class BoxRecord(BaseModel):
    cx: float
    cy: float
    w: float
    h: float


class KeypointRecord(BaseModel):
    u: float
    v: float
    confidence: float = 1.0


class DetectionRecord(BaseModel):
    id: str
    bbox: BoxRecord
    keypoints: Dict[str, KeypointRecord]
    quality: str
    quality_scores: List[float] = Field(min_length=3, max_length=3)


class FrameRecord(BaseModel):
    schema_version: int
    frame_id: int
    camera: CameraSide
    image_path: Optional[str] = None
    detections: List[DetectionRecord] = Field(default_factory=list)


# ===== record ↔ domain =====

def detection_from_record(record: DetectionRecord, frame_id: Optional[int] = None) -> FishDetection:
    keypoints = {}
    for label, kp in record.keypoints.items():
        try:
            name = KeypointName(label)
        except ValueError:
            raise DetectionValidationError(f"unknown keypoint '{label}'", frame_id, record.id)
        keypoints[name] = Keypoint(Pixel(kp.u, kp.v), kp.confidence)

    try:
        quality = QualityClass.from_label(record.quality)
    except KeyError:
        raise DetectionValidationError(f"unknown quality class '{record.quality}'", frame_id, record.id)

    detection = FishDetection(
        id=record.id,
        bbox=BoundingBox(Pixel(record.bbox.cx, record.bbox.cy), record.bbox.w, record.bbox.h),
        keypoints=keypoints,
        quality=quality,
        quality_scores=tuple(record.quality_scores),
    )
    problems = detection.invariant_violations()
    if problems:
        raise DetectionValidationError("; ".join(problems), frame_id, record.id)
    return detection


def _round(value: float) -> float:
    return round(float(value), FLOAT_DECIMALS)


def detection_to_dict(detection: FishDetection) -> dict:
    return {
        "id": detection.id,
        "bbox": {
            "cx": _round(detection.bbox.center[0]),
            "cy": _round(detection.bbox.center[1]),
            "w": _round(detection.bbox.width),
            "h": _round(detection.bbox.height),
        },
        "keypoints": {
            name.value: {
                "u": _round(detection.keypoints[name].position[0]),
                "v": _round(detection.keypoints[name].position[1]),
                "confidence": _round(detection.keypoints[name].confidence),
            }
            for name in KEYPOINT_ORDER
        },
        "quality": detection.quality.label,
        "quality_scores": [_round(s) for s in detection.quality_scores],
    }


def frame_to_dict(frame: DetectionFrame) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "frame_id": frame.frame_id,
        "camera": frame.camera.value,
        "image_path": frame.image_path,
        "detections": [detection_to_dict(d) for d in frame.detections],
    }


def frame_from_dict(data: dict, line: Optional[int] = None) -> DetectionFrame:
    version = data.get("schema_version") if isinstance(data, dict) else None
    if version != SCHEMA_VERSION:
        raise UnknownSchemaVersion(
            f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})",
            line=line,
            field="schema_version",
        )
    try:
        record = FrameRecord.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise ParseError(first["msg"], line=line, field=field) from e

    detections = [detection_from_record(d, record.frame_id) for d in record.detections]
    seen = set()
    for det in detections:
        if det.id in seen:
            raise DetectionValidationError("duplicate detection id", record.frame_id, det.id)
        seen.add(det.id)

    return DetectionFrame(
        frame_id=record.frame_id,
        camera=record.camera,
        detections=detections,
        image_path=record.image_path,
    )


# ===== 檔案 =====

def read_detection_file(path: Union[str, Path]) -> List[DetectionFrame]:
    """讀取 JSON-lines 偵測檔並驗證所有不變量"""
    path = Path(path)
    frames = []
    with path.open("r", encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}: invalid JSON ({e.msg})", line=number) from e
            frames.append(frame_from_dict(data, line=number))
    logger.debug("已讀取 %s: %d frames", path, len(frames))
    return frames


def dumps_frame(frame: DetectionFrame) -> str:
    """canonical 序列化：sorted keys、固定 6 位小數，方便 diff"""
    return json.dumps(frame_to_dict(frame), sort_keys=True, separators=(",", ":"))


def write_detection_file(frames: Iterable[DetectionFrame], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for frame in frames:
            handle.write(dumps_frame(frame) + "\n")
