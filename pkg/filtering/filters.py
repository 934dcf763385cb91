"""
Match filtering
固定順序 Quality → Aspect → Direction，記錄第一個失敗的 filter
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from detections.models import QualityClass
from geometry.camera import FlatPortCamera
from geometry.refraction import optical_axis
from matching.assignment import MatchedPair
from measurement.triangulation import FishMeasurement, axis_angle_deg

ANGLE_TOLERANCE_DEG = 1e-9


class FilterName(str, Enum):
    QUALITY = "Quality"
    ASPECT = "Aspect"
    DIRECTION = "Direction"


class FilterConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    require_quality: QualityClass = QualityClass.HIGH
    min_aspect: float = Field(default=1.5, gt=0)
    min_axis_angle_deg: float = Field(default=45.0, ge=0, le=90)
    quality_enabled: bool = True
    aspect_enabled: bool = True
    direction_enabled: bool = True

    @field_validator("require_quality", mode="before")
    @classmethod
    def _quality_label(cls, value):
        if isinstance(value, str):
            try:
                return QualityClass.from_label(value)
            except KeyError:
                raise ValueError(f"unknown quality class '{value}'")
        return value


@dataclass(frozen=True)
class FilterVerdict:
    kept: bool
    rejected_by: Optional[FilterName] = None

    def __post_init__(self):
        if self.kept == (self.rejected_by is not None):
            raise ValueError("rejected_by must be set exactly when the pair is rejected")


KEPT = FilterVerdict(True)


def filter_quality(pair: MatchedPair, cfg: FilterConfig = FilterConfig()) -> FilterVerdict:
    """兩個視角的品質都要 >= require_quality"""
    if not cfg.quality_enabled:
        return KEPT
    if pair.left.quality >= cfg.require_quality and pair.right.quality >= cfg.require_quality:
        return KEPT
    return FilterVerdict(False, FilterName.QUALITY)


def filter_aspect(pair: MatchedPair, cfg: FilterConfig = FilterConfig()) -> FilterVerdict:
    """w/h < min_aspect 的任一視角即剔除"""
    if not cfg.aspect_enabled:
        return KEPT
    if pair.left.bbox.aspect_ratio >= cfg.min_aspect and pair.right.bbox.aspect_ratio >= cfg.min_aspect:
        return KEPT
    return FilterVerdict(False, FilterName.ASPECT)


def filter_direction(
    measurement: FishMeasurement,
    camera: FlatPortCamera,
    cfg: FilterConfig = FilterConfig(),
) -> FilterVerdict:
    """
    身體軸 (caudal - mouth) 與光軸夾角 < min_axis_angle_deg 即剔除

    Raises:
        DegenerateBody: 嘴與尾鰭重合
    """
    if not cfg.direction_enabled:
        return KEPT
    angle = axis_angle_deg(measurement.body_vector, optical_axis(camera))
    if angle >= cfg.min_axis_angle_deg - ANGLE_TOLERANCE_DEG:
        return KEPT
    return FilterVerdict(False, FilterName.DIRECTION)


def filter_image_cues(pair: MatchedPair, cfg: FilterConfig = FilterConfig()) -> FilterVerdict:
    """三角化之前就能判斷的 Quality 與 Aspect"""
    verdict = filter_quality(pair, cfg)
    if verdict.kept:
        verdict = filter_aspect(pair, cfg)
    return verdict


def apply_filters(
    pair: MatchedPair,
    measurement: FishMeasurement,
    camera: FlatPortCamera,
    cfg: FilterConfig = FilterConfig(),
) -> FilterVerdict:
    verdict = filter_image_cues(pair, cfg)
    if verdict.kept:
        verdict = filter_direction(measurement, camera, cfg)
    return verdict
