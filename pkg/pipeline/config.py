"""
Pipeline 設定
單一 TOML / JSON 設定檔 + CLI flag 覆寫 (flag 優先)，環境變數由 .env 載入
"""
import json
import math
import os
import tomllib
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from errors import ConfigError
from filtering.filters import FilterConfig
from geometry.epipolar import DEFAULT_DEPTH_MAX_MM, DEFAULT_DEPTH_MIN_MM, DEFAULT_SEGMENTS
from matching.costs import DEFAULT_GATE_PX
from measurement.evaluation import DEFAULT_MAX_CENTER_DIST_PX
from refinement.template import RefinementConfig

load_dotenv()


def env_workers() -> int:
    return max(1, int(os.getenv("FISHLEN_WORKERS", "1")))


def env_log_level() -> str:
    return os.getenv("FISHLEN_LOG_LEVEL", "INFO").upper()


def env_depth_max() -> float:
    return float(os.getenv("FISHLEN_DEPTH_MAX_MM", str(DEFAULT_DEPTH_MAX_MM)))


class MatchingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    gate_px: float = Field(default=DEFAULT_GATE_PX, gt=0)
    tau_max: float = math.inf
    segments: int = Field(default=DEFAULT_SEGMENTS, ge=1)
    depth_min_mm: float = Field(default=DEFAULT_DEPTH_MIN_MM, gt=0)
    depth_max_mm: float = Field(default_factory=env_depth_max, gt=0)

    @model_validator(mode="after")
    def _check_depths(self):
        if self.depth_max_mm <= self.depth_min_mm:
            raise ValueError(
                f"depth_max_mm ({self.depth_max_mm}) must exceed depth_min_mm ({self.depth_min_mm})"
            )
        return self

    @property
    def depth_range(self) -> Tuple[float, float]:
        return (self.depth_min_mm, self.depth_max_mm)


class MeasurementConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_ray_gap_mm: float = Field(default=5.0, gt=0)
    max_center_dist_px: float = Field(default=DEFAULT_MAX_CENTER_DIST_PX, gt=0)


class Toggles(BaseModel):
    """Qu = quality filter, Te = template refinement, Di = aspect + direction filters"""
    model_config = ConfigDict(frozen=True)

    quality: bool = True
    template: bool = True
    direction: bool = True

    @property
    def label(self) -> str:
        parts = [name for name, on in (("Qu", self.quality), ("Te", self.template), ("Di", self.direction)) if on]
        return "+".join(parts) if parts else "none"


class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    calibration: Optional[Path] = None
    detections: Optional[Path] = None
    image_dir: Optional[Path] = None
    ground_truth: Optional[Path] = None
    output_dir: Path = Path("results")

    matching: MatchingConfig = Field(default_factory=MatchingConfig)
    refinement: RefinementConfig = Field(default_factory=RefinementConfig)
    filters: FilterConfig = Field(default_factory=FilterConfig)
    measurement: MeasurementConfig = Field(default_factory=MeasurementConfig)
    toggles: Toggles = Field(default_factory=Toggles)

    detections_distorted: bool = False
    workers: int = Field(default_factory=env_workers, ge=1)
    trace: bool = False

    def effective_filters(self) -> FilterConfig:
        """把 Qu / Di toggle 套到個別 filter 開關上"""
        return self.filters.model_copy(
            update={
                "quality_enabled": self.filters.quality_enabled and self.toggles.quality,
                "aspect_enabled": self.filters.aspect_enabled and self.toggles.direction,
                "direction_enabled": self.filters.direction_enabled and self.toggles.direction,
            }
        )

    def with_toggles(self, quality: bool, template: bool, direction: bool) -> "PipelineConfig":
        return self.model_copy(
            update={"toggles": Toggles(quality=quality, template=template, direction=direction)}
        )


def _deep_merge(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            base_value = merged.get(key)
            merged[key] = _deep_merge(base_value if isinstance(base_value, Mapping) else {}, value)
        else:
            merged[key] = value
    return merged


def _read_config_file(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix.lower() == ".toml":
            with path.open("rb") as fh:
                return tomllib.load(fh)
        if path.suffix.lower() == ".json":
            return json.loads(path.read_text(encoding="utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from e
    raise ConfigError(f"unsupported config format '{path.suffix}' (expected .toml or .json)")


def _resolve_paths(data: Dict[str, Any], base: Path) -> Dict[str, Any]:
    """設定檔中的相對路徑以設定檔所在目錄為準"""
    resolved = dict(data)
    for key in ("calibration", "detections", "image_dir", "ground_truth", "output_dir"):
        value = resolved.get(key)
        if value is not None and not Path(value).is_absolute():
            resolved[key] = str(base / value)
    return resolved


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> PipelineConfig:
    """
    讀設定檔再套用 overrides (值為 None 的 key 不覆寫)

    Raises:
        ConfigError: 檔案不存在、格式錯誤或欄位驗證失敗
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        data = _resolve_paths(_read_config_file(path), path.parent)
    data = _deep_merge(data, overrides or {})
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid pipeline config: {e}") from e


def config_to_dict(config: PipelineConfig) -> Dict[str, Any]:
    """寫回 JSON 用，無限大的 tau_max 省略"""
    data = config.model_dump(mode="json")
    if math.isinf(config.matching.tau_max):
        data["matching"].pop("tau_max", None)
    return data
