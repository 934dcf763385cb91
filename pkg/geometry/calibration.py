"""
Rig calibration JSON
每台相機 {fx, fy, cx, cy, width, height, k1, k2, rotation, translation}，
共用 port {n_air, n_glass, n_water, d_glass_mm (每台相機), t_glass_mm, normal}
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from errors import ConfigError
from geometry.camera import CameraPose, FlatPortCamera, PinholeIntrinsics, RefractivePort, StereoRig

logger = logging.getLogger(__name__)


class CameraRecord(BaseModel):
    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    k1: float = 0.0
    k2: float = 0.0
    rotation: List[float] = Field(min_length=9, max_length=9)   # row-major
    translation: List[float] = Field(min_length=3, max_length=3)  # mm


class PortRecord(BaseModel):
    n_air: float = Field(default=1.0, ge=1.0)
    n_glass: float = Field(default=1.5, ge=1.0)
    n_water: float = Field(default=1.33, ge=1.0)
    d_glass_mm: Dict[str, float]
    t_glass_mm: float = Field(gt=0)  # 必填，沒有預設值
    normal: List[float] = Field(default=[0.0, 0.0, 1.0], min_length=3, max_length=3)


class RigRecord(BaseModel):
    left: CameraRecord
    right: CameraRecord
    port: PortRecord


def _build_camera(name: str, record: CameraRecord, port: PortRecord) -> FlatPortCamera:
    if name not in port.d_glass_mm:
        raise ConfigError(f"port.d_glass_mm has no entry for camera '{name}'")
    distortion = (record.k1, record.k2) if (record.k1 or record.k2) else None
    normal = np.asarray(port.normal, dtype=np.float64)
    intrinsics = PinholeIntrinsics(
        fx=record.fx,
        fy=record.fy,
        cx=record.cx,
        cy=record.cy,
        image_width=record.width,
        image_height=record.height,
        radial_distortion=distortion,
    )
    pose = CameraPose(
        rotation=np.asarray(record.rotation, dtype=np.float64).reshape(3, 3),
        translation=np.asarray(record.translation, dtype=np.float64),
    )
    refractive = RefractivePort(
        n_air=port.n_air,
        n_glass=port.n_glass,
        n_water=port.n_water,
        d_glass=port.d_glass_mm[name],
        t_glass=port.t_glass_mm,
        normal=normal / np.linalg.norm(normal),
    )
    return FlatPortCamera(intrinsics, pose, refractive, name=name)


def rig_from_record(record: RigRecord) -> StereoRig:
    try:
        left = _build_camera("left", record.left, record.port)
        right = _build_camera("right", record.right, record.port)
    except ValueError as e:
        raise ConfigError(f"invalid calibration: {e}") from e

    # 兩台相機看的是同一片玻璃，外側玻璃面應該重合
    gap = abs(left.outer_offset - right.outer_offset)
    if gap > 1.0:
        logger.warning("⚠️ 左右相機的玻璃面位置相差 %.3f mm，請確認 d_glass_mm", gap)
    return StereoRig(left=left, right=right)


def load_rig(path: Union[str, Path]) -> StereoRig:
    """讀取 rig calibration JSON"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"calibration file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        record = RigRecord.model_validate(data)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e
    rig = rig_from_record(record)
    logger.info("📐 已載入 rig calibration: %s", path)
    return rig


def rig_to_record(rig: StereoRig) -> RigRecord:
    """StereoRig → 可序列化的 RigRecord (模擬器寫檔用)"""
    cameras = {}
    for name, cam in (("left", rig.left), ("right", rig.right)):
        intr = cam.intrinsics
        k1, k2 = intr.radial_distortion or (0.0, 0.0)
        cameras[name] = CameraRecord(
            fx=intr.fx,
            fy=intr.fy,
            cx=intr.cx,
            cy=intr.cy,
            width=intr.image_width,
            height=intr.image_height,
            k1=k1,
            k2=k2,
            rotation=cam.pose.rotation.reshape(-1).tolist(),
            translation=cam.pose.translation.tolist(),
        )
    port = rig.left.port
    return RigRecord(
        left=cameras["left"],
        right=cameras["right"],
        port=PortRecord(
            n_air=port.n_air,
            n_glass=port.n_glass,
            n_water=port.n_water,
            d_glass_mm={"left": rig.left.port.d_glass, "right": rig.right.port.d_glass},
            t_glass_mm=port.t_glass,
            normal=port.normal.tolist(),
        ),
    )


def save_rig(rig: StereoRig, path: Union[str, Path]) -> None:
    record = rig_to_record(rig)
    Path(path).write_text(
        json.dumps(record.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
