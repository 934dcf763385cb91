"""
fishlength - 折射感知的雙目魚長量測
FastAPI 主入口
"""
import logging
import os
from contextlib import asynccontextmanager
from typing import Any, Dict, List, Literal, Optional

from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from detections.io import frame_from_dict
from errors import FishLengthError
from geometry.calibration import load_rig
from geometry.camera import Pixel, StereoRig
from geometry.epipolar import DEFAULT_DEPTH_MIN_MM, DEFAULT_SEGMENTS, compute_epipolar_curve
from measurement.triangulation import triangulate
from pipeline.config import env_depth_max, load_config
from pipeline.runner import MeasurementPipeline

load_dotenv()

logger = logging.getLogger(__name__)

# 全域 rig，由 FISHLEN_CALIBRATION 在啟動時載入
rig: Optional[StereoRig] = None


@asynccontextmanager
async def lifespan(app: FastAPI):
    """應用程式生命週期管理"""
    global rig
    path = os.getenv("FISHLEN_CALIBRATION")
    if path:
        try:
            rig = load_rig(path)
            logger.info("✅ calibration 已載入: %s", path)
        except FishLengthError as e:
            logger.error("❌ calibration 載入失敗: %s", e)
            rig = None
    else:
        logger.warning("⚠️ 未設定 FISHLEN_CALIBRATION，量測端點將無法使用")
    yield
    rig = None
    logger.info("🛑 服務已關閉")


app = FastAPI(
    title="fishlength",
    description="折射感知的雙目魚長量測 - 偵測配對、三角化、過濾與長度估計",
    version="1.0.0",
    lifespan=lifespan,
)


# ===== Request/Response Models =====

class EpipolarRequest(BaseModel):
    u: float
    v: float
    source: Literal["left", "right"] = "left"
    depth_min_mm: float = Field(default=DEFAULT_DEPTH_MIN_MM, gt=0)
    depth_max_mm: float = Field(default_factory=env_depth_max, gt=0)
    segments: int = Field(default=DEFAULT_SEGMENTS, ge=1)


class TriangulateRequest(BaseModel):
    left: List[float] = Field(min_length=2, max_length=2)
    right: List[float] = Field(min_length=2, max_length=2)


class MeasureRequest(BaseModel):
    left: Dict[str, Any]      # 一行偵測檔的 frame 物件 (camera = left)
    right: Dict[str, Any]
    quality: bool = True
    direction: bool = True
    gate_px: Optional[float] = None
    tau_max: Optional[float] = None
    max_ray_gap_mm: Optional[float] = None


def _require_rig() -> StereoRig:
    if rig is None:
        raise HTTPException(500, "calibration 未載入 (FISHLEN_CALIBRATION)")
    return rig


# ===== Endpoints =====

@app.get("/health")
async def health():
    return {"status": "ok", "calibration": rig is not None}


@app.post("/epipolar")
def epipolar_curve(request: EpipolarRequest):
    """
    計算像素在另一台相機的 epipolar curve

    返回：vertices (u, v)、每個 vertex 的水深與 chord error
    """
    current = _require_rig()
    if request.depth_max_mm <= request.depth_min_mm:
        raise HTTPException(422, "depth_max_mm must exceed depth_min_mm")
    source, target = (
        (current.left, current.right) if request.source == "left" else (current.right, current.left)
    )
    try:
        curve = compute_epipolar_curve(
            source, target, Pixel(request.u, request.v),
            (request.depth_min_mm, request.depth_max_mm), request.segments,
        )
    except FishLengthError as e:
        raise HTTPException(422, str(e))
    return {
        "vertices": curve.vertices.tolist(),
        "depths_mm": curve.depths.tolist(),
        "chord_error_px": curve.chord_error,
    }


@app.post("/triangulate")
def triangulate_point(request: TriangulateRequest):
    """左右各一個像素 → 3D 點 (rig 座標) 與 ray gap"""
    current = _require_rig()
    try:
        point, gap = triangulate(
            current.left, current.right, Pixel(*request.left), Pixel(*request.right)
        )
    except FishLengthError as e:
        raise HTTPException(422, str(e))
    return {"point_mm": point.tolist(), "ray_gap_mm": gap}


@app.post("/measure")
def measure_frame(request: MeasureRequest):
    """
    一組左右 frame 的完整流程：配對 → 過濾 → 三角化

    不做 template refinement (請求裡沒有影像)
    """
    current = _require_rig()
    try:
        left = frame_from_dict(request.left)
        right = frame_from_dict(request.right)
        config = load_config(
            overrides={
                "toggles": {"quality": request.quality, "template": False, "direction": request.direction},
                "matching": {"gate_px": request.gate_px, "tau_max": request.tau_max},
                "measurement": {"max_ray_gap_mm": request.max_ray_gap_mm},
                "workers": 1,
            }
        )
        result = MeasurementPipeline(current, config).process(left, right)
    except (FishLengthError, ValueError) as e:
        raise HTTPException(422, str(e))

    outcomes = []
    for outcome in result.outcomes:
        m = outcome.measurement
        outcomes.append({
            "pair_id": outcome.pair.pair_id,
            "left_id": outcome.pair.left.id,
            "right_id": outcome.pair.right.id,
            "status": outcome.status,
            "cost": outcome.pair.cost.total,
            "length_mm": m.length_mm if m else None,
            "max_ray_gap_mm": m.max_ray_gap_mm if m else None,
            "axis_angle_deg": m.axis_angle_deg if m else None,
        })
    return {"frame_id": result.frame_id, "pairs": outcomes}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8081)
