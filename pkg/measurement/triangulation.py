"""
折射感知的三角化與魚長量測
兩條水中射線最短連線的中點 = 3D 點，連線長度 = ray gap
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from detections.models import KEYPOINT_ORDER, KeypointName
from errors import DegenerateBody, NearParallelRays
from geometry.camera import FlatPortCamera, Pixel, StereoRig, Vec3
from geometry.refraction import optical_axis, trace_pixel_ray
from matching.assignment import MatchedPair

logger = logging.getLogger(__name__)

PARALLEL_TOLERANCE = 1e-12
MIN_BODY_LENGTH_MM = 1e-6


@dataclass(frozen=True)
class FishMeasurement:
    """單一配對的 3D 量測結果"""
    pair_id: str
    keypoints_3d: Dict[KeypointName, Vec3]
    length_mm: float
    ray_gap_mm: Dict[KeypointName, float]
    axis_angle_deg: float
    frame_id: Optional[int] = None
    left_id: str = ""
    right_id: str = ""

    @property
    def max_ray_gap_mm(self) -> float:
        return max(self.ray_gap_mm.values())

    @property
    def body_vector(self) -> Vec3:
        return self.keypoints_3d[KeypointName.CAUDAL_FIN] - self.keypoints_3d[KeypointName.MOUTH]


def axis_angle_deg(body: Vec3, axis: Vec3) -> float:
    """
    身體向量與光軸的夾角，以絕對值折到 [0°, 90°]

    等同 arccos(|v·a| / |v|)，但用 atan2 在 0° 與 90° 附近較精確

    Raises:
        DegenerateBody: |v| < 1e-6 mm
    """
    body = np.asarray(body, dtype=np.float64)
    axis = np.asarray(axis, dtype=np.float64)
    if np.linalg.norm(body) < MIN_BODY_LENGTH_MM:
        raise DegenerateBody(f"mouth and caudal fin coincide (|v|={np.linalg.norm(body):.3e} mm)")
    axis = axis / np.linalg.norm(axis)
    along = abs(float(body @ axis))
    across = float(np.linalg.norm(np.cross(body, axis)))
    return math.degrees(math.atan2(across, along))


def triangulate(
    left_cam: FlatPortCamera,
    right_cam: FlatPortCamera,
    left_px: Pixel,
    right_px: Pixel,
) -> Tuple[Vec3, float]:
    """
    Midpoint triangulation

    Returns:
        (3D 點, ray gap mm)

    Raises:
        NearParallelRays: 射線方向外積長度 < 1e-12
    """
    left_ray = trace_pixel_ray(left_cam, left_px)
    right_ray = trace_pixel_ray(right_cam, right_px)
    o1, d1 = left_ray.origin, left_ray.direction
    o2, d2 = right_ray.origin, right_ray.direction

    if np.linalg.norm(np.cross(d1, d2)) < PARALLEL_TOLERANCE:
        raise NearParallelRays(f"rays through {tuple(left_px)} and {tuple(right_px)} are parallel")

    w0 = o1 - o2
    b = float(d1 @ d2)
    d = float(d1 @ w0)
    e = float(d2 @ w0)
    denom = 1.0 - b * b
    s = (b * e - d) / denom
    t = (e - b * d) / denom

    p1 = o1 + s * d1
    p2 = o2 + t * d2
    return 0.5 * (p1 + p2), float(np.linalg.norm(p1 - p2))


def measure_pair(
    pair: MatchedPair,
    rig: StereoRig,
    frame_id: Optional[int] = None,
) -> FishMeasurement:
    """三角化全部五個 keypoints，計算嘴到尾鰭的長度與身體相對光軸的角度"""
    points: Dict[KeypointName, Vec3] = {}
    gaps: Dict[KeypointName, float] = {}
    for name in KEYPOINT_ORDER:
        points[name], gaps[name] = triangulate(
            rig.left, rig.right, pair.left.keypoint(name), pair.right_keypoint(name)
        )

    body = points[KeypointName.CAUDAL_FIN] - points[KeypointName.MOUTH]
    angle = axis_angle_deg(body, optical_axis(rig.left))
    return FishMeasurement(
        pair_id=pair.pair_id,
        keypoints_3d=points,
        length_mm=float(np.linalg.norm(body)),
        ray_gap_mm=gaps,
        axis_angle_deg=angle,
        frame_id=frame_id,
        left_id=pair.left.id,
        right_id=pair.right.id,
    )
