"""
合成場景產生器
在水族箱內擺放平面魚體，經折射模型投影到左右相機，加上可設定的雜訊
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

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
from errors import GeometryError, ProjectionFailure
from geometry.camera import (
    CameraPose,
    FlatPortCamera,
    PinholeIntrinsics,
    Pixel,
    RefractivePort,
    StereoRig,
    Vec3,
)
from geometry.epipolar import (
    DEFAULT_DEPTH_MAX_MM,
    DEFAULT_DEPTH_MIN_MM,
    DEFAULT_SEGMENTS,
    EpipolarCurve,
    EpipolarCurveProvider,
    distances_to_curve,
)
from geometry.refraction import forward_project_many
from matching.assignment import AssignmentConfig, cost_matrix, greedy_select
from matching.costs import DEFAULT_GATE_PX
from measurement.ground_truth import GroundTruthFish, GroundTruthFrame

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 500
BBOX_MARGIN_PX = 8.0
VISIBILITY_MARGIN_PX = 16.0
LENGTH_RANGE_MM = (40.0, 80.0)

# 魚體側面 (x 沿身體、y 背腹方向)，單位為體長比例，mouth 在原點
BODY_LAYOUT: Dict[KeypointName, Tuple[float, float]] = {
    KeypointName.MOUTH: (0.0, 0.0),
    KeypointName.EYE: (0.08, 0.03),
    KeypointName.DORSAL_FIN: (0.45, 0.12),
    KeypointName.VENTRAL_FIN: (0.5, -0.1),
    KeypointName.CAUDAL_FIN: (1.0, 0.0),
}
BODY_HALF_HEIGHT = 0.15

_SCORES = {
    QualityClass.LOW: (0.8, 0.1, 0.1),
    QualityClass.MEDIUM: (0.1, 0.8, 0.1),
    QualityClass.HIGH: (0.1, 0.1, 0.8),
}


@dataclass(frozen=True)
class TankBox:
    """水族箱可用空間 (rig frame, mm)"""
    lower: Tuple[float, float, float] = (-30.0, -50.0, 220.0)
    upper: Tuple[float, float, float] = (90.0, 50.0, 480.0)

    def __post_init__(self):
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"empty tank box {self.lower} .. {self.upper}")

    def contains(self, points: NDArray[np.float64]) -> bool:
        points = np.atleast_2d(points)
        return bool(np.all(points >= np.asarray(self.lower)) and np.all(points <= np.asarray(self.upper)))


@dataclass(frozen=True)
class CorruptionModel:
    keypoint_noise_sigma_px: float = 0.0
    bbox_noise_sigma_px: float = 0.0
    low_quality_fraction: float = 0.0
    low_quality_noise_multiplier: float = 1.0
    quality_flip_fraction: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.keypoint_noise_sigma_px < 0 or self.bbox_noise_sigma_px < 0:
            raise ValueError("noise sigmas must be non-negative")
        for name in ("low_quality_fraction", "quality_flip_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.low_quality_noise_multiplier < 1.0:
            raise ValueError("low_quality_noise_multiplier must be >= 1")


@dataclass(frozen=True)
class SyntheticFish:
    fish_id: str
    length_mm: float
    rotation: NDArray[np.float64]       # body frame → tank frame
    position: Vec3                       # 身體中點
    quality_truth: QualityClass = QualityClass.HIGH

    def canonical_keypoints(self) -> Dict[KeypointName, Vec3]:
        return {
            name: np.array([bx * self.length_mm, by * self.length_mm, 0.0])
            for name, (bx, by) in BODY_LAYOUT.items()
        }

    @property
    def keypoints_3d(self) -> Dict[KeypointName, Vec3]:
        mid = np.array([0.5 * self.length_mm, 0.0, 0.0])
        return {
            name: self.rotation @ (p - mid) + self.position
            for name, p in self.canonical_keypoints().items()
        }

    def keypoint_array(self) -> NDArray[np.float64]:
        points = self.keypoints_3d
        return np.array([points[name] for name in KEYPOINT_ORDER])

    def to_body(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """tank frame → body frame (mouth 為原點)"""
        return (points - self.position) @ self.rotation + np.array([0.5 * self.length_mm, 0.0, 0.0])


@dataclass
class Scene:
    left: DetectionFrame
    right: DetectionFrame
    truth: GroundTruthFrame
    fish: List[SyntheticFish] = field(default_factory=list)


def _rotation(yaw: float, pitch: float, roll: float) -> NDArray[np.float64]:
    """Ry(yaw) · Rz(pitch) · Rx(roll)，body x 軸 = 游動方向"""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rz = np.array([[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return ry @ rz @ rx


def default_rig(
    baseline_mm: float = 60.0,
    port_tilt_deg: float = 0.0,
    n_air: float = 1.0,
    n_glass: float = 1.5,
    n_water: float = 1.33,
) -> StereoRig:
    """
    模擬用的雙相機：2448x2048 感測器，左右相機平行、基線沿 x 軸，
    相機中心距玻璃 40 mm，玻璃厚 8 mm
    """
    intrinsics = PinholeIntrinsics(
        fx=2500.0, fy=2500.0, cx=1224.0, cy=1024.0, image_width=2448, image_height=2048
    )
    tilt = math.radians(port_tilt_deg)
    normal = np.array([math.sin(tilt), 0.0, math.cos(tilt)])

    def port() -> RefractivePort:
        return RefractivePort(
            n_air=n_air, n_glass=n_glass, n_water=n_water, d_glass=40.0, t_glass=8.0, normal=normal
        )

    left = FlatPortCamera(intrinsics, CameraPose(), port(), name="left")
    right = FlatPortCamera(
        intrinsics,
        CameraPose(np.eye(3), np.array([-baseline_mm, 0.0, 0.0])),
        port(),
        name="right",
    )
    return StereoRig(left=left, right=right)


def _sample_fish(
    rng: np.random.Generator,
    fish_id: str,
    tank: TankBox,
    length_range: Tuple[float, float],
) -> SyntheticFish:
    length = float(rng.uniform(*length_range))
    rotation = _rotation(
        yaw=float(rng.uniform(0.0, 2.0 * math.pi)),
        pitch=float(rng.uniform(-math.radians(20.0), math.radians(20.0))),
        roll=float(rng.uniform(-math.radians(20.0), math.radians(20.0))),
    )
    position = rng.uniform(np.asarray(tank.lower), np.asarray(tank.upper))
    return SyntheticFish(fish_id, length, rotation, position)


def _project(rig: StereoRig, fish: SyntheticFish) -> Optional[Tuple[NDArray, NDArray]]:
    points = fish.keypoint_array()
    try:
        left = forward_project_many(rig.left, points)
        right = forward_project_many(rig.right, points)
    except GeometryError:
        return None
    return left, right


def _tight_box(pixels: NDArray[np.float64]) -> Tuple[Pixel, float, float]:
    lo = pixels.min(axis=0) - BBOX_MARGIN_PX
    hi = pixels.max(axis=0) + BBOX_MARGIN_PX
    center = Pixel(float(0.5 * (lo[0] + hi[0])), float(0.5 * (lo[1] + hi[1])))
    return center, float(hi[0] - lo[0]), float(hi[1] - lo[1])


def _visible(camera: FlatPortCamera, pixels: NDArray[np.float64]) -> bool:
    center, w, h = _tight_box(pixels)
    corners = [
        Pixel(center[0] - w / 2, center[1] - h / 2),
        Pixel(center[0] + w / 2, center[1] + h / 2),
    ]
    return all(camera.intrinsics.contains(c, VISIBILITY_MARGIN_PX) for c in corners)


class _SeparationGuard:
    """
    每條魚自己的右中心離自己的 epipolar curve 最近，其他魚的右中心至少再遠
    min_separation_px；並且在無雜訊偵測上，greedy assignment 必須剛好選出
    每條魚自己的左右配對
    """

    def __init__(self, provider: EpipolarCurveProvider, min_separation_px: float, gate_px: float):
        self.provider = provider
        self.min_separation_px = min_separation_px
        self.gate_px = gate_px
        self.curves: List[EpipolarCurve] = []
        self.own: List[float] = []
        self.lefts: List[FishDetection] = []
        self.rights: List[FishDetection] = []
        self._known: Dict[Tuple[float, float], EpipolarCurve] = {}

    def _curve(self, pixel: Pixel) -> EpipolarCurve:
        key = (float(pixel[0]), float(pixel[1]))
        if key not in self._known:
            self._known[key] = self.provider(pixel)
        return self._known[key]

    def _separated(self, curve: EpipolarCurve, own: float, right_center: Pixel) -> bool:
        if not self.rights:
            return True
        placed = distances_to_curve(curve, [d.bbox.center for d in self.rights])
        if np.any(placed < own + self.min_separation_px):
            return False
        for placed_curve, placed_own in zip(self.curves, self.own):
            d = float(distances_to_curve(placed_curve, [right_center])[0])
            if d < placed_own + self.min_separation_px:
                return False
        return True

    def _greedy_keeps_truth(self, left: FishDetection, right: FishDetection) -> bool:
        lefts, rights = self.lefts + [left], self.rights + [right]
        costs = cost_matrix(lefts, rights, AssignmentConfig(self._curve, gate_px=self.gate_px))
        totals = np.array([[c.total for c in row] for row in costs], dtype=np.float64)
        ids = [str(k) for k in range(len(lefts))]
        return sorted(greedy_select(totals, ids, ids)) == [(k, k) for k in range(len(lefts))]

    def accepts(self, left: FishDetection, right: FishDetection) -> bool:
        if self.min_separation_px <= 0:
            return True
        curve = self._curve(left.bbox.center)
        own = float(distances_to_curve(curve, [right.bbox.center])[0])
        if not self._separated(curve, own, right.bbox.center):
            return False
        if not self._greedy_keeps_truth(left, right):
            return False
        self.curves.append(curve)
        self.own.append(own)
        self.lefts.append(left)
        self.rights.append(right)
        return True


def _clean_detection(
    det_id: str,
    keypoints: NDArray[np.float64],
    box: Tuple[Pixel, float, float],
    quality: QualityClass,
) -> FishDetection:
    center, w, h = box
    return FishDetection(
        id=det_id,
        bbox=BoundingBox(Pixel(float(center[0]), float(center[1])), w, h),
        keypoints={
            name: Keypoint(Pixel(float(u), float(v)), 1.0)
            for name, (u, v) in zip(KEYPOINT_ORDER, keypoints)
        },
        quality=quality,
        quality_scores=_SCORES[quality],
    )


def _detection(
    det_id: str,
    keypoints: NDArray[np.float64],
    box: Tuple[Pixel, float, float],
    quality: QualityClass,
    noise: np.random.Generator,
    keypoint_sigma: float,
    bbox_sigma: float,
) -> FishDetection:
    """無雜訊投影 + 高斯雜訊，雜訊一律抽樣以固定 RNG 消耗順序"""
    kp_noise = noise.normal(0.0, 1.0, size=keypoints.shape) * keypoint_sigma
    box_noise = noise.normal(0.0, 1.0, size=4) * bbox_sigma
    center, w, h = box
    noisy_box = (
        Pixel(center[0] + box_noise[0], center[1] + box_noise[1]),
        max(1.0, float(w + box_noise[2])),
        max(1.0, float(h + box_noise[3])),
    )
    return _clean_detection(det_id, keypoints + kp_noise, noisy_box, quality)


def generate_scene(
    n_fish: int,
    rig: StereoRig,
    corruption: CorruptionModel = CorruptionModel(),
    seed: int = 0,
    frame_id: int = 0,
    tank: TankBox = TankBox(),
    min_curve_separation_px: float = 3.0,
    depth_range: Tuple[float, float] = (DEFAULT_DEPTH_MIN_MM, DEFAULT_DEPTH_MAX_MM),
    segments: int = DEFAULT_SEGMENTS,
    length_range: Tuple[float, float] = LENGTH_RANGE_MM,
    gate_px: float = DEFAULT_GATE_PX,
) -> Scene:
    """
    產生一個 frame 的左右偵測與 ground truth

    同樣的 (seed, frame_id) 產生逐位元相同的結果。每條魚的雜訊使用自己的
    子 RNG，某條魚的 corruption 不影響其他魚。
    min_curve_separation_px > 0 時，無雜訊偵測上的 greedy assignment (同樣的
    depth_range、segments、gate_px) 保證還原 ground truth 配對。

    Raises:
        ProjectionFailure: 重抽 MAX_RESAMPLES 次仍放不下某條魚
    """
    if n_fish < 0:
        raise ValueError(f"n_fish must be non-negative, got {n_fish}")
    placement = np.random.default_rng([seed, frame_id, 0])
    guard = _SeparationGuard(
        EpipolarCurveProvider(rig.left, rig.right, depth_range, segments), min_curve_separation_px, gate_px
    )

    fish: List[SyntheticFish] = []
    projections: List[Tuple[NDArray, NDArray]] = []
    for k in range(n_fish):
        for _ in range(MAX_RESAMPLES):
            candidate = _sample_fish(placement, f"f{frame_id}-{k}", tank, length_range)
            if not tank.contains(candidate.keypoint_array()):
                continue
            projected = _project(rig, candidate)
            if projected is None or not (_visible(rig.left, projected[0]) and _visible(rig.right, projected[1])):
                continue
            clean = (
                _clean_detection("left", projected[0], _tight_box(projected[0]), QualityClass.HIGH),
                _clean_detection("right", projected[1], _tight_box(projected[1]), QualityClass.HIGH),
            )
            if guard.accepts(*clean):
                break
        else:
            raise ProjectionFailure(
                f"frame {frame_id}: could not place fish {k} after {MAX_RESAMPLES} attempts"
            )
        fish.append(candidate)
        projections.append(projected)

    # 品質：固定比例的魚標成 Low，其餘 High；quality_flip_fraction 模擬品質頭判錯
    order = placement.permutation(n_fish)
    n_low = int(round(corruption.low_quality_fraction * n_fish))
    low = set(int(i) for i in order[:n_low])
    n_flip = int(round(corruption.quality_flip_fraction * n_fish))
    flipped = set(int(i) for i in placement.permutation(n_fish)[:n_flip])
    right_order = [int(i) for i in placement.permutation(n_fish)]

    left_dets: List[FishDetection] = []
    right_dets: Dict[int, FishDetection] = {}
    truth: List[GroundTruthFish] = []
    for k, (body, (left_px, right_px)) in enumerate(zip(fish, projections)):
        noise = np.random.default_rng([corruption.rng_seed, seed, frame_id, k + 1])
        quality_truth = QualityClass.LOW if k in low else QualityClass.HIGH
        predicted = quality_truth
        if k in flipped:
            others = [q for q in QualityClass if q != quality_truth]
            predicted = others[int(noise.integers(len(others)))]
        scale = corruption.low_quality_noise_multiplier if k in low else 1.0
        kp_sigma = corruption.keypoint_noise_sigma_px * scale
        box_sigma = corruption.bbox_noise_sigma_px * scale

        left_box, right_box = _tight_box(left_px), _tight_box(right_px)
        left_id = f"L{frame_id}-{k}"
        right_id = f"R{frame_id}-{right_order.index(k)}"
        left_dets.append(_detection(left_id, left_px, left_box, predicted, noise, kp_sigma, box_sigma))
        right_dets[k] = _detection(right_id, right_px, right_box, predicted, noise, kp_sigma, box_sigma)

        fish[k] = SyntheticFish(body.fish_id, body.length_mm, body.rotation, body.position, quality_truth)
        truth.append(
            GroundTruthFish(
                fish_id=body.fish_id,
                left_detection_id=left_id,
                right_detection_id=right_id,
                left_center=left_box[0],
                right_center=right_box[0],
                length_mm=body.length_mm,
                keypoints_3d=body.keypoints_3d,
                quality_truth=quality_truth,
            )
        )

    return Scene(
        left=DetectionFrame(frame_id, CameraSide.LEFT, left_dets),
        right=DetectionFrame(frame_id, CameraSide.RIGHT, [right_dets[k] for k in right_order]),
        truth=GroundTruthFrame(frame_id, truth),
        fish=fish,
    )
