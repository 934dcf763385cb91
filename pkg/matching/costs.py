"""
Stereo matching 成本函數
L = (L_p + L_s + L_k) / 3
- L_p: bbox 中心到 epipolar curve 的距離 (超過 gate 為無限大)
- L_s: bbox 寬高的相對差
- L_k: 置中後 keypoint pattern 的差異
"""
import math
from dataclasses import dataclass

import numpy as np

from detections.models import FishDetection
from geometry.epipolar import CurveProvider, closest_point_on_curve

DEFAULT_GATE_PX = 150.0


@dataclass(frozen=True)
class MatchCost:
    l_p: float
    l_s: float
    l_k: float
    total: float

    @classmethod
    def combine(cls, l_p: float, l_s: float, l_k: float) -> "MatchCost":
        if math.isinf(l_p):
            return cls(l_p, l_s, l_k, math.inf)
        return cls(l_p, l_s, l_k, (l_p + l_s + l_k) / 3.0)


def cost_epipolar(
    left: FishDetection,
    right: FishDetection,
    curve_provider: CurveProvider,
    gate_px: float = DEFAULT_GATE_PX,
) -> float:
    """
    左 bbox 中心的 epipolar curve (在右影像) 到右 bbox 中心的距離 / gate

    方向固定：curve 來自左影像，query 是右影像的中心；距離 >= gate 時為 inf
    """
    if gate_px <= 0:
        raise ValueError(f"gate_px must be positive, got {gate_px}")
    curve = curve_provider(left.bbox.center)
    distance = closest_point_on_curve(curve, right.bbox.center).distance
    if distance < gate_px:
        return distance / gate_px
    return math.inf


def cost_size(left: FishDetection, right: FishDetection) -> float:
    w_i, h_i = left.bbox.width, left.bbox.height
    w_j, h_j = right.bbox.width, right.bbox.height
    return 0.5 * (abs(w_i - w_j) / (0.5 * (w_i + w_j)) + abs(h_i - h_j) / (0.5 * (h_i + h_j)))


def cost_keypoints(left: FishDetection, right: FishDetection) -> float:
    p_i = left.keypoint_array()
    p_j = right.keypoint_array()
    centered_i = p_i - p_i.mean(axis=0)
    centered_j = p_j - p_j.mean(axis=0)
    numerator = float(np.sum(np.linalg.norm(centered_i - centered_j, axis=1)))
    # 先兩兩相加，交換 i, j 時結果逐位元相同
    scale = 0.5 * ((left.bbox.width + right.bbox.width) + (left.bbox.height + right.bbox.height))
    return numerator / scale


def total_cost(
    left: FishDetection,
    right: FishDetection,
    curve_provider: CurveProvider,
    gate_px: float = DEFAULT_GATE_PX,
) -> MatchCost:
    return MatchCost.combine(
        cost_epipolar(left, right, curve_provider, gate_px),
        cost_size(left, right),
        cost_keypoints(left, right),
    )
