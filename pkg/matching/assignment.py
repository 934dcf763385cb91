"""
Greedy stereo assignment
反覆挑選全域最小的有限成本配對，直到沒有可用配對為止
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from detections.models import DetectionFrame, FishDetection, KeypointName
from geometry.camera import Pixel
from geometry.epipolar import CurveProvider, EpipolarCurve
from matching.costs import DEFAULT_GATE_PX, MatchCost, total_cost

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchedPair:
    """一組左右偵測配對，refined 存放 template matching 之後的右影像 keypoints"""
    left: FishDetection
    right: FishDetection
    cost: MatchCost
    refined: Dict[KeypointName, Pixel] = field(default_factory=dict)

    @property
    def pair_id(self) -> str:
        return f"{self.left.id}+{self.right.id}"

    def right_keypoint(self, name: KeypointName) -> Pixel:
        return self.refined.get(name, self.right.keypoint(name))


@dataclass(frozen=True)
class AssignmentConfig:
    curve_provider: CurveProvider
    gate_px: float = DEFAULT_GATE_PX
    tau_max: float = math.inf


class _CachedCurves:
    """同一個左偵測的 curve 只算一次"""

    def __init__(self, provider: CurveProvider):
        self._provider = provider
        self._cache: Dict[Tuple[float, float], EpipolarCurve] = {}

    def __call__(self, pixel: Pixel) -> EpipolarCurve:
        key = (float(pixel[0]), float(pixel[1]))
        if key not in self._cache:
            self._cache[key] = self._provider(pixel)
        return self._cache[key]


def greedy_select(
    totals: NDArray[np.float64],
    left_ids: Sequence[str],
    right_ids: Sequence[str],
    tau_max: float = math.inf,
) -> List[Tuple[int, int]]:
    """
    成本矩陣上的 greedy 選擇

    依 (cost, left id, right id) 排序後依序接受，每個偵測最多配對一次。
    回傳 (row, col) list，成本遞增。
    """
    candidates = [
        (float(totals[i, j]), left_ids[i], right_ids[j], i, j)
        for i in range(totals.shape[0])
        for j in range(totals.shape[1])
        if math.isfinite(totals[i, j]) and totals[i, j] <= tau_max
    ]
    candidates.sort()

    used_rows, used_cols = set(), set()
    selected = []
    for _, _, _, i, j in candidates:
        if i in used_rows or j in used_cols:
            continue
        used_rows.add(i)
        used_cols.add(j)
        selected.append((i, j))
    return selected


def cost_matrix(
    left: Sequence[FishDetection],
    right: Sequence[FishDetection],
    config: AssignmentConfig,
) -> List[List[MatchCost]]:
    provider = _CachedCurves(config.curve_provider)
    return [[total_cost(l, r, provider, config.gate_px) for r in right] for l in left]


def greedy_assign(
    left_frame: DetectionFrame,
    right_frame: DetectionFrame,
    config: AssignmentConfig,
) -> List[MatchedPair]:
    """同一時間點的左右 frame → 依成本遞增排序的 MatchedPair"""
    left, right = left_frame.detections, right_frame.detections
    if not left or not right:
        return []

    costs = cost_matrix(left, right, config)
    totals = np.array([[c.total for c in row] for row in costs], dtype=np.float64)
    selected = greedy_select(
        totals, [d.id for d in left], [d.id for d in right], config.tau_max
    )
    pairs = [MatchedPair(left[i], right[j], costs[i][j]) for i, j in selected]
    logger.debug(
        "frame %s: %d x %d 偵測 → %d 組配對",
        left_frame.frame_id, len(left), len(right), len(pairs),
    )
    return pairs
