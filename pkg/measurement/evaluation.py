"""
評估：ground truth association、長度 RMSE、bad match 比例
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from detections.models import DetectionFrame, FishDetection, QualityClass
from errors import EmptyEvaluation
from geometry.camera import Pixel
from measurement.ground_truth import GroundTruthFrame
from measurement.triangulation import FishMeasurement

logger = logging.getLogger(__name__)

DEFAULT_MAX_CENTER_DIST_PX = 30.0


@dataclass(frozen=True)
class Association:
    """單一視角的預測 → ground truth 對應"""
    matches: Dict[str, str]                 # prediction id -> fish id
    distances: Dict[str, float]             # prediction id -> center distance px
    unassociated: List[str]                 # prediction ids

    @property
    def n_predictions(self) -> int:
        return len(self.matches) + len(self.unassociated)


@dataclass(frozen=True)
class FrameAssociation:
    frame_id: int
    left: Association
    right: Association
    quality_pairs: List[Tuple[QualityClass, QualityClass]] = field(default_factory=list)  # (truth, predicted)


@dataclass(frozen=True)
class ResidualRecord:
    frame_id: Optional[int]
    pair_id: str
    fish_id: str
    length_mm: float
    true_length_mm: float

    @property
    def residual_mm(self) -> float:
        return self.length_mm - self.true_length_mm


@dataclass
class EvaluationReport:
    rmse_mm: float
    n_measured: int
    n_ground_truth: int
    n_unmatched_predictions: int
    n_associated_predictions: int
    bad_match_pct: float
    association_pct: float
    residuals: List[ResidualRecord] = field(default_factory=list)
    quality_confusion: List[List[float]] = field(default_factory=list)
    n_dropped_gap: int = 0

    def to_dict(self) -> dict:
        def r(value: float) -> float:
            return round(float(value), 6)

        return {
            "rmse_mm": r(self.rmse_mm),
            "n_measured": self.n_measured,
            "n_ground_truth": self.n_ground_truth,
            "n_unmatched_predictions": self.n_unmatched_predictions,
            "n_associated_predictions": self.n_associated_predictions,
            "n_dropped_gap": self.n_dropped_gap,
            "bad_match_pct": r(self.bad_match_pct),
            "association_pct": r(self.association_pct),
            "quality_confusion": [[r(v) for v in row] for row in self.quality_confusion],
            "residuals": [
                {
                    "frame_id": rec.frame_id,
                    "pair_id": rec.pair_id,
                    "fish_id": rec.fish_id,
                    "length_mm": r(rec.length_mm),
                    "true_length_mm": r(rec.true_length_mm),
                    "residual_mm": r(rec.residual_mm),
                }
                for rec in self.residuals
            ],
        }


def rmse(residuals: Sequence[float]) -> float:
    if not residuals:
        raise EmptyEvaluation("no residuals to aggregate")
    values = np.asarray(residuals, dtype=np.float64)
    return float(math.sqrt(np.mean(values * values)))


def associate_to_ground_truth(
    predicted: Sequence[FishDetection],
    ground_truth: Mapping[str, Pixel],
    max_center_dist_px: float = DEFAULT_MAX_CENTER_DIST_PX,
) -> Association:
    """
    以 bbox 中心距離做 greedy 配對，距離 <= max_center_dist_px 才接受

    ground_truth: fish id -> 該視角的真實 bbox 中心
    """
    candidates = []
    for det in predicted:
        for fish_id, center in ground_truth.items():
            dist = math.hypot(det.bbox.center[0] - center[0], det.bbox.center[1] - center[1])
            if dist <= max_center_dist_px:
                candidates.append((dist, det.id, fish_id))
    candidates.sort()

    matches: Dict[str, str] = {}
    distances: Dict[str, float] = {}
    taken = set()
    for dist, det_id, fish_id in candidates:
        if det_id in matches or fish_id in taken:
            continue
        matches[det_id] = fish_id
        distances[det_id] = dist
        taken.add(fish_id)

    unassociated = [det.id for det in predicted if det.id not in matches]
    return Association(matches=matches, distances=distances, unassociated=unassociated)


def associate_frame(
    left_frame: DetectionFrame,
    right_frame: DetectionFrame,
    truth: GroundTruthFrame,
    max_center_dist_px: float = DEFAULT_MAX_CENTER_DIST_PX,
) -> FrameAssociation:
    left = associate_to_ground_truth(
        left_frame.detections, {f.fish_id: f.left_center for f in truth.fish}, max_center_dist_px
    )
    right = associate_to_ground_truth(
        right_frame.detections, {f.fish_id: f.right_center for f in truth.fish}, max_center_dist_px
    )

    fish = truth.by_id()
    quality_pairs = []
    for frame, assoc in ((left_frame, left), (right_frame, right)):
        for det in frame.detections:
            fish_id = assoc.matches.get(det.id)
            if fish_id is not None:
                quality_pairs.append((fish[fish_id].quality_truth, det.quality))
    return FrameAssociation(truth.frame_id, left, right, quality_pairs)


def quality_confusion(pairs: Sequence[Tuple[QualityClass, QualityClass]]) -> List[List[float]]:
    """rows = 真實類別，columns = 預測類別，每個 column 正規化為 1 (無預測的 column 全 0)"""
    counts = np.zeros((3, 3), dtype=np.float64)
    for truth, predicted in pairs:
        counts[int(truth), int(predicted)] += 1.0
    totals = counts.sum(axis=0)
    normalized = np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
    return normalized.tolist()


def evaluate(
    measurements: Sequence[FishMeasurement],
    ground_truth: Sequence[GroundTruthFrame],
    associations: Mapping[int, FrameAssociation],
    n_dropped_gap: int = 0,
) -> EvaluationReport:
    """
    RMSE 只算左右偵測都對應到同一條 ground truth 魚的配對；其餘配對計為 bad match

    Raises:
        EmptyEvaluation: 沒有任何配對能對應到 ground truth
    """
    truth_by_frame = {frame.frame_id: frame.by_id() for frame in ground_truth}
    residuals: List[ResidualRecord] = []
    bad = 0
    for m in measurements:
        assoc = associations.get(m.frame_id)
        fish_id = None
        if assoc is not None:
            left_fish = assoc.left.matches.get(m.left_id)
            if left_fish is not None and left_fish == assoc.right.matches.get(m.right_id):
                fish_id = left_fish
        if fish_id is None:
            bad += 1
            continue
        truth = truth_by_frame[m.frame_id][fish_id]
        residuals.append(ResidualRecord(m.frame_id, m.pair_id, fish_id, m.length_mm, truth.length_mm))

    if not residuals:
        raise EmptyEvaluation(
            f"none of {len(measurements)} measurements associate to a ground-truth pair"
        )

    n_associated = sum(len(a.left.matches) + len(a.right.matches) for a in associations.values())
    n_unmatched = sum(len(a.left.unassociated) + len(a.right.unassociated) for a in associations.values())
    n_predictions = n_associated + n_unmatched
    quality_pairs = [qp for a in associations.values() for qp in a.quality_pairs]

    report = EvaluationReport(
        rmse_mm=rmse([rec.residual_mm for rec in residuals]),
        n_measured=len(measurements),
        n_ground_truth=sum(len(frame.fish) for frame in ground_truth),
        n_unmatched_predictions=n_unmatched,
        n_associated_predictions=n_associated,
        bad_match_pct=100.0 * bad / len(measurements),
        association_pct=100.0 * n_associated / n_predictions if n_predictions else 0.0,
        residuals=residuals,
        quality_confusion=quality_confusion(quality_pairs),
        n_dropped_gap=n_dropped_gap,
    )
    logger.info(
        "📐 RMSE %.4f mm over %d pairs, bad matches %.1f%%",
        report.rmse_mm, len(residuals), report.bad_match_pct,
    )
    return report
