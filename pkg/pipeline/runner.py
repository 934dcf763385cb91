"""
Measurement pipeline
match → refine (Te) → filter (Qu, aspect, Di) → triangulate → measure，
frame pair 交給 worker pool 平行處理，結果一律依 frame 順序合併
"""
import csv
import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from detections.io import read_detection_file
from detections.models import (
    KEYPOINT_ORDER,
    CameraSide,
    DetectionFrame,
    Keypoint,
)
from errors import ConfigError, DegenerateBody, EmptyEvaluation, GeometryError
from filtering.filters import FilterVerdict, filter_direction, filter_image_cues
from geometry.calibration import load_rig
from geometry.camera import PinholeIntrinsics, StereoRig
from geometry.epipolar import EpipolarCurveProvider
from matching.assignment import AssignmentConfig, MatchedPair, greedy_assign
from measurement.evaluation import EvaluationReport, associate_frame, evaluate
from measurement.ground_truth import GroundTruthFrame, read_ground_truth
from measurement.triangulation import FishMeasurement, measure_pair
from pipeline.config import PipelineConfig, Toggles
from refinement.images import GrayImage, load_gray_image
from refinement.template import refine_pair

logger = logging.getLogger(__name__)
trace_logger = logging.getLogger("fishlength.trace")

ImageLoader = Callable[[str], GrayImage]

STATUS_KEPT = "kept"
STATUS_RAY_GAP = "RayGap"
STATUS_DEGENERATE = "Degenerate"
STATUS_GEOMETRY = "GeometryFailure"

RESULT_COLUMNS = (
    ["frame_id", "pair_id", "length_mm", "axis_angle_deg"]
    + [f"gap_{name.value}_mm" for name in KEYPOINT_ORDER]
    + ["max_gap_mm", "kept", "rejected_by"]
)


@dataclass(frozen=True)
class PairOutcome:
    frame_id: int
    pair: MatchedPair
    status: str
    measurement: Optional[FishMeasurement] = None

    @property
    def kept(self) -> bool:
        return self.status == STATUS_KEPT


@dataclass
class FrameResult:
    frame_id: int
    left: DetectionFrame
    right: DetectionFrame
    outcomes: List[PairOutcome] = field(default_factory=list)

    @property
    def measurements(self) -> List[FishMeasurement]:
        return [o.measurement for o in self.outcomes if o.kept]

    @property
    def n_dropped_gap(self) -> int:
        return sum(1 for o in self.outcomes if o.status == STATUS_RAY_GAP)


# ===== ingest =====

def undistort_frame(frame: DetectionFrame, intrinsics: PinholeIntrinsics) -> DetectionFrame:
    """原始影像座標的 keypoints 與 bbox 中心 → 去畸變座標"""
    detections = []
    for det in frame.detections:
        keypoints = {
            name: Keypoint(intrinsics.undistort(kp.position), kp.confidence)
            for name, kp in det.keypoints.items()
        }
        bbox = replace(det.bbox, center=intrinsics.undistort(det.bbox.center))
        detections.append(replace(det, keypoints=keypoints, bbox=bbox))
    return replace(frame, detections=detections)


def pair_frames(frames: Sequence[DetectionFrame]) -> List[Tuple[DetectionFrame, DetectionFrame]]:
    """依 frame_id 把左右 frame 配起來，缺一邊時補空 frame"""
    by_id: Dict[int, Dict[CameraSide, DetectionFrame]] = {}
    for frame in frames:
        sides = by_id.setdefault(frame.frame_id, {})
        if frame.camera in sides:
            raise ConfigError(f"frame {frame.frame_id} has two {frame.camera.value} entries")
        sides[frame.camera] = frame

    pairs = []
    for frame_id in sorted(by_id):
        sides = by_id[frame_id]
        for side in CameraSide:
            if side not in sides:
                logger.warning("⚠️ frame %d 沒有 %s 偵測，視為空 frame", frame_id, side.value)
                sides[side] = DetectionFrame(frame_id, side, [])
        pairs.append((sides[CameraSide.LEFT], sides[CameraSide.RIGHT]))
    return pairs


def _trace(event: str, **fields) -> None:
    if trace_logger.isEnabledFor(logging.INFO):
        trace_logger.info(json.dumps({"event": event, **fields}, sort_keys=True))


# ===== pipeline =====

class MeasurementPipeline:
    """一組 rig + 設定，處理任意多個 frame pair"""

    def __init__(
        self,
        rig: StereoRig,
        config: PipelineConfig = PipelineConfig(),
        image_loader: Optional[ImageLoader] = None,
    ):
        self.rig = rig
        self.config = config
        self.filters = config.effective_filters()
        self.curves = EpipolarCurveProvider(
            rig.left, rig.right, config.matching.depth_range, config.matching.segments
        )
        self.assignment = AssignmentConfig(
            curve_provider=self.curves,
            gate_px=config.matching.gate_px,
            tau_max=config.matching.tau_max,
        )
        self.image_loader = image_loader or self._default_loader

    def _default_loader(self, image_path: str) -> GrayImage:
        path = Path(image_path)
        if not path.is_absolute() and self.config.image_dir is not None:
            path = self.config.image_dir / path
        return load_gray_image(path)

    def _images(self, left: DetectionFrame, right: DetectionFrame) -> Optional[Tuple[GrayImage, GrayImage]]:
        if not self.config.toggles.template:
            return None
        if left.image_path is None or right.image_path is None:
            logger.debug("frame %d 沒有影像，略過 template refinement", left.frame_id)
            return None
        return self.image_loader(left.image_path), self.image_loader(right.image_path)

    def _measure(self, frame_id: int, pair: MatchedPair, images) -> PairOutcome:
        verdict: FilterVerdict = filter_image_cues(pair, self.filters)
        if not verdict.kept:
            return PairOutcome(frame_id, pair, verdict.rejected_by.value)

        if images is not None:
            pair = refine_pair(pair, images[0], images[1], self.curves, self.config.refinement)

        try:
            measurement = measure_pair(pair, self.rig, frame_id)
            verdict = filter_direction(measurement, self.rig.left, self.filters)
        except DegenerateBody as e:
            logger.debug("frame %d pair %s: %s", frame_id, pair.pair_id, e)
            return PairOutcome(frame_id, pair, STATUS_DEGENERATE)
        except GeometryError as e:
            # 求解失敗不是魚體問題，另外標記
            logger.warning("⚠️ frame %d pair %s: %s: %s", frame_id, pair.pair_id, type(e).__name__, e)
            return PairOutcome(frame_id, pair, STATUS_GEOMETRY)

        if not verdict.kept:
            return PairOutcome(frame_id, pair, verdict.rejected_by.value, measurement)
        if measurement.max_ray_gap_mm > self.config.measurement.max_ray_gap_mm:
            return PairOutcome(frame_id, pair, STATUS_RAY_GAP, measurement)
        return PairOutcome(frame_id, pair, STATUS_KEPT, measurement)

    def process(self, left: DetectionFrame, right: DetectionFrame) -> FrameResult:
        if left.frame_id != right.frame_id:
            raise ValueError(f"frame ids differ: {left.frame_id} vs {right.frame_id}")
        if self.config.detections_distorted:
            left = undistort_frame(left, self.rig.left.intrinsics)
            right = undistort_frame(right, self.rig.right.intrinsics)

        pairs = greedy_assign(left, right, self.assignment)
        images = self._images(left, right) if pairs else None
        outcomes = [self._measure(left.frame_id, pair, images) for pair in pairs]

        if self.config.trace:
            matched = {p.left.id for p in pairs} | {p.right.id for p in pairs}
            for det in left.detections + right.detections:
                if det.id not in matched:
                    _trace("detection_unmatched", frame_id=left.frame_id, detection_id=det.id)
            for outcome in outcomes:
                if not outcome.kept:
                    _trace(
                        "pair_rejected",
                        frame_id=outcome.frame_id,
                        pair_id=outcome.pair.pair_id,
                        rejected_by=outcome.status,
                    )
        return FrameResult(left.frame_id, left, right, outcomes)

    def run(self, frame_pairs: Sequence[Tuple[DetectionFrame, DetectionFrame]]) -> List[FrameResult]:
        """executor.map 保留輸入順序，輸出與 worker 數無關"""
        if self.config.workers <= 1 or len(frame_pairs) <= 1:
            return [self.process(left, right) for left, right in frame_pairs]
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            return list(pool.map(lambda p: self.process(*p), frame_pairs))


# ===== evaluation =====

def evaluate_results(
    results: Sequence[FrameResult],
    truth: Sequence[GroundTruthFrame],
    config: PipelineConfig = PipelineConfig(),
) -> EvaluationReport:
    """
    Raises:
        EmptyEvaluation: 沒有任何 frame，或沒有量測能對應到 ground truth
    """
    if not results:
        raise EmptyEvaluation("no frame pairs to evaluate")
    by_frame = {r.frame_id: r for r in results}
    associations = {}
    for frame in truth:
        result = by_frame.get(frame.frame_id)
        left = result.left if result else DetectionFrame(frame.frame_id, CameraSide.LEFT, [])
        right = result.right if result else DetectionFrame(frame.frame_id, CameraSide.RIGHT, [])
        associations[frame.frame_id] = associate_frame(
            left, right, frame, config.measurement.max_center_dist_px
        )
    measurements = [m for r in results for m in r.measurements]
    return evaluate(
        measurements, truth, associations, n_dropped_gap=sum(r.n_dropped_gap for r in results)
    )


# ===== 輸出 =====

def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def write_results_csv(results: Sequence[FrameResult], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for result in results:
            for outcome in result.outcomes:
                m = outcome.measurement
                gaps = [_fmt(m.ray_gap_mm[name]) if m else "" for name in KEYPOINT_ORDER]
                writer.writerow(
                    [result.frame_id, outcome.pair.pair_id,
                     _fmt(m.length_mm if m else None), _fmt(m.axis_angle_deg if m else None)]
                    + gaps
                    + [_fmt(m.max_ray_gap_mm if m else None),
                       int(outcome.kept), "" if outcome.kept else outcome.status]
                )


def write_json(data: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class MeasureOutput:
    results: List[FrameResult]
    report: Optional[EvaluationReport]
    results_csv: Path
    evaluation_json: Optional[Path]


def load_inputs(config: PipelineConfig) -> Tuple[StereoRig, List[Tuple[DetectionFrame, DetectionFrame]]]:
    if config.calibration is None:
        raise ConfigError("no calibration file configured")
    if config.detections is None:
        raise ConfigError("no detection file configured")
    rig = load_rig(config.calibration)
    if not Path(config.detections).exists():
        raise ConfigError(f"detection file not found: {config.detections}")
    frames = read_detection_file(config.detections)
    return rig, pair_frames(frames)


def run_measure(config: PipelineConfig) -> MeasureOutput:
    """cmd_measure：讀檔、處理、寫出 results.csv 與 evaluation.json"""
    rig, frame_pairs = load_inputs(config)
    truth = read_ground_truth(config.ground_truth) if config.ground_truth else None

    pipeline = MeasurementPipeline(rig, config)
    started = time.perf_counter()
    results = pipeline.run(frame_pairs)
    elapsed = time.perf_counter() - started
    if results:
        logger.info(
            "✅ %d frame pairs in %.2f s (%.1f pairs/s, %d workers)",
            len(results), elapsed, len(results) / max(elapsed, 1e-9), config.workers,
        )

    results_csv = Path(config.output_dir) / "results.csv"
    write_results_csv(results, results_csv)

    report, evaluation_json = None, None
    if truth is not None:
        report = evaluate_results(results, truth, config)
        evaluation_json = Path(config.output_dir) / "evaluation.json"
        write_json(report.to_dict(), evaluation_json)
    elif not results:
        raise EmptyEvaluation(f"{config.detections}: no frames")
    return MeasureOutput(results, report, results_csv, evaluation_json)


# ===== ablation =====

@dataclass(frozen=True)
class AblationRow:
    toggles: Toggles
    rmse_mm: float
    bad_match_pct: float
    n_measured: int

    @property
    def label(self) -> str:
        return self.toggles.label


ABLATION_COLUMNS = ["Qu", "Te", "Di", "label", "rmse_mm", "bad_match_pct", "n_measured"]


def ablate(
    rig: StereoRig,
    frame_pairs: Sequence[Tuple[DetectionFrame, DetectionFrame]],
    truth: Sequence[GroundTruthFrame],
    config: PipelineConfig = PipelineConfig(),
    image_loader: Optional[ImageLoader] = None,
) -> List[AblationRow]:
    """2³ 種 Qu / Te / Di 組合，每一列都等同用相同 toggle 跑一次 measure"""
    if not frame_pairs:
        raise EmptyEvaluation("no frame pairs to ablate")
    rows = []
    for quality, template, direction in itertools.product((False, True), repeat=3):
        row_config = config.with_toggles(quality, template, direction)
        results = MeasurementPipeline(rig, row_config, image_loader).run(frame_pairs)
        report = evaluate_results(results, truth, row_config)
        rows.append(
            AblationRow(row_config.toggles, report.rmse_mm, report.bad_match_pct, report.n_measured)
        )
        logger.info(
            "📐 %-10s RMSE %.4f mm  bad %.2f%%  n=%d",
            rows[-1].label, report.rmse_mm, report.bad_match_pct, report.n_measured,
        )
    return rows


def write_ablation_csv(rows: Sequence[AblationRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            writer.writerow([
                int(row.toggles.quality), int(row.toggles.template), int(row.toggles.direction), row.label,
                _fmt(row.rmse_mm), _fmt(row.bad_match_pct), row.n_measured,
            ])


def run_ablate(config: PipelineConfig) -> Tuple[List[AblationRow], Path]:
    if config.ground_truth is None:
        raise ConfigError("ablation needs a ground-truth file")
    rig, frame_pairs = load_inputs(config)
    truth = read_ground_truth(config.ground_truth)
    rows = ablate(rig, frame_pairs, truth, config)
    path = Path(config.output_dir) / "ablation.csv"
    write_ablation_csv(rows, path)
    return rows, path
