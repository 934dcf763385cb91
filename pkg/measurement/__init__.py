"""measurement package"""
from measurement.triangulation import FishMeasurement, axis_angle_deg, measure_pair, triangulate
from measurement.ground_truth import (
    GroundTruthFish,
    GroundTruthFrame,
    read_ground_truth,
    write_ground_truth,
)
from measurement.evaluation import (
    Association,
    EvaluationReport,
    FrameAssociation,
    associate_frame,
    associate_to_ground_truth,
    evaluate,
    rmse,
)

__all__ = [
    "FishMeasurement", "axis_angle_deg", "measure_pair", "triangulate",
    "GroundTruthFish", "GroundTruthFrame", "read_ground_truth", "write_ground_truth",
    "Association", "EvaluationReport", "FrameAssociation",
    "associate_frame", "associate_to_ground_truth", "evaluate", "rmse",
]
