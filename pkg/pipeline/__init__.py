"""pipeline package"""
from pipeline.config import (
    MatchingConfig,
    MeasurementConfig,
    PipelineConfig,
    Toggles,
    load_config,
)
from pipeline.runner import (
    AblationRow,
    FrameResult,
    MeasurementPipeline,
    PairOutcome,
    ablate,
    evaluate_results,
    pair_frames,
    run_ablate,
    run_measure,
)

__all__ = [
    "MatchingConfig", "MeasurementConfig", "PipelineConfig", "Toggles", "load_config",
    "AblationRow", "FrameResult", "MeasurementPipeline", "PairOutcome",
    "ablate", "evaluate_results", "pair_frames", "run_ablate", "run_measure",
]
