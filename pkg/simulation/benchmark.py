"""
標準合成 benchmark (參數固定，不要修改)

| profile | seed | frames x fish | keypoint σ | bbox σ | 其他                     |
|---------|------|---------------|------------|--------|--------------------------|
| clean   | 1001 | 20 x 10       | 0          | 0      |                          |
| noisy   | 2002 | 20 x 10       | 1.5 px     | 1.5 px | 20% low quality, 4x 雜訊 |
| crowded | 3003 | 20 x 25       | 0.5 px     | 0.5 px | 關閉 curve separation    |
"""
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Union

from detections.io import write_detection_file
from detections.models import DetectionFrame
from geometry.calibration import save_rig
from geometry.camera import StereoRig
from measurement.ground_truth import write_ground_truth
from refinement.images import save_gray_image
from simulation.render import render_stereo
from simulation.scene import CorruptionModel, Scene, default_rig, generate_scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchmarkProfile:
    name: str
    seed: int
    n_frames: int
    n_fish: int
    corruption: CorruptionModel
    min_curve_separation_px: float = 3.0


PROFILES: Dict[str, BenchmarkProfile] = {
    "clean": BenchmarkProfile("clean", 1001, 20, 10, CorruptionModel(rng_seed=1001)),
    "noisy": BenchmarkProfile(
        "noisy", 2002, 20, 10,
        CorruptionModel(
            keypoint_noise_sigma_px=1.5,
            bbox_noise_sigma_px=1.5,
            low_quality_fraction=0.2,
            low_quality_noise_multiplier=4.0,
            rng_seed=2002,
        ),
    ),
    "crowded": BenchmarkProfile(
        "crowded", 3003, 20, 25,
        CorruptionModel(keypoint_noise_sigma_px=0.5, bbox_noise_sigma_px=0.5, rng_seed=3003),
        min_curve_separation_px=0.0,
    ),
}


@dataclass
class BenchmarkSuite:
    profile: BenchmarkProfile
    rig: StereoRig
    scenes: List[Scene] = field(default_factory=list)


def standard_benchmark(profile: str, n_frames: Optional[int] = None) -> BenchmarkSuite:
    """
    產生指定 profile 的場景集合

    Args:
        profile: clean / noisy / crowded
        n_frames: 只取前 n 個 frame (測試用)，預設為 profile 的 frame 數
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown benchmark profile '{profile}', expected one of {sorted(PROFILES)}")
    chosen = PROFILES[profile]
    rig = default_rig()
    frames = chosen.n_frames if n_frames is None else min(n_frames, chosen.n_frames)
    scenes = [
        generate_scene(
            chosen.n_fish,
            rig,
            chosen.corruption,
            seed=chosen.seed,
            frame_id=frame_id,
            min_curve_separation_px=chosen.min_curve_separation_px,
        )
        for frame_id in range(frames)
    ]
    logger.info("✅ benchmark '%s': %d frames x %d fish", profile, frames, chosen.n_fish)
    return BenchmarkSuite(chosen, rig, scenes)


@dataclass(frozen=True)
class ExportedSuite:
    calibration: Path
    detections: Path
    ground_truth: Path
    config: Path


def export_suite(suite: BenchmarkSuite, out_dir: Union[str, Path], images: bool = False) -> ExportedSuite:
    """
    寫出 calibration.json、detections.jsonl、ground_truth.json 與可直接給
    `measure --config` 用的 pipeline.json；images=True 時另外輸出 PGM 影像
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    calibration = out_dir / "calibration.json"
    detections = out_dir / "detections.jsonl"
    ground_truth = out_dir / "ground_truth.json"
    config = out_dir / "pipeline.json"

    save_rig(suite.rig, calibration)
    frames: List[DetectionFrame] = []
    for scene in suite.scenes:
        left, right = scene.left, scene.right
        if images:
            rendered = render_stereo(
                suite.rig.left, suite.rig.right, scene.fish, suite.profile.seed + scene.left.frame_id
            )
            names = []
            for side, image in zip(("left", "right"), rendered):
                name = f"images/{side}_{scene.left.frame_id:04d}.pgm"
                save_gray_image(image, out_dir / name)
                names.append(name)
            left = replace(left, image_path=names[0])
            right = replace(right, image_path=names[1])
        frames.extend([left, right])
    write_detection_file(frames, detections)
    write_ground_truth([scene.truth for scene in suite.scenes], ground_truth)

    pipeline = {
        "calibration": calibration.name,
        "detections": detections.name,
        "ground_truth": ground_truth.name,
        "output_dir": "results",
    }
    if images:
        pipeline["image_dir"] = "."
    config.write_text(json.dumps(pipeline, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("✅ 已寫出 %s (%d frames)", out_dir, len(suite.scenes))
    return ExportedSuite(calibration, detections, ground_truth, config)
