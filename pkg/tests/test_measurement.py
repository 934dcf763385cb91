"""三角化、魚長量測、ground truth 對應與評估指標"""
import json
import math

import numpy as np
import pytest

from detections.models import (
    KEYPOINT_ORDER,
    BoundingBox,
    FishDetection,
    Keypoint,
    KeypointName,
    QualityClass,
)
from errors import ConfigError, DegenerateBody, EmptyEvaluation, NearParallelRays, ParseError
from geometry.camera import Pixel
from geometry.refraction import forward_project, forward_project_many
from matching.assignment import MatchedPair
from matching.costs import MatchCost
from measurement.evaluation import (
    Association,
    FrameAssociation,
    associate_frame,
    associate_to_ground_truth,
    evaluate,
    quality_confusion,
    rmse,
)
from measurement.ground_truth import (
    GroundTruthFish,
    GroundTruthFrame,
    read_ground_truth,
    write_ground_truth,
)
from measurement.triangulation import FishMeasurement, measure_pair, triangulate
from simulation.scene import CorruptionModel, SyntheticFish, generate_scene


def _detection_from_pixels(det_id, pixels) -> FishDetection:
    lo, hi = pixels.min(axis=0), pixels.max(axis=0)
    return FishDetection(
        id=det_id,
        bbox=BoundingBox(Pixel(*(0.5 * (lo + hi))), float(hi[0] - lo[0]) + 16.0, float(hi[1] - lo[1]) + 16.0),
        keypoints={name: Keypoint(Pixel(float(u), float(v))) for name, (u, v) in zip(KEYPOINT_ORDER, pixels)},
        quality=QualityClass.HIGH,
        quality_scores=(0.1, 0.1, 0.8),
    )


def _pair(left, right) -> MatchedPair:
    return MatchedPair(left, right, MatchCost.combine(0.0, 0.0, 0.0))


# ===== triangulate =====

def test_triangulate_recovers_projected_point(rig):
    point = np.array([20.0, -10.0, 300.0])
    left_px = forward_project(rig.left, point)
    right_px = forward_project(rig.right, point)
    estimate, gap = triangulate(rig.left, rig.right, left_px, right_px)
    assert estimate == pytest.approx(point, abs=1e-6)
    assert gap < 1e-6


def test_unit_indices_match_classical_midpoint(rig):
    left = rig.left.with_indices(1.0, 1.0, 1.0)
    right = rig.right.with_indices(1.0, 1.0, 1.0)
    left_px, right_px = Pixel(1400.0, 900.0), Pixel(700.0, 905.0)

    def pinhole_ray(cam, px):
        d = cam.pose.rotation.T @ cam.intrinsics.normalize(px)
        return cam.center, d / np.linalg.norm(d)

    (o1, d1), (o2, d2) = pinhole_ray(left, left_px), pinhole_ray(right, right_px)
    w0 = o1 - o2
    b, d, e = d1 @ d2, d1 @ w0, d2 @ w0
    s = (b * e - d) / (1.0 - b * b)
    t = (e - b * d) / (1.0 - b * b)
    expected = 0.5 * ((o1 + s * d1) + (o2 + t * d2))

    estimate, gap = triangulate(left, right, left_px, right_px)
    assert estimate == pytest.approx(expected, abs=1e-8)
    assert gap > 0.0


def test_gap_grows_with_perturbation(rig):
    point = np.array([-5.0, 15.0, 260.0])
    left_px = forward_project(rig.left, point)
    right_px = forward_project(rig.right, point)
    gaps = [
        triangulate(rig.left, rig.right, left_px, Pixel(right_px.u, right_px.v + 0.5 * k))[1]
        for k in range(7)
    ]
    assert gaps[1] > 0.0
    assert all(b >= a - 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_parallel_rays(rig):
    with pytest.raises(NearParallelRays):
        triangulate(rig.left, rig.left, Pixel(1000.0, 1000.0), Pixel(1000.0, 1000.0))


# ===== measure_pair =====

def test_noiseless_fish_lengths(rig):
    scene = generate_scene(5, rig, CorruptionModel(), seed=12)
    left, right = scene.left.by_id(), scene.right.by_id()
    for fish in scene.truth.fish:
        pair = _pair(left[fish.left_detection_id], right[fish.right_detection_id])
        measurement = measure_pair(pair, rig, frame_id=0)
        assert measurement.length_mm == pytest.approx(fish.length_mm, abs=1e-6)
        assert measurement.max_ray_gap_mm < 1e-6
        assert measurement.left_id == fish.left_detection_id
        assert measurement.right_id == fish.right_detection_id
        for name in KEYPOINT_ORDER:
            assert measurement.keypoints_3d[name] == pytest.approx(fish.keypoints_3d[name], abs=1e-6)


def test_fish_parallel_to_image_plane(rig):
    fish = SyntheticFish("f", 60.0, np.eye(3), np.array([30.0, 5.0, 320.0]))
    points = fish.keypoint_array()
    pair = _pair(
        _detection_from_pixels("L", forward_project_many(rig.left, points)),
        _detection_from_pixels("R", forward_project_many(rig.right, points)),
    )
    measurement = measure_pair(pair, rig)
    depths = [measurement.keypoints_3d[name][2] for name in KEYPOINT_ORDER]
    assert depths == pytest.approx([320.0] * 5, abs=1e-6)
    assert measurement.length_mm == pytest.approx(60.0, abs=1e-6)
    assert measurement.axis_angle_deg == pytest.approx(90.0, abs=1e-6)


def test_degenerate_body(rig, detection_factory):
    offsets = [(0.0, 0.0), (5.0, -3.0), (20.0, -10.0), (22.0, 9.0), (0.0, 0.0)]
    left = detection_factory("L", center=(1300.0, 1000.0), offsets=offsets)
    point = np.array([3.0, -0.5, 300.0])
    right_center = forward_project(rig.right, point)
    right = detection_factory("R", center=tuple(right_center), offsets=offsets)
    with pytest.raises(DegenerateBody):
        measure_pair(_pair(left, right), rig)


# ===== association =====

def _det(det_id, center, factory):
    return factory(det_id, center=center)


def test_identical_boxes_associate(detection_factory):
    dets = [_det("a", (100.0, 100.0), detection_factory), _det("b", (400.0, 100.0), detection_factory)]
    assoc = associate_to_ground_truth(dets, {"f0": Pixel(100.0, 100.0), "f1": Pixel(400.0, 100.0)})
    assert assoc.matches == {"a": "f0", "b": "f1"}
    assert assoc.distances == {"a": 0.0, "b": 0.0}
    assert assoc.unassociated == []


@pytest.mark.parametrize("offset, associated", [(30.0, True), (31.0, False)])
def test_association_radius(detection_factory, offset, associated):
    det = _det("a", (100.0 + offset, 100.0), detection_factory)
    assoc = associate_to_ground_truth([det], {"f0": Pixel(100.0, 100.0)})
    assert ("a" in assoc.matches) is associated
    assert (assoc.unassociated == ["a"]) is not associated


def test_nearer_prediction_wins(detection_factory):
    far = _det("a", (120.0, 100.0), detection_factory)
    near = _det("b", (95.0, 100.0), detection_factory)
    assoc = associate_to_ground_truth([far, near], {"f0": Pixel(100.0, 100.0)})
    assert assoc.matches == {"b": "f0"}
    assert assoc.unassociated == ["a"]


# ===== metrics =====

def test_rmse():
    assert rmse([3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
    assert rmse([0.0, 0.0]) == 0.0
    with pytest.raises(EmptyEvaluation):
        rmse([])


def _truth_frame(lengths):
    return GroundTruthFrame(
        0,
        [
            GroundTruthFish(f"f{k}", f"L{k}", f"R{k}", Pixel(0.0, 0.0), Pixel(0.0, 0.0), length)
            for k, length in enumerate(lengths)
        ],
    )


def _association(n, qualities=()):
    matches = {f"L{k}": f"f{k}" for k in range(n)}
    right = {f"R{k}": f"f{k}" for k in range(n)}
    return FrameAssociation(
        0,
        Association(matches, {k: 0.0 for k in matches}, []),
        Association(right, {k: 0.0 for k in right}, ["Rx"]),
        list(qualities),
    )


def _measurement(left_id, right_id, length):
    return FishMeasurement(
        pair_id=f"{left_id}+{right_id}",
        keypoints_3d={},
        length_mm=length,
        ray_gap_mm={KeypointName.MOUTH: 0.0},
        axis_angle_deg=90.0,
        frame_id=0,
        left_id=left_id,
        right_id=right_id,
    )


def test_perfect_predictions():
    lengths = [50.0, 60.0, 70.0, 80.0]
    measurements = [_measurement(f"L{k}", f"R{k}", length) for k, length in enumerate(lengths)]
    report = evaluate(measurements, [_truth_frame(lengths)], {0: _association(4)})
    assert report.rmse_mm == 0.0
    assert report.bad_match_pct == 0.0
    assert report.n_measured == 4
    assert report.n_ground_truth == 4
    assert report.n_unmatched_predictions == 1
    assert report.n_associated_predictions == 8
    assert report.association_pct == pytest.approx(800.0 / 9.0)


def test_one_of_four_mismatched():
    lengths = [50.0, 60.0, 70.0, 80.0]
    measurements = [
        _measurement("L0", "R0", 53.0),
        _measurement("L1", "R1", 64.0),
        _measurement("L2", "R2", 70.0),
        _measurement("L3", "Rx", 10.0),
    ]
    report = evaluate(measurements, [_truth_frame(lengths)], {0: _association(4)}, n_dropped_gap=2)
    assert report.bad_match_pct == pytest.approx(25.0)
    assert report.rmse_mm == pytest.approx(math.sqrt(25.0 / 3.0))
    assert [r.residual_mm for r in report.residuals] == pytest.approx([3.0, 4.0, 0.0])
    assert report.n_dropped_gap == 2


def test_nothing_associates():
    with pytest.raises(EmptyEvaluation):
        evaluate([_measurement("L0", "R1", 50.0)], [_truth_frame([50.0, 60.0])], {0: _association(2)})


def test_quality_confusion_columns_sum_to_one():
    pairs = [
        (QualityClass.HIGH, QualityClass.HIGH),
        (QualityClass.LOW, QualityClass.HIGH),
        (QualityClass.LOW, QualityClass.LOW),
    ]
    assert quality_confusion(pairs) == [
        [1.0, 0.0, 0.5],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.5],
    ]


def test_report_serialization():
    lengths = [50.0, 60.0]
    measurements = [_measurement("L0", "R0", 50.1234567), _measurement("L1", "R1", 60.0)]
    report = evaluate(
        measurements, [_truth_frame(lengths)],
        {0: _association(2, [(QualityClass.HIGH, QualityClass.HIGH)])},
    )
    data = json.loads(json.dumps(report.to_dict()))
    assert data["residuals"][0]["length_mm"] == 50.123457
    assert data["quality_confusion"][2][2] == 1.0
    assert data["n_measured"] == 2


def test_associate_frame_collects_quality_pairs(rig):
    scene = generate_scene(3, rig, CorruptionModel(low_quality_fraction=1.0 / 3.0), seed=4)
    assoc = associate_frame(scene.left, scene.right, scene.truth)
    assert len(assoc.left.matches) == 3
    assert len(assoc.right.matches) == 3
    truth = scene.truth.by_id()
    for fish_id in assoc.left.matches.values():
        assert truth[fish_id].left_detection_id in assoc.left.matches
    assert sorted(q for q, _ in assoc.quality_pairs) == sorted(
        [QualityClass.LOW] * 2 + [QualityClass.HIGH] * 4
    )


# ===== ground truth file =====

def test_ground_truth_round_trip(tmp_path, rig):
    scene = generate_scene(3, rig, CorruptionModel(low_quality_fraction=0.34), seed=9)
    path = tmp_path / "truth.json"
    write_ground_truth([scene.truth], path)
    (frame,) = read_ground_truth(path)
    assert frame.frame_id == 0
    for original, loaded in zip(scene.truth.fish, frame.fish):
        assert loaded.fish_id == original.fish_id
        assert loaded.right_detection_id == original.right_detection_id
        assert loaded.length_mm == pytest.approx(original.length_mm, abs=1e-9)
        assert loaded.quality_truth is original.quality_truth
        assert loaded.keypoints_3d[KeypointName.EYE] == pytest.approx(
            original.keypoints_3d[KeypointName.EYE], abs=1e-9
        )


def test_ground_truth_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_ground_truth(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"frames": [{"fish": []}]}', encoding="utf-8")
    with pytest.raises(ParseError) as info:
        read_ground_truth(bad)
    assert info.value.field == "frames.0.frame_id"


def test_ground_truth_schema_errors_name_the_field(tmp_path, rig):
    path = tmp_path / "truth.json"
    write_ground_truth([generate_scene(1, rig, seed=2).truth], path)
    payload = json.loads(path.read_text(encoding="utf-8"))

    payload["frames"][0]["fish"][0]["keypoints_3d"]["gill"] = [0.0, 0.0, 300.0]
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ParseError) as info:
        read_ground_truth(path)
    assert info.value.field.startswith("frames.0.fish.0.keypoints_3d")

    del payload["frames"][0]["fish"][0]["keypoints_3d"]["gill"]
    payload["frames"][0]["fish"][0]["length_mm"] = -5.0
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ParseError) as info:
        read_ground_truth(path)
    assert info.value.field == "frames.0.fish.0.length_mm"

    path.write_text('{\n"frames": [\n', encoding="utf-8")
    with pytest.raises(ParseError) as info:
        read_ground_truth(path)
    assert info.value.line is not None
