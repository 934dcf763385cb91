"""HTTP 服務端點"""
import numpy as np
import pytest
from fastapi.testclient import TestClient

from detections.io import frame_to_dict
from geometry.calibration import save_rig
from geometry.refraction import forward_project
from main import app
from simulation.scene import generate_scene


@pytest.fixture
def client(tmp_path, monkeypatch, rig):
    path = tmp_path / "calibration.json"
    save_rig(rig, path)
    monkeypatch.setenv("FISHLEN_CALIBRATION", str(path))
    with TestClient(app) as client:
        yield client


@pytest.fixture
def bare_client(monkeypatch):
    monkeypatch.delenv("FISHLEN_CALIBRATION", raising=False)
    with TestClient(app) as client:
        yield client


def test_health(client):
    assert client.get("/health").json() == {"status": "ok", "calibration": True}


def test_epipolar(client):
    response = client.post("/epipolar", json={"u": 1224.0, "v": 1024.0, "segments": 16})
    assert response.status_code == 200
    body = response.json()
    assert len(body["vertices"]) == 17
    assert body["depths_mm"][0] == pytest.approx(5.0)
    assert body["chord_error_px"] >= 0.0


def test_epipolar_rejects_bad_depths(client):
    response = client.post("/epipolar", json={"u": 1224.0, "v": 1024.0, "depth_min_mm": 50, "depth_max_mm": 10})
    assert response.status_code == 422
    response = client.post("/epipolar", json={"u": 1224.0, "v": 1024.0, "segments": 0})
    assert response.status_code == 422


def test_triangulate(client, rig):
    point = np.array([12.0, -7.0, 310.0])
    left = forward_project(rig.left, point)
    right = forward_project(rig.right, point)
    response = client.post("/triangulate", json={"left": list(left), "right": list(right)})
    assert response.status_code == 200
    body = response.json()
    assert body["point_mm"] == pytest.approx(point.tolist(), abs=1e-5)
    assert body["ray_gap_mm"] == pytest.approx(0.0, abs=1e-5)


def test_triangulate_needs_two_coordinates(client):
    assert client.post("/triangulate", json={"left": [1.0], "right": [1.0, 2.0]}).status_code == 422


def test_measure(client, rig):
    scene = generate_scene(3, rig, seed=31, frame_id=6)
    response = client.post(
        "/measure", json={"left": frame_to_dict(scene.left), "right": frame_to_dict(scene.right)}
    )
    assert response.status_code == 200
    body = response.json()
    assert body["frame_id"] == 6
    assert body["pairs"]

    truth = {(f.left_detection_id, f.right_detection_id): f.length_mm for f in scene.truth.fish}
    for pair in body["pairs"]:
        assert pair["pair_id"] == f"{pair['left_id']}+{pair['right_id']}"
        key = (pair["left_id"], pair["right_id"])
        if pair["status"] == "kept" and key in truth:
            assert pair["length_mm"] == pytest.approx(truth[key], abs=1e-4)


def test_measure_rejects_invalid_frames(client, rig):
    scene = generate_scene(1, rig, seed=2)
    left = frame_to_dict(scene.left)
    left["detections"][0]["quality"] = "low"
    response = client.post("/measure", json={"left": left, "right": frame_to_dict(scene.right)})
    assert response.status_code == 422


def test_endpoints_need_calibration(bare_client):
    assert bare_client.get("/health").json()["calibration"] is False
    assert bare_client.post("/epipolar", json={"u": 1.0, "v": 2.0}).status_code == 500
