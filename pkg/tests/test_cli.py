"""命令列：子命令、輸出檔與 exit code"""
import csv
import io
import json
import logging

import pytest

from cli import EXIT_CONFIG, EXIT_EMPTY, EXIT_OK, EXIT_PARSE, main
from geometry.calibration import save_rig
from simulation.scene import default_rig


@pytest.fixture(autouse=True)
def restore_logging():
    """main() 會以 force=True 重設 root logger，測試後還原"""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def scene_dir(tmp_path):
    out = tmp_path / "clean"
    assert main(["simulate", "--profile", "clean", "--out", str(out), "--frames", "2"]) == EXIT_OK
    return out


@pytest.fixture
def calibration(tmp_path):
    path = tmp_path / "calibration.json"
    save_rig(default_rig(), path)
    return path


def _csv(text):
    return list(csv.reader(io.StringIO(text)))


# ===== simulate / measure / ablate =====

def test_simulate_then_measure(tmp_path, scene_dir, capsys):
    assert sorted(p.name for p in scene_dir.iterdir()) == [
        "calibration.json", "detections.jsonl", "ground_truth.json", "pipeline.json"
    ]
    out = tmp_path / "results"
    code = main(["measure", "--config", str(scene_dir / "pipeline.json"), "--out", str(out), "--workers", "2"])
    assert code == EXIT_OK
    assert (out / "results.csv").exists()
    report = json.loads((out / "evaluation.json").read_text(encoding="utf-8"))
    assert report["n_ground_truth"] == 20
    assert "RMSE" in capsys.readouterr().out


def test_measure_with_explicit_paths(tmp_path, scene_dir):
    out = tmp_path / "explicit"
    code = main([
        "measure",
        "--calibration", str(scene_dir / "calibration.json"),
        "--detections", str(scene_dir / "detections.jsonl"),
        "--out", str(out),
        "--no-template-refine",
        "--gate-px", "120",
    ])
    assert code == EXIT_OK
    assert (out / "results.csv").exists()
    assert not (out / "evaluation.json").exists()


def test_ablate_prints_eight_rows(tmp_path, scene_dir, capsys):
    out = tmp_path / "ablation"
    assert main(["ablate", "--config", str(scene_dir / "pipeline.json"), "--out", str(out)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split()[:3] == ["Qu", "Te", "Di"]
    assert len(lines) == 1 + 8 + 1
    assert len(_csv((out / "ablation.csv").read_text(encoding="utf-8"))) == 9


# ===== exit codes =====

def test_missing_calibration_is_a_config_error(tmp_path, scene_dir):
    code = main(["measure", "--detections", str(scene_dir / "detections.jsonl"), "--out", str(tmp_path)])
    assert code == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["measure", "--config", str(tmp_path / "nope.toml")]) == EXIT_CONFIG


def test_broken_detection_file(tmp_path, scene_dir, capsys):
    broken = tmp_path / "broken.jsonl"
    first = (scene_dir / "detections.jsonl").read_text(encoding="utf-8").splitlines()[0]
    broken.write_text(first + "\n{\"frame_id\": \n", encoding="utf-8")
    code = main([
        "measure",
        "--calibration", str(scene_dir / "calibration.json"),
        "--detections", str(broken),
        "--out", str(tmp_path / "out"),
    ])
    assert code == EXIT_PARSE
    assert "line 2" in capsys.readouterr().err


def test_invalid_detection_is_a_parse_error(tmp_path, scene_dir):
    frame = json.loads((scene_dir / "detections.jsonl").read_text(encoding="utf-8").splitlines()[0])
    frame["detections"][0]["bbox"]["w"] = -1.0
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps(frame) + "\n", encoding="utf-8")
    code = main([
        "measure",
        "--calibration", str(scene_dir / "calibration.json"),
        "--detections", str(bad),
        "--out", str(tmp_path / "out"),
    ])
    assert code == EXIT_PARSE


def test_empty_detection_file(tmp_path, scene_dir):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    code = main([
        "measure",
        "--calibration", str(scene_dir / "calibration.json"),
        "--detections", str(empty),
        "--out", str(tmp_path / "out"),
    ])
    assert code == EXIT_EMPTY


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["dance"])


# ===== epipolar =====

def test_epipolar_csv(calibration, capsys):
    assert main(["epipolar", "--calibration", str(calibration), "--pixel", "1224", "1024"]) == EXIT_OK
    rows = _csv(capsys.readouterr().out)
    assert rows[0] == ["u", "v", "depth_mm"]
    assert len(rows) == 1 + 33
    depths = [float(r[2]) for r in rows[1:]]
    assert depths[0] == pytest.approx(5.0)
    assert depths[-1] == pytest.approx(500.0)
    assert depths == sorted(depths)


def test_epipolar_dense_to_file(tmp_path, calibration):
    out = tmp_path / "curve.csv"
    code = main([
        "epipolar", "--calibration", str(calibration), "--pixel", "1500", "700", "--dense", "--out", str(out)
    ])
    assert code == EXIT_OK
    assert len(_csv(out.read_text(encoding="utf-8"))) == 1 + 129


def test_epipolar_unit_indices_stay_on_the_row(tmp_path, capsys):
    path = tmp_path / "air.json"
    save_rig(default_rig(n_glass=1.0, n_water=1.0), path)
    assert main(["epipolar", "--calibration", str(path), "--pixel", "1500", "700", "--source", "right"]) == EXIT_OK
    rows = _csv(capsys.readouterr().out)[1:]
    assert all(float(v) == pytest.approx(700.0, abs=1e-5) for _, v, _ in rows)


def test_epipolar_calibration_from_environment(monkeypatch, calibration, capsys):
    monkeypatch.setenv("FISHLEN_CALIBRATION", str(calibration))
    assert main(["epipolar", "--pixel", "1224", "1024", "--segments", "8"]) == EXIT_OK
    assert len(_csv(capsys.readouterr().out)) == 1 + 9


def test_epipolar_without_calibration(monkeypatch):
    monkeypatch.delenv("FISHLEN_CALIBRATION", raising=False)
    assert main(["epipolar", "--pixel", "1224", "1024"]) == EXIT_CONFIG


@pytest.mark.parametrize(
    "extra",
    [["--segments", "0"], ["--depth-min", "0"], ["--depth-min", "300", "--depth-max", "200"]],
)
def test_epipolar_invalid_parameters(calibration, extra):
    assert main(["epipolar", "--calibration", str(calibration), "--pixel", "1224", "1024", *extra]) == EXIT_CONFIG
