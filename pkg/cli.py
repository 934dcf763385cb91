"""
fishlength 命令列介面

    python cli.py simulate --profile clean --out data/clean
    python cli.py measure --config data/clean/pipeline.json
    python cli.py ablate --config data/noisy/pipeline.json
    python cli.py epipolar --calibration data/clean/calibration.json --pixel 1224 1024
    python cli.py serve --port 8081

Exit codes: 0 成功, 2 設定錯誤, 3 偵測檔解析/驗證錯誤, 4 沒有可評估的結果, 1 其他領域錯誤
"""
import argparse
import csv
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from errors import ConfigError, DetectionFileError, EmptyEvaluation, FishLengthError
from geometry.calibration import load_rig
from geometry.camera import Pixel
from geometry.epipolar import DENSE_FACTOR, compute_epipolar_curve, curve_rows
from pipeline.config import env_log_level, load_config
from pipeline.runner import run_ablate, run_measure
from simulation.benchmark import PROFILES, export_suite, standard_benchmark

load_dotenv()

logger = logging.getLogger("fishlength")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_EMPTY = 4


def _setup_logging(level: str, trace: bool = False) -> None:
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr, force=True)
    trace_logger = logging.getLogger("fishlength.trace")
    trace_logger.handlers.clear()
    trace_logger.propagate = False
    if trace:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(message)s"))
        trace_logger.addHandler(handler)
        trace_logger.setLevel(logging.INFO)
    else:
        trace_logger.setLevel(logging.CRITICAL)


def _add_pipeline_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML / JSON pipeline config")
    parser.add_argument("--calibration", help="rig calibration JSON")
    parser.add_argument("--detections", help="detection JSON-lines file")
    parser.add_argument("--images", dest="image_dir", help="directory that image_path entries are relative to")
    parser.add_argument("--ground-truth", help="ground-truth JSON for evaluation")
    parser.add_argument("--out", dest="output_dir", help="output directory")
    parser.add_argument("--gate-px", type=float, help="epipolar gate / normalizer (default 150)")
    parser.add_argument("--tau-max", type=float, help="maximum total matching cost (default inf)")
    parser.add_argument("--segments", type=int, help="epipolar curve segments (default 32)")
    parser.add_argument("--depth-min", type=float, help="min water depth behind the glass, mm")
    parser.add_argument("--depth-max", type=float, help="max water depth behind the glass, mm")
    parser.add_argument("--max-ray-gap", type=float, help="drop triangulations with a larger gap, mm")
    parser.add_argument("--no-quality-filter", action="store_true", help="disable Qu")
    parser.add_argument("--no-template-refine", action="store_true", help="disable Te")
    parser.add_argument("--no-direction-filter", action="store_true", help="disable Di (aspect + direction)")
    parser.add_argument("--distorted", action="store_true", help="detections are in distorted pixel coordinates")
    parser.add_argument("--workers", type=int, help="worker pool size (env FISHLEN_WORKERS)")
    parser.add_argument("--trace", action="store_true", help="JSON log line per dropped detection / pair")


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """只收集使用者實際給的 flag，None 不覆寫設定檔"""
    overrides: Dict[str, Any] = {
        "calibration": args.calibration,
        "detections": args.detections,
        "image_dir": args.image_dir,
        "ground_truth": args.ground_truth,
        "output_dir": args.output_dir,
        "workers": args.workers,
        "matching": {
            "gate_px": args.gate_px,
            "tau_max": args.tau_max,
            "segments": args.segments,
            "depth_min_mm": args.depth_min,
            "depth_max_mm": args.depth_max,
        },
        "measurement": {"max_ray_gap_mm": args.max_ray_gap},
    }
    toggles = {}
    if args.no_quality_filter:
        toggles["quality"] = False
    if args.no_template_refine:
        toggles["template"] = False
    if args.no_direction_filter:
        toggles["direction"] = False
    if toggles:
        overrides["toggles"] = toggles
    if args.distorted:
        overrides["detections_distorted"] = True
    if args.trace:
        overrides["trace"] = True
    return overrides


def cmd_measure(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    output = run_measure(config)
    print(f"✅ results: {output.results_csv}")
    if output.report is not None:
        report = output.report
        print(f"✅ evaluation: {output.evaluation_json}")
        print(
            f"📐 RMSE {report.rmse_mm:.4f} mm | bad matches {report.bad_match_pct:.2f}% | "
            f"measured {report.n_measured} / ground truth {report.n_ground_truth}"
        )
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    rows, path = run_ablate(config)
    print(f"{'Qu':>3} {'Te':>3} {'Di':>3} {'RMSE mm':>10} {'bad %':>8} {'n':>6}")
    for row in rows:
        t = row.toggles
        print(
            f"{'x' if t.quality else '':>3} {'x' if t.template else '':>3} {'x' if t.direction else '':>3} "
            f"{row.rmse_mm:>10.4f} {row.bad_match_pct:>8.2f} {row.n_measured:>6d}"
        )
    print(f"✅ ablation table: {path}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    suite = standard_benchmark(args.profile, args.frames)
    exported = export_suite(suite, args.out, images=args.images)
    print(f"✅ scene files written to {args.out}")
    print(f"   measure with: python cli.py measure --config {exported.config}")
    return EXIT_OK


def cmd_epipolar(args: argparse.Namespace) -> int:
    calibration = args.calibration or os.getenv("FISHLEN_CALIBRATION")
    if not calibration:
        raise ConfigError("no calibration given (--calibration or FISHLEN_CALIBRATION)")
    if args.depth_min <= 0 or args.depth_max <= args.depth_min or args.segments < 1:
        raise ConfigError(
            f"invalid curve parameters: depth ({args.depth_min}, {args.depth_max}), segments {args.segments}"
        )
    rig = load_rig(calibration)
    source, target = (rig.left, rig.right) if args.source == "left" else (rig.right, rig.left)
    segments = args.segments * (DENSE_FACTOR if args.dense else 1)
    curve = compute_epipolar_curve(
        source, target, Pixel(*args.pixel), (args.depth_min, args.depth_max), segments
    )
    logger.info("📐 %d vertices, chord error %.4f px", len(curve.vertices), curve.chord_error)

    handle = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["u", "v", "depth_mm"])
        for u, v, depth in curve_rows(curve):
            writer.writerow([f"{u:.6f}", f"{v:.6f}", f"{depth:.6f}"])
    finally:
        if args.out:
            handle.close()
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("main:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fishlength",
        description="Refraction-aware stereo fish length measurement",
    )
    parser.add_argument("--log-level", default=None, help="logging level (env FISHLEN_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="cmd", required=True)

    measure = sub.add_parser("measure", help="match, filter and measure detections")
    _add_pipeline_args(measure)
    measure.set_defaults(func=cmd_measure)

    ablate = sub.add_parser("ablate", help="run all 8 Qu/Te/Di combinations")
    _add_pipeline_args(ablate)
    ablate.set_defaults(func=cmd_ablate)

    simulate = sub.add_parser("simulate", help="write a synthetic benchmark scene suite")
    simulate.add_argument("--profile", choices=sorted(PROFILES), default="clean")
    simulate.add_argument("--out", required=True, help="output directory")
    simulate.add_argument("--frames", type=int, default=None, help="only the first N frames")
    simulate.add_argument("--images", action="store_true", help="also render PGM image pairs")
    simulate.set_defaults(func=cmd_simulate)

    epipolar = sub.add_parser("epipolar", help="export an epipolar curve as CSV")
    epipolar.add_argument("--calibration", help="rig calibration JSON (env FISHLEN_CALIBRATION)")
    epipolar.add_argument("--pixel", type=float, nargs=2, required=True, metavar=("U", "V"))
    epipolar.add_argument("--source", choices=["left", "right"], default="left")
    epipolar.add_argument("--depth-min", type=float, default=5.0)
    epipolar.add_argument("--depth-max", type=float, default=float(os.getenv("FISHLEN_DEPTH_MAX_MM", "500")))
    epipolar.add_argument("--segments", type=int, default=32)
    epipolar.add_argument("--dense", action="store_true", help=f"{DENSE_FACTOR}x the segments")
    epipolar.add_argument("--out", help="CSV path (default stdout)")
    epipolar.set_defaults(func=cmd_epipolar)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8081)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.log_level or env_log_level(), trace=getattr(args, "trace", False))
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"❌ config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DetectionFileError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_PARSE
    except EmptyEvaluation as e:
        print(f"❌ nothing to evaluate: {e}", file=sys.stderr)
        return EXIT_EMPTY
    except FishLengthError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
