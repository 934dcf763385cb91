"""
折射下的 epipolar curve
來源像素的水中射線在一組深度取樣，投影到目標相機，連成 polyline
"""
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from geometry.camera import FlatPortCamera, Pixel
from geometry.refraction import forward_project_many, point_at_depth, trace_pixel_ray

DEFAULT_SEGMENTS = 32
DEFAULT_DEPTH_MIN_MM = 5.0
DEFAULT_DEPTH_MAX_MM = 500.0
# chord error 的參考取樣密度
DENSE_FACTOR = 4


@dataclass(frozen=True)
class EpipolarCurve:
    """目標影像中的 piecewise-linear epipolar curve"""
    vertices: NDArray[np.float64]        # (segments + 1, 2)
    depths: NDArray[np.float64]          # 每個 vertex 的水深 (mm)，嚴格遞增
    depth_range: Tuple[float, float]
    source_pixel: Pixel
    chord_error: float = 0.0             # 與 4 倍密度取樣比較的最大偏差 (px)

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        depths = np.asarray(self.depths, dtype=np.float64).reshape(-1)
        if len(vertices) < 2:
            raise ValueError("an epipolar curve needs at least two vertices")
        if len(depths) != len(vertices):
            raise ValueError("one depth per vertex is required")
        if not np.all(np.isfinite(vertices)):
            raise ValueError("curve vertices must be finite")
        if np.any(np.diff(depths) <= 0.0):
            raise ValueError("curve depths must be strictly increasing")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "depths", depths)

    @property
    def segment_count(self) -> int:
        return len(self.vertices) - 1


@dataclass(frozen=True)
class CurveQuery:
    closest_point: Pixel
    distance: float
    segment_index: int


def _project_depths(
    source_cam: FlatPortCamera,
    target_cam: FlatPortCamera,
    pixel: Pixel,
    depths: NDArray[np.float64],
) -> NDArray[np.float64]:
    ray = trace_pixel_ray(source_cam, pixel)
    points = np.array([point_at_depth(ray, float(z)) for z in depths])
    return forward_project_many(target_cam, points)


def compute_epipolar_curve(
    source_cam: FlatPortCamera,
    target_cam: FlatPortCamera,
    pixel: Pixel,
    depth_range: Tuple[float, float],
    segments: int = DEFAULT_SEGMENTS,
) -> EpipolarCurve:
    """
    計算 source_cam 中 pixel 在 target_cam 的 epipolar curve

    深度在水中均勻取樣 (不是在 disparity 上均勻)；同時以 4 倍密度取樣
    估計 polyline 的 chord error。
    """
    z_min, z_max = float(depth_range[0]), float(depth_range[1])
    if z_min <= 0.0 or z_max <= z_min:
        raise ValueError(f"invalid depth range ({z_min}, {z_max})")
    if segments < 1:
        raise ValueError(f"segments must be >= 1, got {segments}")

    dense_depths = np.linspace(z_min, z_max, segments * DENSE_FACTOR + 1)
    dense = _project_depths(source_cam, target_cam, pixel, dense_depths)
    # 粗取樣就是密取樣每 DENSE_FACTOR 個取一個，保證兩者深度一致
    vertices = dense[::DENSE_FACTOR]
    depths = dense_depths[::DENSE_FACTOR]

    curve = EpipolarCurve(
        vertices=vertices,
        depths=depths,
        depth_range=(z_min, z_max),
        source_pixel=Pixel(float(pixel[0]), float(pixel[1])),
    )
    chord_error = float(np.max(distances_to_curve(curve, dense))) if len(dense) else 0.0
    object.__setattr__(curve, "chord_error", chord_error)
    return curve


def _segment_projection(curve: EpipolarCurve, queries: NDArray[np.float64]):
    """每個 query 對每個 segment 的最近點，回傳 (points (M,S,2), distances (M,S))"""
    starts = curve.vertices[:-1]
    deltas = curve.vertices[1:] - starts
    lengths_sq = np.einsum("ij,ij->i", deltas, deltas)
    offsets = queries[:, None, :] - starts[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.einsum("msk,sk->ms", offsets, deltas) / lengths_sq
    t = np.where(lengths_sq > 0.0, np.clip(t, 0.0, 1.0), 0.0)
    points = starts[None, :, :] + t[:, :, None] * deltas[None, :, :]
    distances = np.linalg.norm(queries[:, None, :] - points, axis=2)
    return points, distances


def distances_to_curve(curve: EpipolarCurve, queries) -> NDArray[np.float64]:
    """批次版距離計算 (M, 2) → (M,)，結果與 closest_point_on_curve 相同"""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if len(queries) == 0:
        return np.zeros(0)
    _, distances = _segment_projection(curve, queries)
    return distances.min(axis=1)


def closest_point_on_curve(curve: EpipolarCurve, query: Pixel) -> CurveQuery:
    """所有 segment 中最近的點；距離相同時取最小的 segment_index"""
    points, distances = _segment_projection(curve, np.asarray(query, dtype=np.float64)[None, :])
    index = int(np.argmin(distances[0]))
    closest = points[0, index]
    return CurveQuery(
        closest_point=Pixel(float(closest[0]), float(closest[1])),
        distance=float(distances[0, index]),
        segment_index=index,
    )


CurveProvider = Callable[[Pixel], EpipolarCurve]


class EpipolarCurveProvider:
    """
    左影像像素 → 右影像 epipolar curve
    matching 與 refinement 共用同一組深度範圍與 segment 數
    """

    def __init__(
        self,
        source_cam: FlatPortCamera,
        target_cam: FlatPortCamera,
        depth_range: Tuple[float, float],
        segments: int = DEFAULT_SEGMENTS,
    ):
        self.source_cam = source_cam
        self.target_cam = target_cam
        self.depth_range = depth_range
        self.segments = segments

    def __call__(self, pixel: Pixel) -> EpipolarCurve:
        return compute_epipolar_curve(
            self.source_cam, self.target_cam, pixel, self.depth_range, self.segments
        )


def curve_rows(curve: EpipolarCurve) -> Sequence[Tuple[float, float, float]]:
    """CSV 匯出用的 (u, v, depth_mm)"""
    return [(float(u), float(v), float(z)) for (u, v), z in zip(curve.vertices, curve.depths)]
