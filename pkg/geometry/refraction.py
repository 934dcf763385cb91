"""
折射光線追蹤
- pixel → water ray：精確解 (air → glass → water 兩次 Snell)
- water point → pixel：數值解 (1D radial Newton + brentq fallback)

Port normal 一定經過相機中心 (d_glass 沿 normal 量測)，所以整個系統對
「相機中心 + normal」這條軸旋轉對稱，投影永遠可化簡為單變數的徑向方程式。
"""
import logging
from typing import Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import optimize

from errors import (
    NoConvergence,
    PointBehindCamera,
    PointBehindPort,
    RayParallelToPort,
    TotalInternalReflection,
)
from geometry.camera import (
    UNIT_TOLERANCE,
    FlatPortCamera,
    Pixel,
    RefractivePort,
    Vec3,
    WaterRay,
    as_vec3,
)

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 50
RESIDUAL_TOLERANCE_MM = 1e-9
# 與 port 幾乎平行的射線視為不會穿過玻璃
PARALLEL_EPS = 1e-12


def refract_direction(incident: Vec3, surface_normal: Vec3, n1: float, n2: float) -> Vec3:
    """
    向量形式的 Snell's law

    Args:
        incident: 入射單位方向
        surface_normal: 介面單位法向量，方向與光線前進方向一致 (incident·normal > 0)
        n1: 入射側折射率
        n2: 透射側折射率

    Returns:
        透射單位方向，與 incident、normal 共平面

    Raises:
        TotalInternalReflection: n1·sinθ1 / n2 > 1
    """
    incident = np.asarray(incident, dtype=np.float64)
    normal = np.asarray(surface_normal, dtype=np.float64)
    if abs(np.linalg.norm(incident) - 1.0) > UNIT_TOLERANCE:
        raise ValueError("incident direction must be unit length")
    if abs(np.linalg.norm(normal) - 1.0) > UNIT_TOLERANCE:
        raise ValueError("surface normal must be unit length")

    cos1 = float(incident @ normal)
    if cos1 <= 0.0:
        raise ValueError("surface normal must be oriented along propagation")

    # 用外積求 sin，小角度時比 1 - cos² 精確
    sin1 = float(np.linalg.norm(np.cross(incident, normal)))
    eta = n1 / n2
    sin2 = eta * sin1
    if sin2 > 1.0:
        raise TotalInternalReflection(n1, n2, sin1)

    cos2 = np.sqrt(max(0.0, 1.0 - sin2 * sin2))
    refracted = eta * incident + (cos2 - eta * cos1) * normal
    return refracted / np.linalg.norm(refracted)


def trace_pixel_ray(camera: FlatPortCamera, pixel: Pixel) -> WaterRay:
    """
    像素 → 水中射線

    相機中心 → 內側玻璃面 (air→glass) → 穿過 t_glass → 外側玻璃面 (glass→water)
    """
    if not (np.isfinite(pixel[0]) and np.isfinite(pixel[1])):
        raise ValueError(f"pixel must be finite, got {pixel}")

    port = camera.port
    normal = port.normal
    rotation = camera.pose.rotation

    air_dir = rotation.T @ camera.intrinsics.normalize(pixel)
    air_dir /= np.linalg.norm(air_dir)

    cos_air = float(air_dir @ normal)
    if cos_air <= PARALLEL_EPS:
        raise RayParallelToPort(f"pixel {tuple(pixel)} never reaches the port")

    inner_point = camera.center + (port.d_glass / cos_air) * air_dir
    glass_dir = refract_direction(air_dir, normal, port.n_air, port.n_glass)

    outer_point = inner_point + (port.t_glass / float(glass_dir @ normal)) * glass_dir
    water_dir = refract_direction(glass_dir, normal, port.n_glass, port.n_water)

    return WaterRay(origin=outer_point, direction=water_dir, normal=normal)


def _refract_many(directions: NDArray[np.float64], normal: Vec3, n1: float, n2: float):
    cos1 = directions @ normal
    eta = n1 / n2
    cos2 = np.sqrt(np.clip(1.0 - eta * eta * (1.0 - cos1 * cos1), 0.0, None))
    refracted = eta * directions + (cos2 - eta * cos1)[:, None] * normal
    return refracted / np.linalg.norm(refracted, axis=1, keepdims=True)


def trace_pixel_rays(
    camera: FlatPortCamera, pixels
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    trace_pixel_ray 的向量化版本 (渲染用)

    Returns:
        (origins (N, 3), directions (N, 3))
    """
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    port = camera.port
    normal = port.normal
    intr = camera.intrinsics

    cam_dirs = np.column_stack([
        (pixels[:, 0] - intr.cx) / intr.fx,
        (pixels[:, 1] - intr.cy) / intr.fy,
        np.ones(len(pixels)),
    ])
    air_dirs = cam_dirs @ camera.pose.rotation
    air_dirs /= np.linalg.norm(air_dirs, axis=1, keepdims=True)
    cos_air = air_dirs @ normal
    if np.any(cos_air <= PARALLEL_EPS):
        raise RayParallelToPort("some pixels never reach the port")
    if port.n_air > min(port.n_glass, port.n_water):
        # 空氣折射率較大時可能全反射，逐點走精確路徑
        rays = [trace_pixel_ray(camera, Pixel(u, v)) for u, v in pixels]
        return np.array([r.origin for r in rays]), np.array([r.direction for r in rays])

    inner = camera.center + (port.d_glass / cos_air)[:, None] * air_dirs
    glass_dirs = _refract_many(air_dirs, normal, port.n_air, port.n_glass)
    outer = inner + (port.t_glass / (glass_dirs @ normal))[:, None] * glass_dirs
    water_dirs = _refract_many(glass_dirs, normal, port.n_glass, port.n_water)
    return outer, water_dirs


def point_at_depth(ray: WaterRay, depth: float) -> Vec3:
    """沿水中射線取點，depth 沿 port normal 從外側玻璃面量起 (mm)"""
    if depth < 0:
        raise ValueError(f"depth must be non-negative, got {depth}")
    cos = float(ray.direction @ ray.normal)
    return ray.origin + (depth / cos) * ray.direction


def optical_axis(camera: FlatPortCamera) -> Vec3:
    """相機視線方向 (rig frame) = Rᵀ · (0, 0, 1)"""
    axis = camera.pose.rotation[2, :].copy()
    return axis / np.linalg.norm(axis)


# ===== Forward projection =====

def _ratios(port: RefractivePort) -> Tuple[float, float]:
    return port.n_air / port.n_glass, port.n_air / port.n_water


def _sine_limit(port: RefractivePort) -> float:
    """空氣中 sinθ 的上限：任何一層都不能全反射"""
    glass_ratio, water_ratio = _ratios(port)
    return min(1.0, 1.0 / glass_ratio, 1.0 / water_ratio)


def _radial_offset(s, port: RefractivePort, water_depth):
    """給定空氣中的 sinθ，射線在 water_depth 處離軸的徑向距離"""
    glass_ratio, water_ratio = _ratios(port)
    s = np.asarray(s, dtype=np.float64)
    air = s / np.sqrt(1.0 - s * s)
    glass = glass_ratio * s / np.sqrt(1.0 - (glass_ratio * s) ** 2)
    water = water_ratio * s / np.sqrt(1.0 - (water_ratio * s) ** 2)
    return port.d_glass * air + port.t_glass * glass + water_depth * water


def _radial_slope(s, port: RefractivePort, water_depth):
    glass_ratio, water_ratio = _ratios(port)
    s = np.asarray(s, dtype=np.float64)
    air = 1.0 / (1.0 - s * s) ** 1.5
    glass = glass_ratio / (1.0 - (glass_ratio * s) ** 2) ** 1.5
    water = water_ratio / (1.0 - (water_ratio * s) ** 2) ** 1.5
    return port.d_glass * air + port.t_glass * glass + water_depth * water


def _solve_air_sine(
    radial: NDArray[np.float64],
    water_depth: NDArray[np.float64],
    port: RefractivePort,
    max_iterations: int,
    tolerance: float,
) -> NDArray[np.float64]:
    """解 radial_offset(s) = r，回傳空氣中的 sinθ"""
    limit = _sine_limit(port)
    axial = port.d_glass + port.t_glass + water_depth
    # pinhole 猜測值，在折射後一定偏小
    s = radial / np.hypot(radial, axial)
    on_axis = radial <= 0.0
    s[on_axis] = 0.0

    for _ in range(max_iterations):
        residual = _radial_offset(s, port, water_depth) - radial
        done = on_axis | (np.abs(residual) < tolerance)
        if np.all(done):
            break
        step = residual / _radial_slope(s, port, water_depth)
        candidate = s - step
        # damping：不可越過全反射上限或變成負角度
        candidate = np.where(candidate >= limit, 0.5 * (s + limit), candidate)
        candidate = np.where(candidate < 0.0, 0.5 * s, candidate)
        s = np.where(done, s, candidate)

    # 最後再走一步 Newton，把殘差壓到機器精度
    residual = _radial_offset(s, port, water_depth) - radial
    polished = s - residual / _radial_slope(s, port, water_depth)
    polished = np.where(on_axis, 0.0, polished)
    valid = (polished >= 0.0) & (polished < limit)
    improved = valid & (
        np.abs(_radial_offset(np.where(valid, polished, 0.0), port, water_depth) - radial)
        <= np.abs(residual)
    )
    s = np.where(improved, polished, s)

    residual = np.abs(_radial_offset(s, port, water_depth) - radial)
    stalled = np.flatnonzero(~on_axis & (residual >= tolerance))
    for index in stalled:
        s[index] = _bracket_air_sine(
            float(radial[index]), float(water_depth[index]), port, limit, max_iterations, tolerance
        )
    return s


def _bracket_air_sine(
    radial: float,
    water_depth: float,
    port: RefractivePort,
    limit: float,
    max_iterations: int,
    tolerance: float,
) -> float:
    """Newton 停滯時的 bisection 後備方案"""
    upper = limit * (1.0 - 1e-12)

    def residual(s: float) -> float:
        return float(_radial_offset(s, port, water_depth)) - radial

    logger.debug("⚠️ Newton 停滯，改用 brentq (r=%.6f, z=%.6f)", radial, water_depth)
    try:
        root = optimize.brentq(residual, 0.0, upper, xtol=1e-16, rtol=8.9e-16, maxiter=200)
    except (ValueError, RuntimeError):
        raise NoConvergence(max_iterations, abs(residual(0.0)))
    final = abs(residual(root))
    if final >= tolerance:
        raise NoConvergence(max_iterations, final)
    return root


def forward_project_many(
    camera: FlatPortCamera,
    points,
    max_iterations: int = MAX_ITERATIONS,
    tolerance: float = RESIDUAL_TOLERANCE_MM,
) -> NDArray[np.float64]:
    """
    水中 3D 點 (N, 3) → 去畸變像素 (N, 2)

    Raises:
        PointBehindPort: 任一點不在外側玻璃面的水側
        PointBehindCamera: 折射後的空氣射線在相機後方
        NoConvergence: 數值解失敗
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    port = camera.port
    normal = port.normal
    center = camera.center

    relative = points - center
    axial = relative @ normal
    water_depth = axial - port.d_glass - port.t_glass
    if np.any(water_depth <= 0.0):
        worst = int(np.argmin(water_depth))
        raise PointBehindPort(
            f"point {points[worst].tolist()} is {water_depth[worst]:.6f} mm beyond the outer glass"
        )

    radial_vec = relative - axial[:, None] * normal
    radial = np.linalg.norm(radial_vec, axis=1)
    sine = _solve_air_sine(radial, water_depth, port, max_iterations, tolerance)

    unit_radial = np.zeros_like(radial_vec)
    off_axis = radial > 0.0
    unit_radial[off_axis] = radial_vec[off_axis] / radial[off_axis, None]

    cosine = np.sqrt(1.0 - sine * sine)
    air_dir = cosine[:, None] * normal + sine[:, None] * unit_radial
    cam_dir = air_dir @ camera.pose.rotation.T
    if np.any(cam_dir[:, 2] <= 0.0):
        raise PointBehindCamera("refracted air ray points behind the camera")

    intr = camera.intrinsics
    u = intr.fx * cam_dir[:, 0] / cam_dir[:, 2] + intr.cx
    v = intr.fy * cam_dir[:, 1] / cam_dir[:, 2] + intr.cy
    return np.column_stack([u, v])


def forward_project(
    camera: FlatPortCamera,
    point,
    max_iterations: int = MAX_ITERATIONS,
    tolerance: float = RESIDUAL_TOLERANCE_MM,
) -> Pixel:
    """單點版 forward_project_many"""
    uv = forward_project_many(camera, as_vec3(point)[None, :], max_iterations, tolerance)[0]
    return Pixel(float(uv[0]), float(uv[1]))
