"""
Flat-port 相機模型
針孔內參 + 外參 + 兩層折射介面 (air → glass → water)

座標慣例：
- rig frame = 左相機座標系 (mm)
- CameraPose 把 rig frame 的點轉到相機座標系：X_cam = R · X_rig + t
- port normal 以 rig frame 表示，方向從相機指向水
"""
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

Vec3 = NDArray[np.float64]

UNIT_TOLERANCE = 1e-9


class Pixel(NamedTuple):
    """去畸變後的影像座標 (px)，不做邊界裁切"""
    u: float
    v: float


def as_vec3(values) -> Vec3:
    vec = np.asarray(values, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"non-finite vector: {vec}")
    return vec


@dataclass(frozen=True)
class PinholeIntrinsics:
    """針孔內參，radial_distortion 只在 ingest 邊界使用"""
    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int
    radial_distortion: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive: fx={self.fx} fy={self.fy}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image size must be positive")
        if not (0 < self.cx < self.image_width and 0 < self.cy < self.image_height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside "
                f"{self.image_width}x{self.image_height} sensor"
            )

    @property
    def matrix(self) -> NDArray[np.float64]:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def normalize(self, pixel: Pixel) -> NDArray[np.float64]:
        """像素 → 相機座標的齊次方向 (x, y, 1)"""
        return np.array(
            [(pixel[0] - self.cx) / self.fx, (pixel[1] - self.cy) / self.fy, 1.0]
        )

    def to_pixel(self, x: float, y: float) -> Pixel:
        return Pixel(self.fx * x + self.cx, self.fy * y + self.cy)

    def contains(self, pixel: Pixel, margin: float = 0.0) -> bool:
        return (
            margin <= pixel[0] <= self.image_width - 1 - margin
            and margin <= pixel[1] <= self.image_height - 1 - margin
        )

    def distort(self, pixel: Pixel) -> Pixel:
        """去畸變座標 → 原始影像座標"""
        if not self.radial_distortion:
            return Pixel(float(pixel[0]), float(pixel[1]))
        k1, k2 = self.radial_distortion
        x, y, _ = self.normalize(pixel)
        r2 = x * x + y * y
        scale = 1.0 + k1 * r2 + k2 * r2 * r2
        return self.to_pixel(x * scale, y * scale)

    def undistort(self, pixel: Pixel, iterations: int = 20) -> Pixel:
        """原始影像座標 → 去畸變座標 (fixed-point iteration)"""
        if not self.radial_distortion:
            return Pixel(float(pixel[0]), float(pixel[1]))
        k1, k2 = self.radial_distortion
        xd, yd, _ = self.normalize(pixel)
        x, y = xd, yd
        for _ in range(iterations):
            r2 = x * x + y * y
            scale = 1.0 + k1 * r2 + k2 * r2 * r2
            x, y = xd / scale, yd / scale
        return self.to_pixel(x, y)


@dataclass(frozen=True)
class RefractivePort:
    """
    平面玻璃 port
    d_glass: 相機中心沿 normal 到內側 (空氣側) 玻璃面的距離
    t_glass: 玻璃厚度，必填，不提供預設值
    """
    n_air: float
    n_glass: float
    n_water: float
    d_glass: float
    t_glass: float
    normal: Vec3 = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        for name in ("n_air", "n_glass", "n_water"):
            if getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_glass <= 0:
            raise ValueError(f"d_glass must be positive, got {self.d_glass}")
        if self.t_glass <= 0:
            raise ValueError(f"t_glass must be positive, got {self.t_glass}")
        normal = as_vec3(self.normal)
        if abs(np.linalg.norm(normal) - 1.0) > UNIT_TOLERANCE:
            raise ValueError(f"port normal must be unit length, got |n|={np.linalg.norm(normal)}")
        object.__setattr__(self, "normal", normal)


@dataclass(frozen=True)
class CameraPose:
    """rig frame → camera frame 的剛體轉換"""
    rotation: NDArray[np.float64] = field(default_factory=lambda: np.eye(3))
    translation: Vec3 = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > UNIT_TOLERANCE:
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > UNIT_TOLERANCE:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", as_vec3(self.translation))

    @property
    def center(self) -> Vec3:
        """相機中心在 rig frame 的位置"""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class FlatPortCamera:
    """Axial camera：針孔相機 + 平面折射 port"""
    intrinsics: PinholeIntrinsics
    pose: CameraPose
    port: RefractivePort
    name: str = "camera"

    @property
    def center(self) -> Vec3:
        return self.pose.center

    @property
    def inner_offset(self) -> float:
        """內側玻璃面沿 normal 的位置 (n·X)"""
        return float(self.port.normal @ self.center) + self.port.d_glass

    @property
    def outer_offset(self) -> float:
        """外側玻璃面沿 normal 的位置 (n·X)"""
        return self.inner_offset + self.port.t_glass

    def with_indices(self, n_air: float, n_glass: float, n_water: float) -> "FlatPortCamera":
        """同一幾何，換一組折射率 (測試 pinhole degeneracy 用)"""
        port = RefractivePort(
            n_air=n_air,
            n_glass=n_glass,
            n_water=n_water,
            d_glass=self.port.d_glass,
            t_glass=self.port.t_glass,
            normal=self.port.normal,
        )
        return FlatPortCamera(self.intrinsics, self.pose, port, self.name)


@dataclass(frozen=True)
class StereoRig:
    left: FlatPortCamera
    right: FlatPortCamera


@dataclass(frozen=True)
class WaterRay:
    """外側玻璃面上的起點 + 水中單位方向 (rig frame)"""
    origin: Vec3
    direction: Vec3
    normal: Vec3
