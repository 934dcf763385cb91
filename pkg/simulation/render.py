"""
合成影像：每條魚是身體平面上的橢圓，貼上以身體座標定義的程序化紋理，
所以同一個身體點在左右影像看起來一樣 (template matching 才有東西可比)
"""
import math
from typing import List, Sequence

import numpy as np

from geometry.camera import FlatPortCamera
from geometry.refraction import forward_project_many, trace_pixel_rays
from refinement.images import GrayImage
from simulation.scene import BODY_HALF_HEIGHT, SyntheticFish

BACKGROUND_LEVEL = 40
EDGE_EPS = 1e-9


class BodyTexture:
    """身體座標 (mm) → 亮度，幾個隨機方向的正弦波相加"""

    def __init__(self, seed: Sequence[int], waves: int = 4):
        rng = np.random.default_rng(seed)
        angles = rng.uniform(0.0, math.pi, size=waves)
        periods = rng.uniform(2.0, 7.0, size=waves)       # mm
        self.frequencies = np.column_stack([np.cos(angles), np.sin(angles)]) * (2.0 * math.pi / periods)[:, None]
        self.phases = rng.uniform(0.0, 2.0 * math.pi, size=waves)
        self.amplitudes = rng.uniform(15.0, 35.0, size=waves)

    def __call__(self, body_xy: np.ndarray) -> np.ndarray:
        waves = np.sin(body_xy @ self.frequencies.T + self.phases) * self.amplitudes
        return 140.0 + waves.sum(axis=1)


def _footprint(camera: FlatPortCamera, fish: SyntheticFish, margin: int = 4):
    """以身體橢圓的外框投影估計要渲染的像素範圍"""
    half = 0.5 * fish.length_mm
    hh = BODY_HALF_HEIGHT * fish.length_mm
    corners = np.array([[x, y, 0.0] for x in (0.0, fish.length_mm) for y in (-hh, hh)])
    mid = np.array([half, 0.0, 0.0])
    world = (corners - mid) @ fish.rotation.T + fish.position
    pixels = forward_project_many(camera, world)
    intr = camera.intrinsics
    u0 = max(0, int(math.floor(pixels[:, 0].min())) - margin)
    u1 = min(intr.image_width - 1, int(math.ceil(pixels[:, 0].max())) + margin)
    v0 = max(0, int(math.floor(pixels[:, 1].min())) - margin)
    v1 = min(intr.image_height - 1, int(math.ceil(pixels[:, 1].max())) + margin)
    return u0, u1, v0, v1


def render_view(
    camera: FlatPortCamera,
    fish: Sequence[SyntheticFish],
    textures: Sequence[BodyTexture],
) -> GrayImage:
    """由遠到近畫上每條魚 (遠的先畫，近的覆蓋)"""
    intr = camera.intrinsics
    canvas = np.full((intr.image_height, intr.image_width), float(BACKGROUND_LEVEL))
    order = sorted(range(len(fish)), key=lambda i: -float(fish[i].position @ camera.port.normal))
    for i in order:
        body, texture = fish[i], textures[i]
        u0, u1, v0, v1 = _footprint(camera, body)
        if u0 > u1 or v0 > v1:
            continue
        vv, uu = np.mgrid[v0: v1 + 1, u0: u1 + 1]
        pixels = np.column_stack([uu.ravel(), vv.ravel()]).astype(np.float64)
        origins, directions = trace_pixel_rays(camera, pixels)

        plane_normal = body.rotation[:, 2]
        facing = directions @ plane_normal
        visible = np.abs(facing) > EDGE_EPS
        s = np.where(visible, ((body.position - origins) @ plane_normal) / np.where(visible, facing, 1.0), -1.0)
        hits = origins + s[:, None] * directions
        local = body.to_body(hits)
        half = 0.5 * body.length_mm
        hh = BODY_HALF_HEIGHT * body.length_mm
        inside = visible & (s > 0) & (((local[:, 0] - half) / half) ** 2 + (local[:, 1] / hh) ** 2 <= 1.0)
        if not np.any(inside):
            continue
        values = texture(local[inside, :2])
        rows = vv.ravel()[inside]
        cols = uu.ravel()[inside]
        canvas[rows, cols] = values
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def render_stereo(
    left: FlatPortCamera,
    right: FlatPortCamera,
    fish: Sequence[SyntheticFish],
    seed: int,
) -> List[GrayImage]:
    """回傳 [left, right]，紋理種子由 (seed, 魚的 index) 決定"""
    textures = [BodyTexture([seed, i]) for i in range(len(fish))]
    return [render_view(left, fish, textures), render_view(right, fish, textures)]
