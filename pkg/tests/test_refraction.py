"""Flat-port 折射模型：Snell、射線追蹤、forward projection"""
import math

import numpy as np
import pytest

from errors import PointBehindPort, TotalInternalReflection
from geometry.camera import CameraPose, FlatPortCamera, PinholeIntrinsics, Pixel, RefractivePort
from geometry.refraction import (
    forward_project,
    forward_project_many,
    optical_axis,
    point_at_depth,
    refract_direction,
    trace_pixel_ray,
    trace_pixel_rays,
)
from simulation.scene import default_rig

Z = np.array([0.0, 0.0, 1.0])


def _sin_to_normal(direction, normal=Z) -> float:
    return float(np.linalg.norm(np.cross(direction, normal)))


# ===== refract_direction =====

def test_normal_incidence_is_unchanged():
    out = refract_direction(Z, Z, 1.0, 1.33)
    assert out == pytest.approx([0.0, 0.0, 1.0], abs=1e-15)


def test_thirty_degrees_into_glass():
    theta = math.radians(30.0)
    incident = np.array([math.sin(theta), 0.0, math.cos(theta)])
    out = refract_direction(incident, Z, 1.0, 1.5)
    expected = math.asin(0.5 / 1.5)
    assert math.atan2(out[0], out[2]) == pytest.approx(expected, abs=1e-12)
    assert out[1] == pytest.approx(0.0, abs=1e-15)
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)


def test_total_internal_reflection():
    theta = math.radians(60.0)
    incident = np.array([math.sin(theta), 0.0, math.cos(theta)])
    with pytest.raises(TotalInternalReflection) as info:
        refract_direction(incident, Z, 1.33, 1.0)
    assert info.value.n1 == 1.33


def test_refract_rejects_non_unit_input():
    with pytest.raises(ValueError):
        refract_direction(np.array([0.0, 0.0, 2.0]), Z, 1.0, 1.5)


def _unit_rows(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_snell_invariants_on_random_refractions():
    rng = np.random.default_rng(2024)
    n = 10_000
    normals = _unit_rows(rng, n)
    tangents = np.cross(normals, _unit_rows(rng, n))
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
    n1 = rng.uniform(1.0, 1.6, n)
    n2 = rng.uniform(1.0, 1.6, n)
    # 入射角留在臨界角以內
    sin1 = rng.uniform(0.0, 0.999, n) * np.minimum(1.0, n2 / n1)
    incident = np.sqrt(1.0 - sin1**2)[:, None] * normals + sin1[:, None] * tangents
    incident /= np.linalg.norm(incident, axis=1, keepdims=True)

    out = np.array([refract_direction(d, m, a, b) for d, m, a, b in zip(incident, normals, n1, n2)])

    sin_in = np.linalg.norm(np.cross(incident, normals), axis=1)
    sin_out = np.linalg.norm(np.cross(out, normals), axis=1)
    assert float(np.max(np.abs(n1 * sin_in - n2 * sin_out))) < 1e-12
    coplanarity = np.einsum("ij,ij->i", np.cross(incident, normals), out)
    assert float(np.max(np.abs(coplanarity))) < 1e-12
    assert np.all(np.einsum("ij,ij->i", out, normals) > 0.0)


@pytest.mark.parametrize("n1, n2", [(1.33, 1.0), (1.5, 1.0), (1.5, 1.33)])
def test_total_internal_reflection_at_the_critical_angle(n1, n2):
    critical = math.asin(n2 / n1)

    def incident(theta: float) -> np.ndarray:
        return np.array([math.sin(theta), 0.0, math.cos(theta)])

    grazing = refract_direction(incident(critical - 1e-9), Z, n1, n2)
    assert grazing[0] > 0.999
    with pytest.raises(TotalInternalReflection):
        refract_direction(incident(critical + 1e-9), Z, n1, n2)


# ===== trace_pixel_ray =====

def test_axial_pixel_goes_straight(rig):
    cam = rig.left
    ray = trace_pixel_ray(cam, Pixel(cam.intrinsics.cx, cam.intrinsics.cy))
    assert ray.origin == pytest.approx([0.0, 0.0, 48.0], abs=1e-12)
    assert ray.direction == pytest.approx([0.0, 0.0, 1.0], abs=1e-12)


def test_unit_indices_reduce_to_pinhole(rig):
    cam = rig.right.with_indices(1.0, 1.0, 1.0)
    pixel = Pixel(310.5, 1800.25)
    ray = trace_pixel_ray(cam, pixel)
    pinhole = cam.pose.rotation.T @ cam.intrinsics.normalize(pixel)
    pinhole /= np.linalg.norm(pinhole)
    assert ray.direction == pytest.approx(pinhole, abs=1e-12)
    offset = ray.origin - cam.center
    assert np.linalg.norm(np.cross(offset / np.linalg.norm(offset), pinhole)) < 1e-9


def test_snell_holds_across_the_port(rig):
    cam = rig.left
    port = cam.port
    for pixel in [Pixel(100.0, 200.0), Pixel(2300.0, 1900.0), Pixel(1500.0, 40.0)]:
        ray = trace_pixel_ray(cam, pixel)
        air = cam.intrinsics.normalize(pixel)
        air /= np.linalg.norm(air)
        assert port.n_air * _sin_to_normal(air) == pytest.approx(
            port.n_water * _sin_to_normal(ray.direction), abs=1e-12
        )
        # 起點在外側玻璃面上
        assert float(ray.origin @ port.normal) == pytest.approx(cam.outer_offset, abs=1e-9)


def test_vectorized_trace_matches_single_rays():
    rig = default_rig(port_tilt_deg=4.0)
    pixels = np.array([[12.0, 30.0], [1224.0, 1024.0], [2400.0, 2000.0]])
    origins, directions = trace_pixel_rays(rig.right, pixels)
    for (u, v), origin, direction in zip(pixels, origins, directions):
        ray = trace_pixel_ray(rig.right, Pixel(u, v))
        assert origin == pytest.approx(ray.origin, abs=1e-9)
        assert direction == pytest.approx(ray.direction, abs=1e-12)


def test_deviation_grows_with_incidence(rig):
    cam = rig.left
    intr = cam.intrinsics
    us = np.arange(intr.cx, intr.image_width, 25.0)
    air = np.arctan((us - intr.cx) / intr.fx)
    water = np.array([
        math.atan2(_sin_to_normal(d), float(d @ Z))
        for d in (trace_pixel_ray(cam, Pixel(u, intr.cy)).direction for u in us)
    ])
    assert water[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(water[1:] < air[1:])
    assert np.all(np.diff(air - water) > 0.0)


# ===== point_at_depth =====

def test_point_at_depth(rig):
    axial = trace_pixel_ray(rig.left, Pixel(1224.0, 1024.0))
    assert point_at_depth(axial, 0.0) == pytest.approx(axial.origin)
    assert point_at_depth(axial, 100.0) == pytest.approx(axial.origin + [0.0, 0.0, 100.0])

    oblique = trace_pixel_ray(rig.left, Pixel(200.0, 300.0))
    point = point_at_depth(oblique, 123.0)
    assert float((point - oblique.origin) @ oblique.normal) == pytest.approx(123.0, abs=1e-9)

    with pytest.raises(ValueError):
        point_at_depth(oblique, -1.0)


# ===== forward projection =====

def test_on_axis_point_projects_to_principal_point(rig):
    uv = forward_project(rig.left, [0.0, 0.0, 300.0])
    assert uv.u == pytest.approx(1224.0, abs=1e-9)
    assert uv.v == pytest.approx(1024.0, abs=1e-9)


def test_unit_indices_match_pinhole_projection(rig):
    cam = rig.right.with_indices(1.0, 1.0, 1.0)
    points = np.array([[10.0, -20.0, 250.0], [80.0, 40.0, 400.0], [-25.0, 5.0, 120.0]])
    projected = forward_project_many(cam, points)
    cam_points = points @ cam.pose.rotation.T + cam.pose.translation
    homogeneous = cam_points @ cam.intrinsics.matrix.T
    pinhole = homogeneous[:, :2] / homogeneous[:, 2:3]
    assert projected == pytest.approx(pinhole, abs=1e-9)


@pytest.mark.parametrize("tilt", [0.0, 2.0])
def test_trace_then_project_round_trip(tilt):
    rig = default_rig(port_tilt_deg=tilt)
    rng = np.random.default_rng(7)
    for cam in (rig.left, rig.right):
        pixels = rng.uniform([0.0, 0.0], [2447.0, 2047.0], size=(1000, 2))
        depths = rng.uniform(5.0, 500.0, size=1000)
        points = np.array([
            point_at_depth(trace_pixel_ray(cam, Pixel(u, v)), float(z)) for (u, v), z in zip(pixels, depths)
        ])
        back = forward_project_many(cam, points)
        assert float(np.max(np.abs(back - pixels))) < 1e-6


def test_point_on_camera_side_of_glass(rig):
    with pytest.raises(PointBehindPort):
        forward_project(rig.left, [0.0, 0.0, 20.0])


# ===== optical axis / camera validation =====

def test_optical_axis():
    rig = default_rig()
    assert optical_axis(rig.left) == pytest.approx([0.0, 0.0, 1.0], abs=1e-15)

    rotated = np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    cam = FlatPortCamera(rig.left.intrinsics, CameraPose(rotated), rig.left.port)
    assert optical_axis(cam) == pytest.approx([1.0, 0.0, 0.0], abs=1e-12)

    angle = 0.3
    ry = np.array(
        [[math.cos(angle), 0.0, math.sin(angle)], [0.0, 1.0, 0.0], [-math.sin(angle), 0.0, math.cos(angle)]]
    )
    cam = FlatPortCamera(rig.left.intrinsics, CameraPose(ry), rig.left.port)
    assert optical_axis(cam) == pytest.approx(ry.T @ Z, abs=1e-12)


def test_port_validation():
    with pytest.raises(ValueError):
        RefractivePort(1.0, 1.5, 1.33, d_glass=40.0, t_glass=0.0)
    with pytest.raises(ValueError):
        RefractivePort(0.9, 1.5, 1.33, d_glass=40.0, t_glass=8.0)
    with pytest.raises(ValueError):
        RefractivePort(1.0, 1.5, 1.33, d_glass=40.0, t_glass=8.0, normal=np.array([0.0, 0.0, 2.0]))


def test_radial_distortion_round_trip():
    intr = PinholeIntrinsics(2500.0, 2500.0, 1224.0, 1024.0, 2448, 2048, radial_distortion=(-0.08, 0.01))
    pixel = Pixel(300.0, 1700.0)
    back = intr.undistort(intr.distort(pixel))
    assert back.u == pytest.approx(pixel.u, abs=1e-6)
    assert back.v == pytest.approx(pixel.v, abs=1e-6)
