"""geometry package"""
from geometry.camera import (
    CameraPose,
    FlatPortCamera,
    PinholeIntrinsics,
    Pixel,
    RefractivePort,
    StereoRig,
    WaterRay,
)
from geometry.refraction import (
    forward_project,
    forward_project_many,
    optical_axis,
    point_at_depth,
    refract_direction,
    trace_pixel_ray,
    trace_pixel_rays,
)
from geometry.epipolar import (
    CurveQuery,
    EpipolarCurve,
    EpipolarCurveProvider,
    closest_point_on_curve,
    compute_epipolar_curve,
    distances_to_curve,
)
from geometry.calibration import load_rig, save_rig

__all__ = [
    "CameraPose", "FlatPortCamera", "PinholeIntrinsics", "Pixel",
    "RefractivePort", "StereoRig", "WaterRay",
    "forward_project", "forward_project_many", "optical_axis",
    "point_at_depth", "refract_direction", "trace_pixel_ray", "trace_pixel_rays",
    "CurveQuery", "EpipolarCurve", "EpipolarCurveProvider",
    "closest_point_on_curve", "compute_epipolar_curve", "distances_to_curve",
    "load_rig", "save_rig",
]
