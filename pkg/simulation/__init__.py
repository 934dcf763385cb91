"""simulation package"""
from simulation.scene import (
    CorruptionModel,
    Scene,
    SyntheticFish,
    TankBox,
    default_rig,
    generate_scene,
)
from simulation.benchmark import (
    PROFILES,
    BenchmarkProfile,
    BenchmarkSuite,
    ExportedSuite,
    export_suite,
    standard_benchmark,
)
from simulation.render import BodyTexture, render_stereo, render_view

__all__ = [
    "CorruptionModel", "Scene", "SyntheticFish", "TankBox", "default_rig", "generate_scene",
    "PROFILES", "BenchmarkProfile", "BenchmarkSuite", "ExportedSuite",
    "export_suite", "standard_benchmark",
    "BodyTexture", "render_stereo", "render_view",
]
