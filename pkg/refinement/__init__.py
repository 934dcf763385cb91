"""refinement package"""
from refinement.images import GrayImage, load_gray_image, save_gray_image, to_gray
from refinement.template import (
    RefinedKeypoint,
    RefinementConfig,
    ncc,
    refine_keypoint,
    refine_pair,
)

__all__ = [
    "GrayImage", "load_gray_image", "save_gray_image", "to_gray",
    "RefinedKeypoint", "RefinementConfig", "ncc", "refine_keypoint", "refine_pair",
]
