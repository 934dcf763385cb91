"""filtering package"""
from filtering.filters import (
    FilterConfig,
    FilterName,
    FilterVerdict,
    apply_filters,
    filter_aspect,
    filter_direction,
    filter_image_cues,
    filter_quality,
)

__all__ = [
    "FilterConfig", "FilterName", "FilterVerdict",
    "apply_filters", "filter_aspect", "filter_direction",
    "filter_image_cues", "filter_quality",
]
