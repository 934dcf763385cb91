"""matching package"""
from matching.costs import (
    DEFAULT_GATE_PX,
    MatchCost,
    cost_epipolar,
    cost_keypoints,
    cost_size,
    total_cost,
)
from matching.assignment import AssignmentConfig, MatchedPair, greedy_assign, greedy_select

__all__ = [
    "DEFAULT_GATE_PX", "MatchCost",
    "cost_epipolar", "cost_keypoints", "cost_size", "total_cost",
    "AssignmentConfig", "MatchedPair", "greedy_assign", "greedy_select",
]
