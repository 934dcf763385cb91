"""
Keypoint refinement
左影像 keypoint 周圍取 21x21 template，在右影像 ±30 px 範圍內、且距離
epipolar curve 不超過 5 px 的整數位置中，找 normalized correlation coefficient 最大者。
只移動右影像的 keypoint。
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field

from detections.models import KEYPOINT_ORDER, KeypointName
from errors import TemplateOutOfBounds, ZeroVariance
from geometry.camera import Pixel
from geometry.epipolar import CurveProvider, EpipolarCurve, distances_to_curve
from matching.assignment import MatchedPair
from refinement.images import GrayImage

logger = logging.getLogger(__name__)


class RefinementConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    template_half: int = Field(default=10, gt=0)     # 21x21 template
    search_half: int = Field(default=30, gt=0)
    epipolar_gate: float = Field(default=5.0, gt=0)
    min_ncc: float = Field(default=0.2, ge=-1.0, le=1.0)
    keypoints: List[KeypointName] = Field(default_factory=lambda: list(KEYPOINT_ORDER))


@dataclass(frozen=True)
class RefinedKeypoint:
    position: Pixel
    score: float
    refined: bool   # False = NotRefined，position 為原本的右影像 keypoint


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def ncc(template: np.ndarray, candidate: np.ndarray) -> float:
    """
    Zero-mean normalized cross-correlation，值域 [-1, 1]

    Raises:
        ZeroVariance: 兩個 patch 都是常數
    """
    a = np.asarray(template, dtype=np.float64)
    b = np.asarray(candidate, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"patch shapes differ: {a.shape} vs {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    saa = float(np.sum(a * a))
    sbb = float(np.sum(b * b))
    if saa == 0.0 and sbb == 0.0:
        raise ZeroVariance("both patches are constant")
    if saa == 0.0 or sbb == 0.0:
        return 0.0
    score = float(np.sum(a * b)) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, score))


def _ncc_scores(template: np.ndarray, windows: np.ndarray) -> np.ndarray:
    """template (k, k) 對 windows (M, k, k) 的 NCC；常數視窗一律為 -inf，不可能被選中"""
    t0 = template - template.mean()
    w0 = windows - windows.mean(axis=(1, 2), keepdims=True)
    stt = float(np.sum(t0 * t0))
    sww = np.einsum("mij,mij->m", w0, w0)
    numerator = np.einsum("ij,mij->m", t0, w0)
    denominator = np.sqrt(stt * sww)
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.clip(np.where(denominator > 0.0, numerator / denominator, 0.0), -1.0, 1.0)
    return np.where(sww == 0.0, -np.inf, scores)


def refine_keypoint(
    left_img: GrayImage,
    right_img: GrayImage,
    left_kp: Pixel,
    right_kp: Pixel,
    curve: EpipolarCurve,
    cfg: RefinementConfig = RefinementConfig(),
) -> RefinedKeypoint:
    """
    單一 keypoint 的 template matching

    Raises:
        TemplateOutOfBounds: 左影像的 template 視窗超出影像
    """
    half = cfg.template_half
    height, width = left_img.shape
    cu, cv = _round_half_up(left_kp[0]), _round_half_up(left_kp[1])
    if cu - half < 0 or cv - half < 0 or cu + half >= width or cv + half >= height:
        raise TemplateOutOfBounds(f"template around {tuple(left_kp)} exceeds {width}x{height} image")
    template = left_img[cv - half: cv + half + 1, cu - half: cu + half + 1].astype(np.float64)

    unchanged = RefinedKeypoint(Pixel(float(right_kp[0]), float(right_kp[1])), -math.inf, False)

    # 整數候選位置：Chebyshev 距離 <= search_half，且視窗完全在右影像內
    r_height, r_width = right_img.shape
    u_lo = max(math.ceil(right_kp[0] - cfg.search_half), half)
    u_hi = min(math.floor(right_kp[0] + cfg.search_half), r_width - 1 - half)
    v_lo = max(math.ceil(right_kp[1] - cfg.search_half), half)
    v_hi = min(math.floor(right_kp[1] + cfg.search_half), r_height - 1 - half)
    if u_lo > u_hi or v_lo > v_hi:
        return unchanged

    grid_v, grid_u = np.meshgrid(
        np.arange(v_lo, v_hi + 1), np.arange(u_lo, u_hi + 1), indexing="ij"
    )
    candidates = np.column_stack([grid_u.ravel(), grid_v.ravel()]).astype(np.float64)
    gated = distances_to_curve(curve, candidates) <= cfg.epipolar_gate
    if not np.any(gated):
        return unchanged

    region = right_img[v_lo - half: v_hi + half + 1, u_lo - half: u_hi + half + 1].astype(np.float64)
    size = 2 * half + 1
    windows = sliding_window_view(region, (size, size)).reshape(-1, size, size)[gated]
    scores = _ncc_scores(template, windows)

    best = int(np.argmax(scores))
    if not np.isfinite(scores[best]) or scores[best] < cfg.min_ncc:
        return unchanged
    u, v = candidates[gated][best]
    return RefinedKeypoint(Pixel(float(u), float(v)), float(scores[best]), True)


def refine_pair(
    pair: MatchedPair,
    left_img: GrayImage,
    right_img: GrayImage,
    curve_provider: CurveProvider,
    cfg: RefinementConfig = RefinementConfig(),
) -> MatchedPair:
    """對配對中設定的 keypoints 做 refinement，回傳帶 refined keypoints 的新 MatchedPair"""
    refined: Dict[KeypointName, Pixel] = {}
    for name in cfg.keypoints:
        left_kp = pair.left.keypoint(name)
        try:
            curve = curve_provider(left_kp)
            result = refine_keypoint(
                left_img, right_img, left_kp, pair.right.keypoint(name), curve, cfg
            )
        except TemplateOutOfBounds as e:
            logger.debug("pair %s %s: %s", pair.pair_id, name.value, e)
            continue
        if result.refined:
            refined[name] = result.position
    return replace(pair, refined=refined)

