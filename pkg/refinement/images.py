"""
8-bit 灰階影像讀寫 (PGM P5 / PNG)
彩色 PNG 以整數 BT.601 luma 轉灰階 (round-half-up)，確保結果可重現
"""
import logging
from pathlib import Path
from typing import Union

import cv2
import numpy as np
from numpy.typing import NDArray

logger = logging.getLogger(__name__)

GrayImage = NDArray[np.uint8]


def to_gray(pixels: np.ndarray) -> GrayImage:
    """BGR / BGRA / gray → uint8 gray"""
    if pixels.dtype != np.uint8:
        raise ValueError(f"only 8-bit images are supported, got {pixels.dtype}")
    if pixels.ndim == 2:
        return pixels
    if pixels.ndim == 3 and pixels.shape[2] in (3, 4):
        blue = pixels[:, :, 0].astype(np.int64)
        green = pixels[:, :, 1].astype(np.int64)
        red = pixels[:, :, 2].astype(np.int64)
        luma = (299 * red + 587 * green + 114 * blue + 500) // 1000
        return luma.astype(np.uint8)
    raise ValueError(f"unsupported image shape {pixels.shape}")


def load_gray_image(path: Union[str, Path]) -> GrayImage:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    pixels = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if pixels is None:
        raise ValueError(f"cannot decode image: {path}")
    return to_gray(pixels)


def save_gray_image(image: GrayImage, path: Union[str, Path]) -> None:
    """副檔名決定格式 (.pgm / .png)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.ascontiguousarray(image, dtype=np.uint8)):
        raise OSError(f"cannot write image: {path}")
