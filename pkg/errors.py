"""
例外階層
所有模組共用的錯誤種類，CLI 依類別決定 exit code
"""
from typing import Optional


class FishLengthError(Exception):
    """所有領域錯誤的基底類別"""


# ===== Geometry =====

class GeometryError(FishLengthError):
    """折射幾何運算失敗"""


class TotalInternalReflection(GeometryError):
    def __init__(self, n1: float, n2: float, sin_incident: float):
        self.n1 = n1
        self.n2 = n2
        self.sin_incident = sin_incident
        super().__init__(
            f"total internal reflection: n1={n1} n2={n2} sin(theta1)={sin_incident:.12f}"
        )


class RayParallelToPort(GeometryError):
    """像素射線與玻璃平面平行，永遠不會穿過 port"""


class PointBehindPort(GeometryError):
    """點不在外側玻璃平面的水側"""


class PointBehindCamera(GeometryError):
    """折射後的空氣射線落在相機後方，無法投影"""


class NoConvergence(GeometryError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"forward projection did not converge after {iterations} iterations "
            f"(residual {residual:.3e} mm)"
        )


class NearParallelRays(GeometryError):
    """兩條水中射線幾乎平行，最短連線不唯一"""


# ===== Detection files =====

class DetectionFileError(FishLengthError):
    """偵測檔讀寫錯誤"""


class ParseError(DetectionFileError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(prefix + message)


class DetectionValidationError(DetectionFileError):
    def __init__(
        self,
        invariant: str,
        frame_id: Optional[int] = None,
        detection_id: Optional[str] = None,
    ):
        self.invariant = invariant
        self.frame_id = frame_id
        self.detection_id = detection_id
        super().__init__(
            f"frame {frame_id} detection {detection_id!r}: {invariant}"
        )


class UnknownSchemaVersion(ParseError):
    """schema_version 不是本版本認得的值"""


# ===== Refinement =====

class ZeroVariance(FishLengthError):
    """兩個 patch 都是常數，NCC 無定義"""


class TemplateOutOfBounds(FishLengthError):
    """左影像的 template 視窗超出影像範圍"""


# ===== Filtering / measurement =====

class DegenerateBody(FishLengthError):
    """嘴與尾鰭的 3D 點重合，無法定義身體方向"""


class EmptyEvaluation(FishLengthError):
    """沒有任何可與 ground truth 對應的量測"""


# ===== Simulation / config =====

class ProjectionFailure(FishLengthError):
    """模擬魚在重試上限內仍無法投影進兩台相機"""


class ConfigError(FishLengthError):
    """設定檔或參數錯誤"""
