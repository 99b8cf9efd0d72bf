"""Bounding boxes, a constant-velocity Kalman filter over boxes, and GIoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_SIZE = 1.0


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with upper-left ``(x1, y1)`` and lower-right ``(x2, y2)``.

    Boxes taken from masks cover whole pixels, so a single pixel at
    ``(x, y)`` is ``BBox(x, y, x + 1, y + 1)``.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (np.isfinite([self.x1, self.y1, self.x2, self.y2]).all()):
            raise ValueError(f"non-finite box {self}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {self}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)

    def to_cxcywh(self) -> np.ndarray:
        cx, cy = self.center
        return np.array([cx, cy, self.width, self.height], dtype=np.float64)

    @classmethod
    def from_cxcywh(cls, cx, cy, w, h) -> "BBox":
        w = max(float(w), MIN_SIZE)
        h = max(float(h), MIN_SIZE)
        return cls(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def bbox_from_mask(mask) -> BBox | None:
    """Pixel-extent box of the foreground, or None for an empty mask."""
    extent = mask_extent(np.asarray(mask))
    return None if extent is None else BBox(*extent)


def mask_extent(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    """Half-open ``(x1, y1, x2, y2)`` pixel extent of a 2-D mask, or None if empty."""
    if mask.flags.f_contiguous and not mask.flags.c_contiguous:
        extent = mask_extent(mask.T)
        return None if extent is None else (extent[1], extent[0], extent[3], extent[2])
    if mask.dtype == bool and mask.flags.c_contiguous:
        return _bool_extent(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    y1, y2 = int(rows[0]), int(rows[-1]) + 1
    cols = np.flatnonzero(mask[y1:y2].any(axis=0))
    return int(cols[0]), y1, int(cols[-1]) + 1, y2


_SCAN_BLOCK = 1 << 15


def _bool_extent(mask: np.ndarray):
    # full frames hold small objects: find the first and last foreground
    # bytes with short-circuit scans, then reduce only over the rows between
    flat = mask.reshape(-1)
    first = int(flat.argmax())
    if not flat[first]:
        return None
    end = flat.size
    while True:
        start = max(end - _SCAN_BLOCK, first)
        block = flat[start:end]
        if block.any():
            last = start + int(np.flatnonzero(block)[-1])
            break
        end = start
    w = mask.shape[1]
    y1, y2 = first // w, last // w + 1
    cols = np.flatnonzero(mask[y1:y2].any(axis=0))
    return int(cols[0]), y1, int(cols[-1]) + 1, y2


# --------------------------------------------------------------------------
# GIoU


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: ``IoU - |C - U| / |C|`` with ``C`` the enclosing box."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    area_c = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    return inter / union - abs(area_c - union) / abs(area_c)


def giou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise GIoU between ``(n, 4)`` and ``(m, 4)`` corner arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(1, -1, 4)
    iw = np.clip(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0, None)
    ih = np.clip(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0, None)
    inter = iw * ih
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    union = area_a + area_b - inter
    area_c = (np.maximum(a[..., 2], b[..., 2]) - np.minimum(a[..., 0], b[..., 0])) * (
        np.maximum(a[..., 3], b[..., 3]) - np.minimum(a[..., 1], b[..., 1])
    )
    return inter / union - np.abs(area_c - union) / np.abs(area_c)


# --------------------------------------------------------------------------
# Kalman filter


@dataclass(frozen=True)
class KalmanParams:
    """Noise levels in pixels (positions/sizes) and pixels/frame (velocities)."""

    std_pos: float = 1.0
    std_vel: float = 0.1
    std_obs: float = 1.0
    init_std_pos: float = 1.0
    init_std_vel: float = 10.0


@dataclass
class BoxState:
    mean: np.ndarray  # (cx, cy, w, h, vcx, vcy, vw, vh)
    covariance: np.ndarray

    @property
    def box(self) -> BBox:
        return BBox.from_cxcywh(*self.mean[:4])


_F = np.eye(8)
_F[:4, 4:] = np.eye(4)
_H = np.eye(4, 8)


def _process_noise(p: KalmanParams) -> np.ndarray:
    return np.diag([p.std_pos**2] * 4 + [p.std_vel**2] * 4)


def kf_init(b: BBox, params: KalmanParams = KalmanParams()) -> BoxState:
    mean = np.concatenate((b.to_cxcywh(), np.zeros(4)))
    cov = np.diag([params.init_std_pos**2] * 4 + [params.init_std_vel**2] * 4)
    return BoxState(mean, cov)


def kf_predict(s: BoxState, params: KalmanParams = KalmanParams()) -> tuple[BoxState, BBox]:
    mean = _F @ s.mean
    cov = _F @ s.covariance @ _F.T + _process_noise(params)
    out = BoxState(mean, cov)
    return out, out.box


def kf_update(s: BoxState, observation: BBox, params: KalmanParams = KalmanParams()) -> BoxState:
    z = observation.to_cxcywh()
    p = s.covariance
    r = params.std_obs**2
    # H selects the first four state entries, so H P H^T and P H^T are slices
    innov_cov = p[:4, :4] + r * np.eye(4)
    gain = np.linalg.solve(innov_cov, p[:4]).T
    mean = s.mean + gain @ (z - s.mean[:4])
    # Joseph form keeps the posterior symmetric PSD
    ikh = np.eye(8)
    ikh[:, :4] -= gain
    cov = ikh @ p @ ikh.T + r * (gain @ gain.T)
    return BoxState(mean, (cov + cov.T) / 2)
