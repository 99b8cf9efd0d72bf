"""Shape feature of a single instance mask.

The feature concatenates a centroid-distance Fourier descriptor of the outer
contour with the axis ratio and orientation of a least-squares ellipse fitted
to the same contour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import (
    DegenerateGeometry,
    DegenerateSignature,
    EmptyMask,
    InsufficientPoints,
    TooFewPoints,
)

FD_LENGTH = 5
FD_EPS_REL = 1e-6
ROUND_EPS = 0.01

# Which parts of the feature vector to keep; "combined" is the default.
FEATURE_MODES = ("combined", "contour", "blob")


@dataclass(frozen=True)
class Contour:
    """Outer border of a mask, ``points[n] = (x_n, y_n)`` in pixel units."""

    points: np.ndarray

    @property
    def n(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class CentroidSignature:
    xc: float
    yc: float
    r: np.ndarray


@dataclass(frozen=True)
class EllipseFit:
    coefficients: np.ndarray  # (A, B, C, D, E, F), unit norm
    ratio: float
    theta: float
    residual: float

    @property
    def theta_norm(self) -> float:
        return self.theta / math.pi


# --------------------------------------------------------------------------
# Contour


def _largest_component(mask: np.ndarray) -> np.ndarray:
    n, labels, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
    if n <= 2:
        return mask
    # labels are issued in raster order, so argmax breaks ties toward the
    # component whose first pixel comes first
    best = 1 + int(np.argmax(stats[1:, cv2.CC_STAT_AREA]))
    return (labels == best).astype(np.uint8)


def contour_of_crop(crop: np.ndarray, x0: int = 0, y0: int = 0) -> Contour:
    """Outer border of the largest component of a uint8 crop whose top-left
    pixel sits at ``(x0, y0)`` in the full image."""
    # a one-pixel zero border keeps OpenCV from treating the crop edge specially
    padded = cv2.copyMakeBorder(crop, 1, 1, 1, 1, cv2.BORDER_CONSTANT, value=0)
    offset = (x0 - 1, y0 - 1)
    # with two-level retrieval every 8-connected component, including ones
    # sitting in holes, contributes exactly one top-level border
    contours, hierarchy = cv2.findContours(padded, cv2.RETR_CCOMP, cv2.CHAIN_APPROX_NONE, offset=offset)
    outer = [c for c, h in zip(contours, hierarchy[0]) if h[3] < 0] if contours else []
    if len(outer) != 1:
        padded = cv2.copyMakeBorder(_largest_component(crop), 1, 1, 1, 1, cv2.BORDER_CONSTANT, value=0)
        outer, _ = cv2.findContours(padded, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE, offset=offset)
        if not outer:
            raise EmptyMask("mask has no foreground pixels")
    return Contour(outer[0].reshape(-1, 2).astype(np.int64))


def trace_contour(mask) -> Contour:
    """Outer border of the largest 8-connected foreground component.

    Points run counter-clockwise as displayed (first step goes down the left
    side) starting at the topmost, then leftmost, pixel of the component.
    Border following is OpenCV's implementation of Suzuki & Abe.
    """
    m = np.asarray(mask)
    ys, xs = _bbox_slices(m)
    if ys is None:
        raise EmptyMask("mask has no foreground pixels")
    crop = np.ascontiguousarray(m[ys, xs], dtype=np.uint8)
    return contour_of_crop(crop, xs.start, ys.start)


def _bbox_slices(mask: np.ndarray):
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None, None
    cols = np.flatnonzero(mask[rows[0] : rows[-1] + 1].any(axis=0))
    return slice(int(rows[0]), int(rows[-1]) + 1), slice(int(cols[0]), int(cols[-1]) + 1)


# --------------------------------------------------------------------------
# Fourier descriptor


def _centered(points) -> tuple[np.ndarray, float, float]:
    """Points minus their mean, plus the mean itself.

    Integer points are centered as ``(N * p - sum(p)) / N``, which is exact
    before the final division, so integer translations change nothing.
    """
    pts = np.asarray(points)
    n = len(pts)
    if np.issubdtype(pts.dtype, np.integer):
        pts = pts.astype(np.int64)
        total = pts.sum(axis=0)
        centered = (n * pts - total) / n
        return centered, float(total[0] / n), float(total[1] / n)
    pts = pts.astype(np.float64)
    mean = pts.mean(axis=0)
    return pts - mean, float(mean[0]), float(mean[1])


def centroid_signature(contour: Contour) -> CentroidSignature:
    d, xc, yc = _centered(contour.points)
    return CentroidSignature(xc, yc, np.hypot(d[:, 0], d[:, 1]))


def dft_coefficients(r: np.ndarray, ks) -> np.ndarray:
    """``Gamma_k = 1/N sum_n r_n exp(-2j pi k n / N)`` for the requested ``ks``."""
    r = np.asarray(r, dtype=np.float64)
    n = np.arange(r.size)
    ks = np.asarray(ks, dtype=np.float64)[:, None]
    return np.exp(-2j * np.pi * ks * n / r.size) @ r / r.size


def fourier_descriptor(sig: CentroidSignature, length: int = FD_LENGTH) -> np.ndarray:
    """``|Gamma_{i+2}| / |Gamma_1|`` for ``i = 0 .. length-1``."""
    if length < 1:
        raise ValueError("descriptor length must be >= 1")
    r = sig.r
    if r.size < length + 2:
        raise TooFewPoints(f"{r.size} contour points, need at least {length + 2}")
    # same values as dft_coefficients(r, 1..length+1), but much cheaper
    mags = np.abs(np.fft.fft(r)[1 : length + 2]) / r.size
    eps = FD_EPS_REL * float(r.mean())
    if not mags[0] >= eps or mags[0] == 0.0:
        raise DegenerateSignature(f"|Gamma_1| = {mags[0]:.3g} below {eps:.3g}")
    return mags[1:] / mags[0]


# --------------------------------------------------------------------------
# Ellipse


# inverse of the constraint matrix of 4ac - b^2
_CONSTRAINT_INV = np.array([[0.0, 0.0, 0.5], [0.0, -1.0, 0.0], [0.5, 0.0, 0.0]])


def _direct_conic_fit(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-free conic coefficients and the scatter matrix of the design rows."""
    # Fitzgibbon's constrained least squares, in the block form of Halir & Flusser
    design = np.empty((x.size, 6))
    np.multiply(x, x, out=design[:, 0])
    np.multiply(x, y, out=design[:, 1])
    np.multiply(y, y, out=design[:, 2])
    design[:, 3] = x
    design[:, 4] = y
    design[:, 5] = 1.0
    scatter = design.T @ design
    s1 = scatter[:3, :3]
    s2 = scatter[:3, 3:]
    s3 = scatter[3:, 3:]
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        raise DegenerateGeometry("contour points are collinear") from None
    m = s1 + s2 @ t
    m = _CONSTRAINT_INV @ m
    evals, evecs = np.linalg.eig(m)
    evecs = np.real(evecs)
    cond = 4.0 * evecs[0] * evecs[2] - evecs[1] ** 2
    ok = np.flatnonzero(cond > 0)
    if ok.size == 0:
        raise DegenerateGeometry("no elliptical solution")
    a1 = evecs[:, ok[np.argmin(np.abs(np.real(evals[ok])))]]
    return np.concatenate((a1, t @ a1)), scatter


def fit_ellipse(contour: Contour) -> EllipseFit:
    """Algebraic least-squares ellipse through the contour points.

    ``ratio`` is major over minor axis; ``theta`` is the direction of the
    major axis in ``[0, pi)`` measured from +x toward +y. Near-circular fits
    (ratio below ``1 + ROUND_EPS``) report ``theta = 0``.
    """
    if len(contour.points) < 5:
        raise InsufficientPoints(f"{len(contour.points)} contour points, need at least 5")
    return _fit_centered(*_centered(contour.points))


def _fit_centered(centered: np.ndarray, mx: float, my: float) -> EllipseFit:
    x = centered[:, 0].copy()
    y = centered[:, 1].copy()
    scale = math.sqrt(float(x @ x + y @ y) / len(x))
    if scale == 0.0:
        raise DegenerateGeometry("all contour points coincide")
    x /= scale
    y /= scale
    norm_coef, scatter = _direct_conic_fit(x, y)
    a, b, c, d, e, f = norm_coef.tolist()

    # undo the normalization: substitute x -> (x - mx)/s, y -> (y - my)/s
    s2 = scale * scale
    A, B, C = a / s2, b / s2, c / s2
    D = d / scale - 2 * A * mx - B * my
    E = e / scale - 2 * C * my - B * mx
    F = f + A * mx * mx + B * mx * my + C * my * my - d * mx / scale - e * my / scale
    k = math.sqrt(A * A + B * B + C * C + D * D + E * E + F * F)
    coef = np.array([A, B, C, D, E, F]) / k
    if coef[1] ** 2 - 4 * coef[0] * coef[2] >= 0:
        raise DegenerateGeometry("fitted conic is not an ellipse")

    # eigen-decomposition of the quadratic form [[A, B/2], [B/2, C]]; the
    # centered coefficients are a positive multiple of A, B, C and, unlike
    # them, do not depend on where the contour sits in the image
    A, B, C = a, b, c
    if A + C < 0:
        A, B, C = -A, -B, -C
    mean = (A + C) / 2
    half = math.hypot((A - C) / 2, B / 2)
    lam_min, lam_max = mean - half, mean + half
    if lam_min <= 0:
        raise DegenerateGeometry("fitted conic is not an ellipse")
    ratio = math.sqrt(lam_max / lam_min)
    if ratio < 1.0 + ROUND_EPS:
        theta = 0.0
    else:
        # eigenvector of lam_min: the major-axis direction
        theta = (0.5 * math.atan2(-B, C - A)) % math.pi
        if theta >= math.pi:
            theta = 0.0

    # the pixel-space polynomial equals the normalized one divided by k
    residual = float(norm_coef @ scatter @ norm_coef) / (k * k)
    return EllipseFit(coef, ratio, theta, residual)


# --------------------------------------------------------------------------
# Combined feature


def shape_feature_from_contour(
    contour: Contour, length: int = FD_LENGTH, mode: str = "combined"
) -> np.ndarray:
    parts = []
    centered, xc, yc = _centered(contour.points)
    if mode in ("combined", "contour"):
        sig = CentroidSignature(xc, yc, np.hypot(centered[:, 0], centered[:, 1]))
        parts.append(fourier_descriptor(sig, length))
    if mode in ("combined", "blob"):
        if len(centered) < 5:
            raise InsufficientPoints(f"{len(centered)} contour points, need at least 5")
        fit = _fit_centered(centered, xc, yc)
        parts.append(np.array([fit.ratio, fit.theta_norm]))
    if not parts:
        raise ValueError(f"unknown feature mode {mode!r}; expected one of {FEATURE_MODES}")
    return np.concatenate(parts)


def extract_shape_feature(mask, length: int = FD_LENGTH, mode: str = "combined") -> np.ndarray:
    """``[FD_0 .. FD_{length-1}, R, theta/pi]`` for one instance mask.

    ``mode="contour"`` keeps only the Fourier descriptor and ``mode="blob"``
    only the ellipse part.
    """
    return shape_feature_from_contour(trace_contour(mask), length, mode)
