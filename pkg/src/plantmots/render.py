"""Overlay images: instance contours tinted per object id, id drawn at the box corner."""

from __future__ import annotations

import colorsys
import re
from pathlib import Path

import cv2
import numpy as np

from .errors import DimensionMismatch
from .mots_io import Annotation, FrameSeries

_GOLDEN = 0.6180339887498949
_IMAGE_EXT = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
_DIGITS = re.compile(r"(\d+)$")


def id_color(object_id: int) -> tuple[int, int, int]:
    """BGR tint for an id; consecutive ids land far apart on the hue circle."""
    hue = (object_id * _GOLDEN) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 1.0)
    return int(round(b * 255)), int(round(g * 255)), int(round(r * 255))


def render_frame(annotations: list[Annotation], image: np.ndarray | None = None, alpha: float = 0.35) -> np.ndarray:
    """Draw one frame. Without ``image`` the overlay goes on a black canvas."""
    if image is None:
        if not annotations:
            raise ValueError("need an image or at least one annotation to size the canvas")
        a0 = annotations[0]
        canvas = np.zeros((a0.image_height, a0.image_width, 3), np.uint8)
    else:
        canvas = image.copy() if image.ndim == 3 else cv2.cvtColor(image, cv2.COLOR_GRAY2BGR)
    h, w = canvas.shape[:2]
    for a in annotations:
        if (a.image_height, a.image_width) != (h, w):
            raise DimensionMismatch(
                f"annotation {a.object_id} is {a.image_height}x{a.image_width}, image is {h}x{w}"
            )
    for a in sorted(annotations, key=lambda a: a.object_id):
        found = a.crop()
        if found is None:
            continue
        crop, x0, y0 = found
        color = np.array(id_color(a.object_id), np.float64)
        region = canvas[y0 : y0 + crop.shape[0], x0 : x0 + crop.shape[1]]
        region[crop] = np.round((1 - alpha) * region[crop] + alpha * color).astype(np.uint8)
        padded = cv2.copyMakeBorder(crop.astype(np.uint8), 1, 1, 1, 1, cv2.BORDER_CONSTANT, value=0)
        contours, _ = cv2.findContours(padded, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE, offset=(x0 - 1, y0 - 1))
        cv2.drawContours(canvas, contours, -1, id_color(a.object_id), 2, cv2.LINE_8)
        org = (x0, max(y0 - 4, 12))
        cv2.putText(canvas, str(a.object_id), org, cv2.FONT_HERSHEY_SIMPLEX, 0.6, (0, 0, 0), 3, cv2.LINE_8)
        cv2.putText(canvas, str(a.object_id), org, cv2.FONT_HERSHEY_SIMPLEX, 0.6, id_color(a.object_id), 1, cv2.LINE_8)
    return canvas


def _frame_images(directory: Path) -> dict[int, Path]:
    found = {}
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() not in _IMAGE_EXT:
            continue
        m = _DIGITS.search(p.stem)
        if m:
            found.setdefault(int(m.group(1)), p)
    return found


def render_sequence(series: FrameSeries, out_dir, images_dir=None) -> list[Path]:
    """Write ``<frame_id:06d>.png`` per annotated frame; returns the written paths.

    Background images are matched by the trailing number of their file name.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = {}
    if images_dir is not None:
        images_dir = Path(images_dir)
        if not images_dir.is_dir():
            raise FileNotFoundError(f"not a directory: {images_dir}")
        images = _frame_images(images_dir)
    written = []
    for frame_id, anns in series:
        image = None
        if frame_id in images:
            image = cv2.imread(str(images[frame_id]), cv2.IMREAD_COLOR)
            if image is None:
                raise OSError(f"cannot read image {images[frame_id]}")
        if image is None and not anns:
            continue
        path = out_dir / f"{frame_id:06d}.png"
        if not cv2.imwrite(str(path), render_frame(anns, image)):
            raise OSError(f"failed to write {path}")
        written.append(path)
    return written
