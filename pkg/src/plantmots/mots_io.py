"""KITTI-MOTS style annotation text and COCO compressed RLE masks.

A mask is a 2-D boolean ``numpy`` array of shape ``(height, width)``. Run
lengths follow the COCO convention: column-major pixel order, alternating
background/foreground runs starting with background (possibly a 0 run).
The text form packs every count into 6-bit groups (offset by ``'0'``), with
counts from the fourth onward stored as differences to the count two
places earlier.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import DuplicateObjectInFrame, MalformedLine, MalformedRle, NonMonotonicFrameId

VEGETABLE = 1

_RLE_CHARS = re.compile(r"^[0-o]*$")  # codes 48..111
_MASK_FILE = re.compile(r"^(\d+)_(\d+)\.(png|bmp|pgm|tif|tiff)$", re.IGNORECASE)


def as_mask(array) -> np.ndarray:
    """Validate ``array`` as a mask raster and return it as a bool array."""
    m = np.asarray(array)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"mask must be a non-empty 2-D array, got shape {m.shape}")
    if m.dtype != bool:
        if not np.isin(m, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        m = m.astype(bool)
    return m


# --------------------------------------------------------------------------
# RLE


def mask_to_counts(mask: np.ndarray) -> list[int]:
    """Column-major run lengths of ``mask``, starting with a background run."""
    flat = np.asarray(mask, dtype=bool).ravel(order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return counts


def counts_to_mask(counts: Iterable[int], height: int, width: int) -> np.ndarray:
    counts = np.asarray(list(counts), dtype=np.int64)
    if (counts < 0).any():
        raise MalformedRle("negative run length")
    total = int(counts.sum())
    if total != height * width:
        raise MalformedRle(f"runs sum to {total}, expected {height}x{width}={height * width}")
    values = np.zeros(counts.size, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    # a transposed view: Fortran-ordered, which saves a full-frame copy
    return flat.reshape((width, height)).T


def crop_to_counts(crop, x0: int, y0: int, height: int, width: int) -> list[int]:
    """Run lengths of a ``height x width`` mask that is empty outside ``crop``,
    whose top-left pixel lies at column ``x0``, row ``y0``."""
    crop = np.asarray(crop, dtype=bool)
    h, w = crop.shape
    if x0 < 0 or y0 < 0 or x0 + w > width or y0 + h > height:
        raise ValueError("crop extends outside the mask")
    band = np.zeros((height, w), dtype=bool, order="F")
    band[y0 : y0 + h] = crop
    counts = mask_to_counts(band)
    counts[0] += x0 * height
    tail = (width - x0 - w) * height
    if tail:
        if len(counts) % 2:  # last run is background
            counts[-1] += tail
        else:
            counts.append(tail)
    return counts


def counts_to_crop(counts: Iterable[int], height: int, width: int):
    """Decode only the bounding box of the foreground.

    Returns ``(crop, x0, y0)`` with ``crop[r, c]`` the pixel at row
    ``y0 + r``, column ``x0 + c``, or None for an empty mask.
    """
    counts = np.asarray(list(counts), dtype=np.int64)
    if (counts < 0).any():
        raise MalformedRle("negative run length")
    edges = np.cumsum(counts)
    if counts.size and int(edges[-1]) != height * width:
        raise MalformedRle(f"runs sum to {int(edges[-1])}, expected {height}x{width}={height * width}")
    starts = edges[0::2][: counts.size // 2]
    ends = edges[1::2]
    keep = ends > starts
    starts, ends = starts[keep], ends[keep]
    if starts.size == 0:
        return None
    c0 = int(starts[0]) // height
    c1 = (int(ends[-1]) - 1) // height + 1
    off = c0 * height
    band = np.zeros((c1 - c0) * height, dtype=bool)
    for a, b in zip((starts - off).tolist(), (ends - off).tolist()):
        band[a:b] = True
    cols = band.reshape((c1 - c0, height)).T
    rows = np.flatnonzero(cols.any(axis=1))
    y0, y1 = int(rows[0]), int(rows[-1]) + 1
    return np.ascontiguousarray(cols[y0:y1]), c0, y0


def counts_to_string(counts: Iterable[int]) -> str:
    counts = list(counts)
    out = []
    for i, x in enumerate(counts):
        if i > 2:
            x -= counts[i - 2]
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = x != -1 if c & 0x10 else x != 0
            if more:
                c |= 0x20
            out.append(chr(c + 48))
    return "".join(out)


def string_to_counts(rle: str) -> list[int]:
    if not _RLE_CHARS.match(rle):
        raise MalformedRle("RLE contains characters outside '0'..'o'")
    counts: list[int] = []
    p = 0
    n = len(rle)
    while p < n:
        x = 0
        k = 0
        more = True
        while more:
            if p >= n:
                raise MalformedRle("truncated continuation at end of RLE string")
            c = ord(rle[p]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and c & 0x10:
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def encode_rle(mask) -> str:
    return counts_to_string(mask_to_counts(as_mask(mask)))


def decode_rle(rle: str, height: int, width: int) -> np.ndarray:
    """Decode a COCO compressed RLE string into a ``(height, width)`` mask.

    Raises MalformedRle on illegal characters, a truncated continuation, or
    runs that do not cover exactly ``height * width`` pixels.
    """
    if height < 1 or width < 1:
        raise MalformedRle(f"invalid mask size {height}x{width}")
    return counts_to_mask(string_to_counts(rle), height, width)


# --------------------------------------------------------------------------
# Annotation records


@dataclass(frozen=True)
class Annotation:
    frame_id: int
    object_id: int
    category: int
    image_height: int
    image_width: int
    rle: str

    @classmethod
    def from_mask(cls, frame_id: int, object_id: int, mask, category: int = VEGETABLE):
        m = as_mask(mask)
        return cls(frame_id, object_id, category, m.shape[0], m.shape[1], encode_rle(m))

    @classmethod
    def from_crop(cls, frame_id: int, object_id: int, crop, x0: int, y0: int, height: int, width: int,
                  category: int = VEGETABLE):
        """Record for a mask that is empty outside ``crop`` placed at ``(x0, y0)``."""
        rle = counts_to_string(crop_to_counts(crop, x0, y0, height, width))
        return cls(frame_id, object_id, category, height, width, rle)

    def mask(self) -> np.ndarray:
        return decode_rle(self.rle, self.image_height, self.image_width)

    def crop(self):
        """``(crop, x0, y0)`` covering the foreground's bounding box, or None if empty."""
        return counts_to_crop(string_to_counts(self.rle), self.image_height, self.image_width)

    def with_object_id(self, object_id: int) -> "Annotation":
        return Annotation(
            self.frame_id, object_id, self.category, self.image_height, self.image_width, self.rle
        )


def parse_annotation_line(line: str) -> Annotation:
    fields = line.split()
    if len(fields) != 6:
        raise MalformedLine(f"expected 6 fields, got {len(fields)}: {line!r}")
    try:
        nums = [int(f) for f in fields[:5]]
    except ValueError:
        raise MalformedLine(f"non-integer numeric field: {line!r}") from None
    if any(v < 0 for v in nums):
        raise MalformedLine(f"negative numeric field: {line!r}")
    if nums[3] < 1 or nums[4] < 1:
        raise MalformedLine(f"image size must be positive: {line!r}")
    rle = fields[5]
    if not _RLE_CHARS.match(rle):
        raise MalformedLine(f"RLE field contains illegal characters: {line!r}")
    return Annotation(*nums, rle)


def write_annotation_line(a: Annotation) -> str:
    return f"{a.frame_id} {a.object_id} {a.category} {a.image_height} {a.image_width} {a.rle}"


# --------------------------------------------------------------------------
# Sequences


@dataclass
class FrameSeries:
    """Annotations grouped per frame, frames in ascending order."""

    frames: list[tuple[int, list[Annotation]]] = field(default_factory=list)

    def __post_init__(self):
        prev = None
        for frame_id, anns in self.frames:
            if prev is not None and frame_id <= prev:
                raise NonMonotonicFrameId("frame ids must be strictly increasing")
            prev = frame_id
            seen = set()
            for a in anns:
                if a.object_id in seen:
                    raise DuplicateObjectInFrame(
                        f"object {a.object_id} appears twice in frame {frame_id}"
                    )
                seen.add(a.object_id)

    @classmethod
    def from_annotations(cls, annotations: Iterable[Annotation]) -> "FrameSeries":
        by_frame: dict[int, list[Annotation]] = {}
        for a in annotations:
            by_frame.setdefault(a.frame_id, []).append(a)
        return cls(sorted(by_frame.items()))

    def __len__(self):
        return len(self.frames)

    def __iter__(self) -> Iterator[tuple[int, list[Annotation]]]:
        return iter(self.frames)

    @property
    def frame_ids(self) -> list[int]:
        return [f for f, _ in self.frames]

    def annotations(self) -> Iterator[Annotation]:
        for _, anns in self.frames:
            yield from anns

    def get(self, frame_id: int) -> list[Annotation]:
        for f, anns in self.frames:
            if f == frame_id:
                return anns
        return []


def load_sequence(source: IO[str]) -> FrameSeries:
    """Read annotation records from a text stream; blank lines are skipped."""
    anns = []
    for lineno, line in enumerate(source, 1):
        if not line.strip():
            continue
        try:
            anns.append(parse_annotation_line(line))
        except MalformedLine as exc:
            raise MalformedLine(f"line {lineno}: {exc}") from None
    return FrameSeries.from_annotations(anns)


def load_sequence_file(path) -> FrameSeries:
    with open(path, encoding="ascii", newline="") as fh:
        return load_sequence(fh)


def write_sequence(series: FrameSeries, sink: IO[str]) -> None:
    for a in series.annotations():
        sink.write(write_annotation_line(a))
        sink.write("\n")


def save_sequence_file(series: FrameSeries, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        write_sequence(series, fh)


# --------------------------------------------------------------------------
# Mask image directories


def load_mask_image(path) -> np.ndarray:
    import cv2

    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise MalformedLine(f"cannot read mask image {path}")
    if img.ndim != 2:
        raise MalformedLine(f"mask image {path} is not single-channel")
    return img != 0


def load_mask_directory(directory) -> FrameSeries:
    """Load ``<frame_id>_<index>.png`` instance masks (nonzero = instance).

    The index becomes the provisional object id of the record.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    found = []
    for p in directory.iterdir():
        m = _MASK_FILE.match(p.name)
        if m:
            found.append((int(m.group(1)), int(m.group(2)), p))
    found.sort(key=lambda f: (f[0], f[1]))
    anns = [Annotation.from_mask(f, i, load_mask_image(p)) for f, i, p in found]
    return FrameSeries.from_annotations(anns)


def save_mask_image(mask, path) -> None:
    import cv2

    if not cv2.imwrite(str(path), np.ascontiguousarray(as_mask(mask), dtype=np.uint8) * 255):
        raise OSError(f"failed to write {path}")
