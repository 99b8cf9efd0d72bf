"""Per-frame tracking of plant instance masks with re-identification."""

from __future__ import annotations

import configparser
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import association as assoc
from .errors import InvalidConfig, NonMonotonicFrameId, ShapeFeatureError
from .motion_model import BBox, KalmanParams, mask_extent, kf_init, kf_predict, kf_update
from .mots_io import VEGETABLE, Annotation, FrameSeries
from .shape_features import FEATURE_MODES, FD_LENGTH, contour_of_crop, shape_feature_from_contour


@dataclass(frozen=True)
class TrackerConfig:
    s: int = assoc.WINDOW_SLACK
    t_all: float = assoc.T_ALL
    t_p: float = assoc.T_P
    fd_length: int = FD_LENGTH
    border_margin: int = 2
    feature_mode: str = "combined"
    fallback_shape_cost: float = assoc.FALLBACK_SHAPE_COST
    kf_std_pos: float = 1.0
    kf_std_vel: float = 0.1
    kf_std_obs: float = 1.0
    kf_init_std_pos: float = 1.0
    kf_init_std_vel: float = 10.0

    def __post_init__(self):
        if self.s < 0:
            raise InvalidConfig("s must be >= 0")
        if self.fd_length < 1:
            raise InvalidConfig("fd_length must be >= 1")
        if self.border_margin < 0:
            raise InvalidConfig("border_margin must be >= 0")
        if self.feature_mode not in FEATURE_MODES:
            raise InvalidConfig(f"feature_mode must be one of {FEATURE_MODES}")

    @property
    def kalman(self) -> KalmanParams:
        return KalmanParams(
            self.kf_std_pos, self.kf_std_vel, self.kf_std_obs, self.kf_init_std_pos, self.kf_init_std_vel
        )

    @classmethod
    def from_mapping(cls, values: dict) -> "TrackerConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            key = key.strip().lower()
            if key not in kinds:
                raise InvalidConfig(f"unknown configuration key {key!r}")
            kind = kinds[key]
            try:
                if kind == "int":
                    kw[key] = int(raw)
                elif kind == "float":
                    kw[key] = float(raw)
                else:
                    kw[key] = str(raw).strip()
            except ValueError:
                raise InvalidConfig(f"bad value for {key}: {raw!r}") from None
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "TrackerConfig":
        """Read ``key = value`` lines; ``#`` starts a comment."""
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        try:
            parser.read_string("[tracker]\n" + Path(path).read_text())
        except configparser.Error as exc:
            raise InvalidConfig(str(exc)) from None
        return cls.from_mapping(dict(parser["tracker"]))

    def override(self, **changes) -> "TrackerConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


@dataclass(frozen=True)
class Instance:
    """One instance mask of the current frame, kept as its bounding-box crop.

    ``crop`` is None for an empty mask. Build instances with
    :meth:`from_mask` or :meth:`from_annotation`.
    """

    crop: np.ndarray | None
    x0: int
    y0: int
    height: int
    width: int
    source: Annotation | None = None

    @classmethod
    def from_mask(cls, mask, source: Annotation | None = None) -> "Instance":
        m = np.asarray(mask)
        if m.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {m.shape}")
        extent = mask_extent(m)
        if extent is None:
            return cls(None, 0, 0, m.shape[0], m.shape[1], source)
        x1, y1, x2, y2 = extent
        return cls(m[y1:y2, x1:x2].astype(bool), x1, y1, m.shape[0], m.shape[1], source)

    @classmethod
    def from_annotation(cls, a: Annotation) -> "Instance":
        found = a.crop()
        if found is None:
            return cls(None, 0, 0, a.image_height, a.image_width, a)
        crop, x0, y0 = found
        return cls(crop, x0, y0, a.image_height, a.image_width, a)

    @property
    def box(self) -> BBox | None:
        if self.crop is None:
            return None
        h, w = self.crop.shape
        return BBox(self.x0, self.y0, self.x0 + w, self.y0 + h)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros((self.height, self.width), dtype=bool)
        if self.crop is not None:
            h, w = self.crop.shape
            m[self.y0 : self.y0 + h, self.x0 : self.x0 + w] = self.crop
        return m

    def to_annotation(self, frame_id: int, object_id: int) -> Annotation:
        if self.source is not None:
            return self.source.with_object_id(object_id)
        if self.crop is None:
            return Annotation.from_mask(frame_id, object_id, self.mask)
        return Annotation.from_crop(frame_id, object_id, self.crop, self.x0, self.y0, self.height, self.width)


@dataclass
class TrackedFrame:
    frame_id: int
    assignments: list[tuple[int, Instance, BBox]] = field(default_factory=list)

    def to_annotations(self) -> list[Annotation]:
        return [inst.to_annotation(self.frame_id, oid) for oid, inst, _ in self.assignments]


def filter_border_instances(
    boxes: Sequence[BBox | None], image_height: int, margin: int = 2
) -> list[int]:
    """Indices of instances whose box stays clear of the top/bottom margin rows."""
    keep = []
    for i, b in enumerate(boxes):
        if b is None:
            continue
        if margin > 0 and (b.y1 < margin or b.y2 > image_height - margin):
            continue
        keep.append(i)
    return keep


def _crop_feature(inst: Instance, cfg: TrackerConfig) -> np.ndarray | None:
    crop = np.ascontiguousarray(inst.crop, dtype=np.uint8)
    try:
        return shape_feature_from_contour(contour_of_crop(crop, inst.x0, inst.y0), cfg.fd_length, cfg.feature_mode)
    except ShapeFeatureError:
        return None


def _reading_order(boxes: Sequence[BBox]) -> list[int]:
    return sorted(range(len(boxes)), key=lambda i: (boxes[i].center[1], boxes[i].center[0], i))


class Tracker:
    """Stateful tracker; feed frames in increasing frame-id order via :meth:`step`."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.store = assoc.TrackStore()
        self.frame_id: int | None = None
        self.prev_ids: list[int] = []  # ids carried by the last frame that had any
        self.last_window: tuple[int, int] | None = None
        self.timings: list[float] = []  # seconds spent in step() per frame

    def step(self, frame_id: int, instances: Sequence[Instance | np.ndarray], image_height: int | None = None) -> TrackedFrame:
        if self.frame_id is not None and frame_id <= self.frame_id:
            raise NonMonotonicFrameId(f"frame {frame_id} after frame {self.frame_id}")
        t0 = time.perf_counter()
        cfg = self.config
        kp = cfg.kalman
        insts = [i if isinstance(i, Instance) else Instance.from_mask(i) for i in instances]
        if image_height is None:
            image_height = insts[0].height if insts else 0

        boxes = [i.box for i in insts]
        keep = filter_border_instances(boxes, image_height, cfg.border_margin)
        insts = [insts[i] for i in keep]
        boxes = [boxes[i] for i in keep]
        dets = [assoc.Detection(b, _crop_feature(inst, cfg)) for inst, b in zip(insts, boxes)]

        candidates = assoc.candidate_window(self.store, self.prev_ids, cfg.s)
        self.last_window = assoc.window_range(self.prev_ids, cfg.s) if self.prev_ids else None
        predicted = []
        for t in candidates:
            if t.active:
                t.box_state, pb = kf_predict(t.box_state, kp)
                predicted.append(pb)
            else:
                predicted.append(t.last_box)
        cm = assoc.build_cost_matrix(
            candidates, predicted, dets, cfg.t_all, cfg.t_p, cfg.fallback_shape_cost
        )
        result = assoc.solve_assignment(cm)

        owner: dict[int, int] = {}
        for tid, j in result.matches:
            t = self.store[tid]
            d = dets[j]
            if t.active:
                t.box_state = kf_update(t.box_state, d.box, kp)
            else:
                t.box_state = kf_init(d.box, kp)
            t.active = True
            t.last_box = d.box
            if d.shape is not None:
                t.shape = d.shape
            t.last_seen_frame = frame_id
            owner[j] = tid

        matched = set(owner.values())
        for t in candidates:
            if t.id not in matched:
                t.active = False
        # active tracks outside the window cannot be matched either
        for t in self.store.tracks.values():
            if t.active and t.id not in matched:
                t.active = False

        for j in _reading_order([dets[j].box for j in result.unmatched_detections]):
            j = result.unmatched_detections[j]
            d = dets[j]
            tid = self.store.new_id()
            self.store.add(assoc.Track(tid, kf_init(d.box, kp), d.box, d.shape, frame_id, True))
            owner[j] = tid

        if owner:
            self.prev_ids = sorted(owner.values())
        self.frame_id = frame_id
        self.timings.append(time.perf_counter() - t0)
        return TrackedFrame(frame_id, [(owner[j], insts[j], dets[j].box) for j in range(len(dets))])

    def run(self, series: FrameSeries) -> list[TrackedFrame]:
        out = []
        for frame_id, anns in series:
            plants = [a for a in anns if a.category == VEGETABLE]
            insts = [Instance.from_annotation(a) for a in plants]
            height = anns[0].image_height if anns else None
            out.append(self.step(frame_id, insts, height))
        return out


def run(series: FrameSeries, config: TrackerConfig | None = None) -> list[TrackedFrame]:
    return Tracker(config).run(series)


def tracked_to_series(frames: Iterable[TrackedFrame]) -> FrameSeries:
    return FrameSeries([(f.frame_id, f.to_annotations()) for f in frames if f.assignments])
