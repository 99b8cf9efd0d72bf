"""Matching costs, candidate window and Hungarian assignment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ZeroVector
from .motion_model import BBox, BoxState, giou, giou_matrix

WINDOW_SLACK = 6
T_ALL = 0.1
T_P = 0.4
FALLBACK_SHAPE_COST = 0.05


@dataclass
class Track:
    id: int
    box_state: BoxState
    last_box: BBox
    shape: np.ndarray | None
    last_seen_frame: int
    active: bool = True


@dataclass
class TrackStore:
    """Every track ever created, keyed by id; ids are issued sequentially."""

    tracks: dict[int, Track] = field(default_factory=dict)
    next_id: int = 0

    def new_id(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i

    def add(self, track: Track) -> None:
        if track.id in self.tracks:
            raise ValueError(f"duplicate track id {track.id}")
        self.tracks[track.id] = track
        self.next_id = max(self.next_id, track.id + 1)

    def __len__(self):
        return len(self.tracks)

    def __getitem__(self, track_id: int) -> Track:
        return self.tracks[track_id]


@dataclass(frozen=True)
class Detection:
    box: BBox
    shape: np.ndarray | None  # None when the shape feature is unavailable


@dataclass
class CostMatrix:
    track_ids: list[int]
    cost: np.ndarray  # shape (tracks, detections), np.inf where forbidden
    position_cost: np.ndarray
    shape_cost: np.ndarray
    alpha: np.ndarray  # per row


# --------------------------------------------------------------------------
# Costs


def position_cost(predicted: BBox, detected: BBox) -> float:
    return -giou(predicted, detected)


def shape_cost(prev, cur) -> float:
    """Cosine distance ``1 - <a, b> / (|a| |b|)``."""
    a = np.asarray(prev, dtype=np.float64)
    b = np.asarray(cur, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine distance of an all-zero feature")
    return float(1.0 - a @ b / (na * nb))


def overall_cost(delta_s: float, delta_p: float, alpha: float) -> float:
    return delta_s * (1.0 + alpha * delta_p)


def shape_cost_matrix(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    prev = np.asarray(prev, dtype=np.float64)
    cur = np.asarray(cur, dtype=np.float64)
    np_ = np.linalg.norm(prev, axis=1, keepdims=True)
    nc = np.linalg.norm(cur, axis=1, keepdims=True)
    if (np_ == 0).any() or (nc == 0).any():
        raise ZeroVector("cosine distance of an all-zero feature")
    return 1.0 - (prev / np_) @ (cur / nc).T


# --------------------------------------------------------------------------
# Candidate window


def window_range(prev_ids: Iterable[int], s: int = WINDOW_SLACK) -> tuple[int, int]:
    ids = list(prev_ids)
    return max(min(ids) - s, 0), max(ids) + s


def candidate_window(store: TrackStore, prev_ids: Iterable[int], s: int = WINDOW_SLACK) -> list[Track]:
    """Stored tracks, active or not, with ids in ``[min - s, max + s]``."""
    ids = list(prev_ids)
    if not ids:
        return []
    lo, hi = window_range(ids, s)
    if hi - lo + 1 < len(store.tracks):
        return [store.tracks[i] for i in range(lo, hi + 1) if i in store.tracks]
    return [t for i, t in sorted(store.tracks.items()) if lo <= i <= hi]


# --------------------------------------------------------------------------
# Cost matrix


def build_cost_matrix(
    candidates: Sequence[Track],
    predicted: Sequence[BBox],
    detections: Sequence[Detection],
    t_all: float = T_ALL,
    t_p: float = T_P,
    fallback_shape_cost: float = FALLBACK_SHAPE_COST,
) -> CostMatrix:
    """Gated overall costs between candidate tracks and detections.

    ``predicted[i]`` is the box compared against detections for track ``i``;
    callers pass the Kalman prediction for active tracks and the frozen last
    box for inactive ones. Rows use ``alpha = 1`` for active tracks and 0
    otherwise. A pair where either side has no shape feature falls back to
    ``delta_s = fallback_shape_cost`` with ``alpha = 1``.
    """
    n, m = len(candidates), len(detections)
    ids = [t.id for t in candidates]
    if n == 0 or m == 0:
        empty = np.zeros((n, m))
        return CostMatrix(ids, np.full((n, m), np.inf), empty, empty.copy(), np.zeros(n))

    pred = np.array([b.as_array() for b in predicted])
    det = np.array([d.box.as_array() for d in detections])
    dp = -giou_matrix(pred, det)

    alpha = np.array([1.0 if t.active else 0.0 for t in candidates])
    have_t = np.array([t.shape is not None for t in candidates])
    have_d = np.array([d.shape is not None for d in detections])
    ds = np.full((n, m), float(fallback_shape_cost))
    if have_t.any() and have_d.any():
        ti = np.flatnonzero(have_t)
        di = np.flatnonzero(have_d)
        ds[np.ix_(ti, di)] = shape_cost_matrix(
            np.stack([candidates[i].shape for i in ti]), np.stack([detections[j].shape for j in di])
        )
    a = np.repeat(alpha[:, None], m, axis=1)
    a[~(have_t[:, None] & have_d[None, :])] = 1.0

    cost = ds * (1.0 + a * dp)
    cost[~((cost < t_all) & (dp < t_p))] = np.inf
    return CostMatrix(ids, cost, dp, ds, alpha)


# --------------------------------------------------------------------------
# Assignment


@dataclass
class Assignment:
    matches: list[tuple[int, int]]  # (track id, detection index)
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def solve_assignment(m: CostMatrix) -> Assignment:
    """Minimum-cost one-to-one matching over the finite cells of ``m``.

    Forbidden cells get a sentinel larger than any feasible total, and
    matches landing on it are dropped afterwards.
    """
    rows, cols = solve_min_cost(m.cost)
    matched_r = set(rows)
    matched_c = set(cols)
    return Assignment(
        matches=[(m.track_ids[r], c) for r, c in zip(rows, cols)],
        unmatched_tracks=[tid for r, tid in enumerate(m.track_ids) if r not in matched_r],
        unmatched_detections=[c for c in range(m.cost.shape[1]) if c not in matched_c],
    )


def solve_min_cost(cost: np.ndarray) -> tuple[list[int], list[int]]:
    cost = np.asarray(cost, dtype=np.float64)
    n, k = cost.shape
    finite = np.isfinite(cost)
    if n == 0 or k == 0 or not finite.any():
        return [], []
    biggest = float(np.abs(cost[finite]).max())
    sentinel = (biggest + 1.0) * n * k + 1.0
    work = np.where(finite, cost, sentinel)
    r, c = linear_sum_assignment(work)
    keep = finite[r, c]
    return r[keep].tolist(), c[keep].tolist()
