import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assignment_oracle import brute_force
from plantmots.association import (
    CostMatrix,
    Detection,
    Track,
    TrackStore,
    build_cost_matrix,
    candidate_window,
    overall_cost,
    position_cost,
    shape_cost,
    shape_cost_matrix,
    solve_assignment,
    solve_min_cost,
    window_range,
)
from plantmots.errors import ZeroVector
from plantmots.motion_model import BBox, kf_init

INF = np.inf


def _track(i, box, shape, active=True):
    return Track(i, kf_init(box), box, None if shape is None else np.asarray(shape, float), 0, active)


def _store(ids):
    st_ = TrackStore()
    for i in ids:
        st_.add(_track(i, BBox(0, 0, 1, 1), [1.0, 0.0]))
    return st_


# --- costs ------------------------------------------------------------------------------


def test_position_cost():
    a = BBox(0, 0, 1, 1)
    assert position_cost(a, a) == -1.0
    assert position_cost(a, BBox(1, 0, 2, 1)) == 0.0
    far = position_cost(a, BBox(1e6, 1e6, 1e6 + 1, 1e6 + 1))
    assert 0.999 < far < 1.0


def test_shape_cost():
    v = np.array([0.3, 1.2, 0.5, 2.0])
    assert shape_cost(v, v) == pytest.approx(0, abs=1e-15)
    assert shape_cost([1, 0, 0], [0, 1, 0]) == pytest.approx(1)
    assert shape_cost(2 * v, v) == pytest.approx(0, abs=1e-15)
    assert shape_cost([1, 0], [-1, 0]) == pytest.approx(2)
    with pytest.raises(ZeroVector):
        shape_cost([0, 0], [1, 0])


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_shape_cost_range_and_matrix(a, b):
    if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
        return
    d = shape_cost(a, b)
    assert -1e-12 <= d <= 2 + 1e-12
    assert shape_cost_matrix([a], [b])[0, 0] == pytest.approx(d, abs=1e-12)


def test_overall_cost():
    assert overall_cost(0.05, -1.0, 1.0) == 0.0
    assert overall_cost(0.07, 0.3, 0.0) == 0.07
    assert overall_cost(0.0, 0.9, 1.0) == 0.0
    assert overall_cost(0.05, 0.2, 1.0) == pytest.approx(0.06)


# --- window -------------------------------------------------------------------------------


def test_window_examples():
    store = _store(range(20))
    assert [t.id for t in candidate_window(store, {7, 9}, 6)] == list(range(1, 16))
    assert [t.id for t in candidate_window(store, {2}, 6)] == list(range(0, 9))
    assert [t.id for t in candidate_window(store, {4}, 0)] == [4]
    assert window_range([7, 9], 6) == (1, 15)


def test_window_includes_inactive_and_skips_missing():
    store = _store([0, 3, 5, 30])
    store[3].active = False
    assert [t.id for t in candidate_window(store, [4], 2)] == [3, 5]
    assert candidate_window(store, [], 6) == []


@given(st.sets(st.integers(0, 60), min_size=1, max_size=10), st.sets(st.integers(0, 80), max_size=40),
       st.integers(0, 10), st.integers(0, 10))
def test_window_monotone_in_slack(prev, stored, s, extra):
    store = _store(sorted(stored))
    small = {t.id for t in candidate_window(store, prev, s)}
    big = {t.id for t in candidate_window(store, prev, s + extra)}
    assert small <= big
    lo, hi = window_range(prev, s)
    assert small == {i for i in stored if lo <= i <= hi}


# --- cost matrix ------------------------------------------------------------------------


def test_empty_candidates():
    m = build_cost_matrix([], [], [Detection(BBox(0, 0, 1, 1), np.ones(3))])
    assert m.cost.shape == (0, 1)


def test_identical_track_and_detection():
    b = BBox(10, 10, 30, 40)
    t = _track(0, b, [1.0, 2.0, 3.0])
    m = build_cost_matrix([t], [b], [Detection(b, np.array([1.0, 2.0, 3.0]))])
    assert m.cost.shape == (1, 1) and m.cost[0, 0] == pytest.approx(0, abs=1e-12)


def test_position_gate():
    # boxes 1x1 at horizontal distance 1 apart: GIoU -1/3, so delta_p = 1/3
    a, near, far = BBox(0, 0, 1, 1), BBox(2, 0, 3, 1), BBox(3, 0, 4, 1)
    t = _track(0, a, [1.0, 0.0])
    same = np.array([1.0, 0.0])
    m = build_cost_matrix([t], [a], [Detection(near, same), Detection(far, same)])
    assert m.position_cost[0, 0] == pytest.approx(1 / 3)
    assert m.position_cost[0, 1] == pytest.approx(0.5)  # above T_p = 0.4
    assert np.isfinite(m.cost[0, 0]) and m.cost[0, 1] == INF


def test_shape_gate_and_alpha():
    b = BBox(0, 0, 10, 10)
    shifted = BBox(2, 0, 12, 10)
    f = np.array([1.0, 0.2, 0.1])
    g = np.array([1.0, 0.5, 0.1])
    active = _track(0, b, f)
    inactive = _track(1, b, f, active=False)
    m = build_cost_matrix([active, inactive], [b, b], [Detection(shifted, g)])
    ds = shape_cost(f, g)
    dp = position_cost(b, shifted)
    assert m.alpha.tolist() == [1.0, 0.0]
    assert m.cost[0, 0] == pytest.approx(ds * (1 + dp))
    assert m.cost[1, 0] == ds  # alpha = 0: exactly the shape cost
    wild = np.array([0.0, 1.0, 0.0])
    m2 = build_cost_matrix([active, inactive], [b, b], [Detection(shifted, wild)])
    assert (m2.cost[:, 0] == INF).all()  # shape cost near 1, far above T_all
    # a perfect box overlap zeroes the active cost whatever the shape
    m3 = build_cost_matrix([active], [b], [Detection(b, wild)])
    assert m3.cost[0, 0] == 0.0


def test_missing_shape_falls_back():
    b = BBox(0, 0, 10, 10)
    t = _track(0, b, None, active=False)
    m = build_cost_matrix([t], [b], [Detection(b, np.array([1.0, 2.0]))], fallback_shape_cost=0.05)
    assert m.cost[0, 0] == pytest.approx(0.05 * (1 - 1))


@given(st.integers(0, 10_000))
@settings(max_examples=60)
def test_gate_soundness(seed):
    rng = np.random.default_rng(seed)
    n, k = rng.integers(0, 6), rng.integers(0, 6)
    tracks, preds = [], []
    for i in range(n):
        x, y = rng.uniform(0, 50, 2)
        b = BBox(x, y, x + rng.uniform(5, 20), y + rng.uniform(5, 20))
        tracks.append(_track(i, b, rng.uniform(0.1, 1, 4), active=bool(rng.integers(2))))
        preds.append(b)
    dets = []
    for _ in range(k):
        x, y = rng.uniform(0, 50, 2)
        dets.append(Detection(BBox(x, y, x + rng.uniform(5, 20), y + rng.uniform(5, 20)), rng.uniform(0.1, 1, 4)))
    m = build_cost_matrix(tracks, preds, dets)
    res = solve_assignment(m)
    rows = {tid: r for r, tid in enumerate(m.track_ids)}
    for tid, j in res.matches:
        r = rows[tid]
        assert m.cost[r, j] < 0.1 and m.position_cost[r, j] < 0.4
        if m.alpha[r] == 0:
            assert m.cost[r, j] == m.shape_cost[r, j]
    assert len(res.matches) + len(res.unmatched_tracks) == n
    assert len(res.matches) + len(res.unmatched_detections) == k


# --- assignment -------------------------------------------------------------------------


def _total(cost, rows, cols):
    return float(sum(cost[r, c] for r, c in zip(rows, cols)))


def test_two_by_two():
    c = np.array([[1.0, 2.0], [2.0, 4.0]])
    rows, cols = solve_min_cost(c)
    assert sorted(zip(rows, cols)) == [(0, 1), (1, 0)] and _total(c, rows, cols) == 4


def test_all_forbidden():
    m = CostMatrix([3, 4], np.full((2, 3), INF), np.zeros((2, 3)), np.zeros((2, 3)), np.ones(2))
    res = solve_assignment(m)
    assert res.matches == [] and res.unmatched_tracks == [3, 4] and res.unmatched_detections == [0, 1, 2]


def test_forbidden_cells_never_matched():
    c = np.array([[INF, 0.01], [INF, 0.02]])
    rows, cols = solve_min_cost(c)
    assert list(zip(rows, cols)) == [(0, 1)]


def test_equal_cost_goes_to_lower_track_id():
    m = CostMatrix([2, 5, 9], np.array([[0.03], [0.03], [0.03]]), np.zeros((3, 1)), np.zeros((3, 1)), np.ones(3))
    assert solve_assignment(m).matches == [(2, 0)]


def test_six_by_six_against_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        c = rng.uniform(0, 1, (6, 6))
        rows, cols = solve_min_cost(c)
        assert len(rows) == 6
        assert _total(c, rows, cols) == pytest.approx(brute_force(c)[1], abs=1e-12)


@given(st.integers(0, 100_000))
@settings(max_examples=200, deadline=None)
def test_optimal_up_to_eight_with_forbidden_cells(seed):
    rng = np.random.default_rng(seed)
    n, k = rng.integers(1, 9, 2)
    c = rng.integers(0, 100, (n, k)).astype(float)
    c[rng.random((n, k)) < rng.uniform(0, 0.7)] = INF
    rows, cols = solve_min_cost(c)
    count, total = brute_force(c)
    assert len(rows) == count
    assert _total(c, rows, cols) == total
    assert len(set(rows)) == len(rows) and len(set(cols)) == len(cols)
