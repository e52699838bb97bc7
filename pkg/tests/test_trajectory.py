import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import brute_min_approach, brute_mpd, loop_moving_average

from pedswerve.errors import DegenerateTrajectoryError, InvalidConfigError, InvalidInputError, NoOverlapError
from pedswerve.trajectory import (
    ApproachRegion,
    Encounter,
    PreprocessConfig,
    TrackPoint,
    Trajectory,
    approach_angle_deg,
    compute_mpd,
    distance_series,
    extract_approach_region,
    identify_swerver,
    is_roughly_perpendicular,
    min_approach_point,
    preprocess_encounter,
    rotate_axis_align,
    scale_to_cm,
    smooth_moving_average,
)


def traj(pid, pos, start=0, fps=30.0):
    pos = np.asarray(pos, float)
    return Trajectory(pid, np.arange(start, start + len(pos)), pos, fps)


def random_encounter(r, n=None):
    n = n or int(r.integers(5, 80))
    a = np.cumsum(r.normal([1.0, 0.0], 0.5, (n, 2)), axis=0) * r.uniform(1, 50)
    b = np.cumsum(r.normal([0.0, 1.0], 0.5, (n, 2)), axis=0) * r.uniform(1, 50) + r.normal(0, 30, 2)
    return Encounter(traj("a", a), traj("b", b))


# -- types -------------------------------------------------------------------------

def test_trackpoint_validation():
    with pytest.raises(InvalidInputError):
        TrackPoint(-1, (0.0, 0.0))
    with pytest.raises(InvalidInputError):
        TrackPoint(0, (math.nan, 0.0))


@pytest.mark.parametrize("frames,pos", [
    ([0, 0, 1], [[0, 0]] * 3),
    ([0], [[0, 0]]),
    ([0, 1], [[0, 0], [math.inf, 0]]),
])
def test_trajectory_invariants(frames, pos):
    with pytest.raises(InvalidInputError):
        Trajectory("p", frames, pos)


def test_trajectory_rejects_bad_fps():
    with pytest.raises(InvalidConfigError):
        Trajectory("p", [0, 1], [[0, 0], [1, 1]], fps=0)


def test_trajectory_points_round_trip():
    t = traj("p", [[0, 1], [2, 3], [4, 5]])
    assert Trajectory.from_points("p", t.points).pos.tolist() == t.pos.tolist()


def test_encounter_overlap_and_errors():
    a = traj("a", np.zeros((10, 2)))
    b = traj("b", np.ones((10, 2)), start=5)
    assert Encounter(a, b).overlap.tolist() == [5, 6, 7, 8, 9]
    with pytest.raises(NoOverlapError):
        Encounter(a, traj("c", np.zeros((3, 2)), start=20))


def test_preprocess_config_validation():
    with pytest.raises(InvalidConfigError):
        PreprocessConfig(cm_per_pixel=0)
    with pytest.raises(InvalidConfigError):
        PreprocessConfig(smooth_window=0)
    with pytest.raises(InvalidConfigError):
        PreprocessConfig(approach_half_window=0)
    cfg = PreprocessConfig.for_fps(25.0)
    assert cfg.smooth_window == 25 and cfg.approach_half_window == 25


# -- scaling -----------------------------------------------------------------------

def test_scale_examples(rng):
    t = traj("p", [[10, 20], [0, 0]])
    assert scale_to_cm(t, PreprocessConfig(cm_per_pixel=2.5)).pos[0].tolist() == [25.0, 50.0]
    assert np.array_equal(scale_to_cm(t, PreprocessConfig()).pos, t.pos)
    big = traj("q", rng.normal(0, 100, (100, 2)))
    s = 0.731
    out = scale_to_cm(big, PreprocessConfig(cm_per_pixel=s))
    expected = np.array([[s * v for v in row] for row in big.pos])
    assert np.max(np.abs(out.pos - expected)) == 0.0
    assert np.array_equal(out.frames, big.frames)


# -- smoothing ---------------------------------------------------------------------

def test_smoothing_examples():
    const = traj("c", np.full((20, 2), 5.0))
    assert np.array_equal(smooth_moving_average(const, 30).pos, const.pos)
    ramp = traj("r", np.column_stack([np.arange(30.0), np.zeros(30)]))
    assert smooth_moving_average(ramp, 3).pos[10, 0] == pytest.approx(10.0)
    step = traj("s", np.column_stack([(np.arange(30) >= 10).astype(float), np.zeros(30)]))
    out = smooth_moving_average(step, 3).pos[:, 0]
    assert out[9] == pytest.approx(1 / 3) and out[10] == pytest.approx(2 / 3)


def test_even_window_convention():
    # window 4 covers two frames before and one after
    vals = np.arange(10.0) ** 2
    t = traj("v", np.column_stack([vals, vals]))
    out = smooth_moving_average(t, 4).pos[:, 0]
    assert out[5] == pytest.approx((9 + 16 + 25 + 36) / 4)


def test_smoothing_window_shrinks_at_ends():
    vals = np.array([0.0, 10, 20, 30, 40, 50, 60])
    out = smooth_moving_average(traj("v", np.column_stack([vals, vals])), 5).pos[:, 0]
    assert out[0] == 0.0 and out[-1] == 60.0
    assert out[1] == pytest.approx(10.0)


def test_smoothing_rejects_zero_window():
    with pytest.raises(InvalidConfigError):
        smooth_moving_average(traj("p", np.zeros((3, 2))), 0)


@given(arrays(np.float64, st.integers(2, 60), elements=st.floats(-1e4, 1e4)), st.integers(1, 40))
def test_smoothing_matches_loop_oracle(vals, w):
    t = traj("v", np.column_stack([vals, -vals]))
    out = smooth_moving_average(t, w).pos
    np.testing.assert_allclose(out[:, 0], loop_moving_average(vals, w), rtol=1e-9, atol=1e-7)
    assert np.array_equal(out[:, 1], -out[:, 0]) or np.allclose(out[:, 1], -out[:, 0], atol=1e-7)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.integers(2, 50), st.integers(1, 60))
def test_smoothing_constant_identity(cx, cy, n, w):
    t = traj("c", np.tile([cx, cy], (n, 1)))
    assert np.array_equal(smooth_moving_average(t, w).pos, t.pos)


# -- rotation ----------------------------------------------------------------------

def test_rotation_diagonal_example():
    L = 10.0
    steps = np.linspace(0, L, 11)
    a = traj("a", np.column_stack([steps, steps]) / math.sqrt(2))
    b = traj("b", np.column_stack([np.full(11, 5.0), np.linspace(-5, 5, 11)]))
    out = rotate_axis_align(Encounter(a, b))
    disp = out.swerver.net_displacement()
    assert disp[0] == pytest.approx(L) and abs(disp[1]) < 1e-12


def test_rotation_identity_when_aligned():
    a = traj("a", np.column_stack([np.arange(5.0), np.zeros(5)]))
    b = traj("b", np.column_stack([np.full(5, 2.0), np.arange(5.0)]))
    out = rotate_axis_align(Encounter(a, b))
    np.testing.assert_allclose(out.swerver.pos, a.pos, atol=1e-12)
    np.testing.assert_allclose(out.other.pos, b.pos, atol=1e-12)


def test_rotation_degenerate():
    a = traj("a", np.array([[1.0, 1.0], [2.0, 2.0], [1.0, 1.0]]))
    b = traj("b", np.column_stack([np.zeros(3), np.arange(3.0)]))
    with pytest.raises(DegenerateTrajectoryError):
        rotate_axis_align(Encounter(a, b))


@given(st.integers(0, 2**32 - 1))
def test_rotation_is_isometry(seed):
    enc = random_encounter(np.random.default_rng(seed))
    out = rotate_axis_align(enc)
    d0, d1 = distance_series(enc), distance_series(out)
    np.testing.assert_allclose(d1, d0, rtol=1e-9, atol=1e-9 * max(1.0, d0.max()))
    for t0, t1 in ((enc.swerver, out.swerver), (enc.other, out.other)):
        steps0 = np.hypot(*np.diff(t0.pos, axis=0).T)
        steps1 = np.hypot(*np.diff(t1.pos, axis=0).T)
        np.testing.assert_allclose(steps1, steps0, rtol=1e-9, atol=1e-9)
    disp = out.swerver.net_displacement()
    assert disp[0] > 0 and abs(disp[1]) <= 1e-9 * disp[0]


def test_perpendicular_classification():
    a = traj("a", np.column_stack([np.arange(5.0), np.zeros(5)]))
    b = traj("b", np.column_stack([np.zeros(5), np.arange(5.0)]))
    c = traj("c", np.column_stack([np.arange(5.0), np.arange(5.0) * 0.1]))
    assert approach_angle_deg(Encounter(a, b)) == pytest.approx(90.0)
    assert is_roughly_perpendicular(Encounter(a, b))
    assert not is_roughly_perpendicular(Encounter(a, c))


# -- minimum approach --------------------------------------------------------------

def test_min_approach_examples():
    f = np.arange(11.0)
    a = traj("a", np.column_stack([f, np.zeros(11)]))
    b = traj("b", np.column_stack([np.zeros(11), f - 5]))
    frame, d = min_approach_point(Encounter(a, b))
    assert frame == 2 and d == pytest.approx(math.sqrt(13))

    same = traj("s", np.column_stack([f, f]))
    assert min_approach_point(Encounter(same, traj("t", same.pos))) == (0, 0.0)

    par = traj("p", np.column_stack([f, np.full(11, 50.0)]))
    assert min_approach_point(Encounter(a, par)) == (0, 50.0)


@given(st.integers(0, 2**32 - 1))
def test_min_approach_matches_brute_force(seed):
    enc = random_encounter(np.random.default_rng(seed))
    a, b = enc.positions()
    assert min_approach_point(enc) == pytest.approx(brute_min_approach(enc.overlap, a, b), rel=0, abs=1e-12)


# -- approach region ---------------------------------------------------------------

def _vshape(n, m):
    f = np.arange(n, dtype=float)
    a = traj("a", np.column_stack([f, np.zeros(n)]))
    b = traj("b", np.column_stack([np.full(n, float(m)), np.abs(f - m) + 1.0]))
    return Encounter(a, b)


def test_region_windows():
    cfg = PreprocessConfig(approach_half_window=30)
    r = extract_approach_region(_vshape(301, 100), cfg)
    assert r.frames[0] == 70 and r.frames[-1] == 130 and len(r) == 61
    r = extract_approach_region(_vshape(301, 10), cfg)
    assert r.frames[0] == 0 and r.frames[-1] == 40


def test_straight_line_swerver_has_zero_deviation():
    n = 121
    f = np.arange(n, dtype=float)
    a = traj("a", np.column_stack([f * 3.3 - 200, np.zeros(n)]))
    b = traj("b", np.column_stack([np.full(n, 10.0), f * 2 - 120]))
    r = extract_approach_region(rotate_axis_align(Encounter(a, b)), PreprocessConfig())
    assert np.max(np.abs(r.y_series)) < 1e-9
    assert r.x_series[0] == 0.0


def test_region_distance_consistent_with_other_path(rng):
    enc = random_encounter(rng, 90)
    r = extract_approach_region(enc, PreprocessConfig(approach_half_window=10))
    d = np.hypot(r.x_series - r.other_xy[:, 0], r.y_series - r.other_xy[:, 1])
    np.testing.assert_allclose(d, r.d_series, rtol=1e-12, atol=1e-9)
    np.testing.assert_array_equal(r.samples()[:, 1], r.d_series)


@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_window_containment(seed, half):
    enc = random_encounter(np.random.default_rng(seed))
    r = extract_approach_region(enc, PreprocessConfig(approach_half_window=half))
    assert len(r) <= 2 * half + 1
    assert r.min_frame in r.frames
    assert r.d_series[r.min_index] == pytest.approx(r.d_series.min())


def test_region_requires_equal_lengths():
    with pytest.raises(InvalidInputError):
        ApproachRegion(np.arange(3), np.zeros(3), np.zeros(2), np.zeros(3), 0)


def test_identify_swerver_picks_deviating_pedestrian():
    n = 61
    f = np.arange(n, dtype=float)
    straight = traj("s", np.column_stack([np.full(n, 30.0), f - 30]))
    bump = traj("w", np.column_stack([f, 8 * np.exp(-((f - 30) / 8) ** 2)]))
    cfg = PreprocessConfig(approach_half_window=30)
    assert identify_swerver(Encounter(straight, bump), cfg).swerver.ped_id == "w"
    assert identify_swerver(Encounter(bump, straight), cfg).swerver.ped_id == "w"


def test_preprocess_pipeline_scales_before_extracting():
    n = 91
    f = np.arange(n, dtype=float)
    a = traj("a", np.column_stack([f, np.zeros(n)]))
    b = traj("b", np.column_stack([np.full(n, 45.0), f - 45]))
    cfg = PreprocessConfig(cm_per_pixel=2.0, smooth_window=1, approach_half_window=10)
    _, r = preprocess_encounter(Encounter(a, b), cfg)
    assert r.min_frame == 45 and r.d_series.min() == pytest.approx(0.0, abs=1e-9)
    assert r.x_series[-1] == pytest.approx(40.0)


# -- MPD -----------------------------------------------------------------------------

def test_mpd_examples():
    assert compute_mpd((0, 0), (1, 0), (10, 0), (-1, 0)) == pytest.approx(0.0)
    assert compute_mpd((0, -5), (0, 1), (-5, 0), (1, 0)) == pytest.approx(0.0)
    assert compute_mpd((0, 0), (1, 1), (0, 7), (1, 1)) == pytest.approx(7.0)
    # receding pedestrians: closest point is now
    assert compute_mpd((0, 0), (-1, 0), (10, 0), (1, 0)) == pytest.approx(10.0)


vec = st.tuples(st.floats(-100, 100), st.floats(-100, 100))


@given(vec, vec, vec, vec)
def test_mpd_properties(pa, va, pb, vb):
    mpd = compute_mpd(pa, va, pb, vb)
    now = math.hypot(pa[0] - pb[0], pa[1] - pb[1])
    assert mpd <= now + 1e-9
    assert mpd >= 0


def test_mpd_matches_dense_time_grid(rng):
    for _ in range(20):
        pa, va, pb, vb = rng.normal(0, 50, (4, 2))
        assert compute_mpd(pa, va, pb, vb) == pytest.approx(brute_mpd(pa, va, pb, vb, t_max=20), abs=1e-2)
