import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from scribblesim import mask as mk
from scribblesim.errors import DimensionMismatchError, EmptyMaskError, TooFewPointsError
from scribblesim.rng import SplitMix64
from scribblesim.skeleton import medial_axis
from scribblesim.synth import (IGNORE, InstanceAnnotation, ScribbleStyle, SimulationConfig, bezier_smooth,
                               boundary_arc, bresenham, de_casteljau, decide_style, random_affine, rasterize,
                               simulate_image, simulate_image_with_summary, simulate_instance)


class FixedDeltas:
    """Stands in for the generator: uniform(low, high) returns scripted deltas."""

    def __init__(self, *deltas):
        self.deltas = list(deltas)

    def uniform(self, low=0.0, high=1.0):
        return self.deltas.pop(0)


def disk(h, w, ratio):
    r = math.sqrt(ratio * h * w / math.pi)
    yy, xx = np.mgrid[:h, :w]
    return (xx - (w - 1) / 2) ** 2 + (yy - (h - 1) / 2) ** 2 <= r * r


def test_config_defaults_and_validation():
    c = SimulationConfig()
    assert (c.erosion_k, c.style_gain, c.style_cap, c.stroke_width) == (20, 3.0, 0.9, 3)
    assert (c.bezier_samples_per_segment, c.min_component_area, c.background_horizontal_split) == (16, 100, False)
    for bad in ({"erosion_k": -1}, {"style_cap": 0}, {"style_cap": 1.5}, {"stroke_width": 0},
                {"bezier_samples_per_segment": 1}):
        with pytest.raises(ValueError):
            SimulationConfig(**bad)
    with pytest.raises(ValueError):
        SimulationConfig.from_dict({"nope": 1})
    assert SimulationConfig.from_dict(c.to_dict(), global_seed=5).global_seed == 5


def test_decide_style_consumes_one_draw():
    g = SplitMix64(11)
    ref = SplitMix64(11)
    decide_style(0.2, g)
    ref.uniform()
    assert g.state == ref.state


def test_decide_style_cap_and_limit():
    g = SplitMix64(0)
    n = 5000
    assert sum(decide_style(1e-9, g) is ScribbleStyle.BOUNDARY for _ in range(n)) == 0
    hits = sum(decide_style(0.3, g) is ScribbleStyle.BOUNDARY for _ in range(n))
    assert abs(hits / n - 0.9) <= 3 * math.sqrt(0.09 / n)
    with pytest.raises(ValueError):
        decide_style(1.0, g)


def test_decide_style_frequency_within_three_sigma():
    g = SplitMix64(77)
    n = 30000
    hits = sum(decide_style(0.1, g) is ScribbleStyle.BOUNDARY for _ in range(n))
    assert abs(hits / n - 0.3) <= 3 * math.sqrt(0.3 * 0.7 / n)


def test_random_affine_examples():
    c = (10.0, 20.0)
    assert random_affine([[15, 20]], c, 5, FixedDeltas(2.0)).tolist() == [[17.0, 20.0]]
    out = random_affine([[13, 24]], c, 5, FixedDeltas(5.0))
    assert np.allclose(out, [[16, 28]], atol=1e-12)
    assert random_affine([[10, 20]], c, 5, FixedDeltas(3.0)).tolist() == [[10.0, 20.0]]
    pts = np.array([[1.0, 2.0], [7.0, -3.0]])
    assert np.array_equal(random_affine(pts, (0, 0), 0, SplitMix64(1)), pts)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=1, max_size=20),
       st.floats(0, 20), st.integers(0, 2 ** 32))
def test_random_affine_moves_radially_by_at_most_k(points, k, seed):
    c = np.array([0.5, -0.25])
    pts = np.array(points)
    out = random_affine(pts, c, k, SplitMix64(seed))
    shift = out - pts
    assert np.all(np.hypot(*shift.T) <= k + 1e-9)
    # displacement is parallel to the ray from the centroid
    ray = pts - c
    cross = ray[:, 0] * shift[:, 1] - ray[:, 1] * shift[:, 0]
    assert np.allclose(cross, 0, atol=1e-7 * (1 + np.hypot(*ray.T).max()))


def bernstein(control, t):
    control = np.asarray(control, float)
    n = len(control) - 1
    return sum(math.comb(n, i) * (1 - t) ** (n - i) * t ** i * control[i] for i in range(n + 1))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=4, max_size=4),
       st.floats(0, 1))
def test_de_casteljau_matches_bernstein(ctrl, t):
    assert np.allclose(de_casteljau(ctrl, [t])[0], bernstein(ctrl, t), atol=1e-9)


def test_bezier_midpoint_and_segment():
    ctrl = [[0, 0], [0, 4], [4, 4], [4, 0]]
    out = bezier_smooth(ctrl, 3)
    assert np.allclose(out[1], [2, 3])
    seg = bezier_smooth([[0, 0], [6, 3]], 16)
    assert np.allclose(seg[:, 1], seg[:, 0] / 2)
    assert seg[:, 0].min() >= 0 and seg[:, 0].max() <= 6
    with pytest.raises(TooFewPointsError):
        bezier_smooth([[1, 1]])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=2, max_size=30),
       st.integers(2, 20))
def test_bezier_keeps_endpoints_and_window_joints(points, samples):
    pts = np.array(points)
    out = bezier_smooth(pts, samples)
    assert np.array_equal(out[0], pts[0]) and np.array_equal(out[-1], pts[-1])
    windows = math.ceil((len(pts) - 1) / 3)
    assert len(out) == 1 + windows * (samples - 1)
    for j in range(1, windows):  # C0: every third control point is on the curve
        assert np.allclose(out[j * (samples - 1)], pts[3 * j])


def reference_bresenham(x0, y0, x1, y1):
    """Error-term Bresenham, all octants, with ties rounded towards +inf."""
    pts = []
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx, sy = (1 if x1 >= x0 else -1), (1 if y1 >= y0 else -1)
    if dx >= dy:
        n = dx
        for i in range(n + 1):
            t = 0 if n == 0 else i * dy / n
            pts.append((x0 + sx * i, y0 + sy * math.floor(t + 0.5)))
    else:
        for i in range(dy + 1):
            t = i * dx / dy
            pts.append((x0 + sx * math.floor(t + 0.5), y0 + sy * i))
    return pts


@settings(max_examples=100, deadline=None)
@given(*[st.integers(-30, 30)] * 4)
def test_bresenham_against_reference(x0, y0, x1, y1):
    got = [tuple(p) for p in bresenham(x0, y0, x1, y1).tolist()]
    assert got == reference_bresenham(x0, y0, x1, y1)
    for a, b in zip(got, got[1:]):
        assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


def test_rasterize_examples():
    clip = np.ones((10, 20), bool)
    one = rasterize([[4.2, 5.4]], 1, clip)
    assert one.sum() == 1 and one[5, 4]
    line = rasterize([[3, 2], [12, 2]], 1, clip)
    assert line.sum() == 10 and line[2, 3:13].all()
    assert not rasterize([[3, 2], [12, 7]], 3, np.zeros((10, 20), bool)).any()
    thick = rasterize([[10, 5]], 3, clip)
    assert thick.sum() == 9  # radius 1.5 disk is the 3x3 block
    edge = rasterize([[0, 0]], 3, clip)
    assert edge.sum() == 4
    with pytest.raises(DimensionMismatchError):
        rasterize([[0, 0]], 1, clip, width=5, height=5)


def test_boundary_arc_full_and_partial():
    pts = np.arange(20, dtype=float).reshape(10, 2)
    g = SplitMix64(1)
    full, closed = boundary_arc(pts, 1.0, 1.0, g)
    assert closed and np.array_equal(full, pts) and g.state == SplitMix64(1).state
    part, closed = boundary_arc(pts, 0.3, 0.3, g)
    assert not closed and len(part) == 3


def test_background_is_line_without_smoothing():
    m = np.ones((40, 60), bool)
    m[10:30, 20:40] = False
    trace = []
    out = simulate_instance(InstanceAnnotation(0, m), SimulationConfig(), SplitMix64(4), trace)
    (t,) = trace
    assert t.style is ScribbleStyle.LINE
    assert np.array_equal(t.control_points, np.asarray(t.path.points, float))
    assert not (out & ~m).any()


def test_foreground_line_is_smoothed_skeleton_path():
    m = np.zeros((30, 60), bool)
    m[12:17, 5:55] = True  # thin bar: ratio 0.14, k=20 erodes it away
    trace = []
    simulate_instance(InstanceAnnotation(2, m), SimulationConfig(), SplitMix64(0), trace)
    (t,) = trace
    assert t.style is ScribbleStyle.LINE
    skel = medial_axis(m)
    assert all(skel[y, x] for x, y in t.path.points)
    assert np.array_equal(t.control_points[0], t.path.points[0])


def test_large_disk_gets_boundary_within_jitter_band():
    m = disk(100, 100, 0.6)
    cfg = SimulationConfig()
    eroded = mk.erode(m, cfg.erosion_k)
    edge = eroded & ~ndimage.binary_erosion(eroded)
    dist = ndimage.distance_transform_edt(~edge)
    band = cfg.erosion_k + cfg.stroke_width / 2 + 1
    n = 200
    boundary = 0
    for seed in range(n):
        trace = []
        out = simulate_instance(InstanceAnnotation(3, m), cfg, SplitMix64(seed), trace)
        assert out.any() and not (out & ~m).any()
        if trace[0].style is ScribbleStyle.BOUNDARY:
            boundary += 1
            assert dist[out].max() <= band
    assert abs(boundary / n - 0.9) <= 3 * math.sqrt(0.09 / n)


def test_boundary_scribble_is_jittered():
    m = disk(100, 100, 0.6)
    cfg = SimulationConfig(style_cap=1.0, style_gain=10)
    pts = mk.extract_boundary(mk.erode(m, cfg.erosion_k), cfg.boundary_tolerance)
    for seed in range(20):
        trace = []
        simulate_instance(InstanceAnnotation(3, m), cfg, SplitMix64(seed), trace)
        ctrl = trace[0].control_points
        assert trace[0].style is ScribbleStyle.BOUNDARY
        assert not np.allclose(ctrl[:len(pts)], pts)


def test_eroded_away_boundary_falls_back_to_line():
    m = np.zeros((20, 20), bool)
    m[2:18, 2:18] = True
    cfg = SimulationConfig(style_cap=1.0, style_gain=100)
    trace = []
    simulate_instance(InstanceAnnotation(1, m), cfg, SplitMix64(0), trace)
    assert trace[0].style is ScribbleStyle.LINE and trace[0].fell_back


def test_small_components_skipped():
    m = np.zeros((30, 30), bool)
    m[1:4, 1:4] = True
    with pytest.raises(EmptyMaskError):
        simulate_instance(InstanceAnnotation(1, m), SimulationConfig(), SplitMix64(0))
    m[10:25, 10:25] = True
    trace = []
    out = simulate_instance(InstanceAnnotation(1, m), SimulationConfig(), SplitMix64(0), trace)
    assert len(trace) == 1 and not out[1:4, 1:4].any()


def test_image_examples():
    cfg = SimulationConfig()
    empty = simulate_image([], cfg, 1, shape=(8, 9))
    assert empty.shape == (8, 9) and (empty == IGNORE).all()
    m = disk(64, 64, 0.2)
    lab = simulate_image([InstanceAnnotation(7, m)], cfg, 99)
    assert set(np.unique(lab)) <= {7, IGNORE} and (lab == 7).any()
    again = simulate_image([InstanceAnnotation(7, m)], cfg, 99)
    assert lab.tobytes() == again.tobytes()
    with pytest.raises(DimensionMismatchError):
        simulate_image([InstanceAnnotation(1, m), InstanceAnnotation(2, m[:10])], cfg, 0)
    with pytest.raises(ValueError):
        simulate_image([InstanceAnnotation(255, m)], cfg, 0)


def test_image_containment_and_background_last():
    fg = disk(64, 80, 0.15)
    other = np.zeros_like(fg)
    other[2:20, 2:30] = True
    other &= ~fg
    bg = ~(fg | other)
    insts = [InstanceAnnotation(0, bg), InstanceAnnotation(4, fg), InstanceAnnotation(9, other)]
    for seed in range(10):
        lab = simulate_image(insts, SimulationConfig(global_seed=seed), 1234)
        for inst in insts:
            assert not ((lab == inst.class_id) & ~inst.mask).any()


def test_horizontal_split_draws_two_background_strokes():
    bg = np.ones((60, 80), bool)
    bg[20:40, 30:50] = False
    cfg = SimulationConfig(background_horizontal_split=True)
    lab, summary = simulate_image_with_summary([InstanceAnnotation(0, bg)], cfg, 5)
    assert summary.styles["line"] == 2
    assert (lab[:30] == 0).any() and (lab[30:] == 0).any()
