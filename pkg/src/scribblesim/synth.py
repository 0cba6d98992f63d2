"""Per-instance scribble synthesis and per-image integration.

Large objects tend to get boundary-style scribbles (a jittered copy of the
eroded contour); small ones get a line-style stroke along a random skeleton
path. Every stroke is clipped to the mask it was drawn for.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import mask as mk
from .errors import DimensionMismatchError, EmptyMaskError, TooFewPointsError
from .rng import SplitMix64, mix
from .skeleton import SkeletonPath, random_depth_search

IGNORE = 255
BACKGROUND = 0


class ScribbleStyle(str, enum.Enum):
    LINE = "line"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class SimulationConfig:
    erosion_k: int = 20
    style_gain: float = 3.0
    style_cap: float = 0.9
    stroke_width: int = 3
    bezier_samples_per_segment: int = 16
    min_component_area: int = 100
    background_horizontal_split: bool = False
    global_seed: int = 0
    boundary_tolerance: float = 1.0
    boundary_arc_min: float = 1.0
    boundary_arc_max: float = 1.0

    def __post_init__(self):
        problems = []
        if self.erosion_k < 0:
            problems.append("erosion_k must be >= 0")
        if not 0 < self.style_cap <= 1:
            problems.append("style_cap must lie in (0, 1]")
        if self.stroke_width < 1:
            problems.append("stroke_width must be >= 1")
        if self.bezier_samples_per_segment < 2:
            problems.append("bezier_samples_per_segment must be >= 2")
        if self.min_component_area < 1:
            problems.append("min_component_area must be >= 1")
        if self.boundary_tolerance < 0:
            problems.append("boundary_tolerance must be >= 0")
        if not 0 < self.boundary_arc_min <= self.boundary_arc_max <= 1:
            problems.append("need 0 < boundary_arc_min <= boundary_arc_max <= 1")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> SimulationConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{**data, **overrides})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InstanceAnnotation:
    class_id: int
    mask: np.ndarray

    @property
    def is_background(self) -> bool:
        return self.class_id == BACKGROUND


@dataclass
class ComponentTrace:
    """What happened to one connected component; kept for inspection and tests."""

    style: ScribbleStyle
    control_points: np.ndarray  # canvas (x, y) points handed to the rasterizer
    path: SkeletonPath | None = None  # skeleton path in canvas coordinates
    fell_back: bool = False  # boundary style requested but erosion left nothing


def style_probability(p: float, gain: float = 3.0, cap: float = 0.9) -> float:
    return min(gain * p, cap)


def decide_style(p: float, rng, gain: float = 3.0, cap: float = 0.9) -> ScribbleStyle:
    if not 0 < p < 1:
        raise ValueError(f"area ratio must lie in (0, 1), got {p}")
    u = rng.uniform()
    return ScribbleStyle.BOUNDARY if u < style_probability(p, gain, cap) else ScribbleStyle.LINE


def random_affine(points, center, k: float, rng) -> np.ndarray:
    """Push every point along its ray from ``center`` by its own delta in [-k, k]."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    cx, cy = center
    out = pts.copy()
    for i, (x, y) in enumerate(pts):
        delta = rng.uniform(-k, k)
        if x == cx and y == cy:
            continue
        theta = math.atan2(y - cy, x - cx)
        out[i, 0] = x + delta * math.cos(theta)
        out[i, 1] = y + delta * math.sin(theta)
    return out


def boundary_arc(points, frac_min: float, frac_max: float, rng):
    """Contiguous run of a closed point loop covering a random share of its vertices.

    Returns ``(points, closed)``. A share of 1 gives back the whole loop with
    ``closed=True``. Otherwise a start vertex is drawn uniformly and
    ``ceil(share * n)`` vertices (at least two) are taken going clockwise.
    Draws the share only when the range is non-degenerate, and the start only
    for partial arcs.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    frac = frac_min if frac_min == frac_max else rng.uniform(frac_min, frac_max)
    if frac >= 1.0 or n < 3:
        return pts, True
    start = min(int(rng.uniform() * n), n - 1)
    count = max(2, math.ceil(frac * n))
    return pts[(start + np.arange(count)) % n], False


def de_casteljau(control, t):
    """Evaluate a Bezier curve at parameter values ``t`` (array)."""
    t = np.asarray(t, dtype=np.float64)[:, None]
    pts = [np.asarray(c, dtype=np.float64) for c in control]
    while len(pts) > 1:
        # (1-t)a + tb rather than a + t(b-a): exact at both ends
        pts = [(1.0 - t) * a + t * b for a, b in zip(pts, pts[1:])]
    return pts[0]


def bezier_smooth(points, samples_per_segment: int = 16) -> np.ndarray:
    """Piecewise cubic Bezier through every third point.

    Windows ``[p0..p3], [p3..p6], ...`` share their end points so the curve is
    C0; a short last window is padded with copies of the final point.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise TooFewPointsError("Bezier smoothing needs at least two points")
    if samples_per_segment < 2:
        raise ValueError("samples_per_segment must be >= 2")
    t = np.linspace(0.0, 1.0, samples_per_segment)
    out = [pts[:1]]
    start = 0
    while start < len(pts) - 1:
        window = list(pts[start:start + 4])
        while len(window) < 4:
            window.append(pts[-1])
        out.append(de_casteljau(window, t)[1:])
        start += 3
    return np.concatenate(out)


def round_half_up(v):
    return np.floor(np.asarray(v, dtype=np.float64) + 0.5).astype(np.int64)


def bresenham(x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """Integer line from (x0, y0) to (x1, y1), endpoints included.

    Steps once per pixel along the major axis; the minor coordinate is the
    exact ratio rounded half up, which is what the error-term formulation
    produces.
    """
    dx, dy = x1 - x0, y1 - y0
    n = max(abs(dx), abs(dy))
    if n == 0:
        return np.array([[x0, y0]], dtype=np.int64)
    i = np.arange(n + 1, dtype=np.int64)
    if abs(dx) >= abs(dy):
        xs = x0 + np.sign(dx) * i
        ys = y0 + np.sign(dy) * ((2 * i * abs(dy) + n) // (2 * n))
    else:
        ys = y0 + np.sign(dy) * i
        xs = x0 + np.sign(dx) * ((2 * i * abs(dx) + n) // (2 * n))
    return np.stack([xs, ys], axis=1)


def disk_offsets(width: int) -> np.ndarray:
    r = width / 2.0
    ext = math.ceil(r)
    return np.array([(dx, dy) for dy in range(-ext, ext + 1) for dx in range(-ext, ext + 1)
                     if dx * dx + dy * dy <= r * r], dtype=np.int64)


def rasterize(polyline, stroke_width: int, clip, width: int | None = None, height: int | None = None) -> np.ndarray:
    """Draw a polyline with a round brush and keep only pixels inside ``clip``."""
    if stroke_width < 1:
        raise ValueError("stroke_width must be >= 1")
    clip = mk.as_mask(clip)
    h, w = clip.shape
    if width is not None and height is not None and (height, width) != (h, w):
        raise DimensionMismatchError(f"clip is {w}x{h}, canvas is {width}x{height}")
    out = np.zeros((h, w), dtype=bool)
    pts = round_half_up(np.asarray(polyline, dtype=np.float64).reshape(-1, 2))
    if len(pts) == 0:
        return out
    if len(pts) == 1:
        line = pts
    else:
        line = np.concatenate([bresenham(*a, *b) for a, b in zip(pts[:-1], pts[1:])])
    brush = (line[:, None, :] + disk_offsets(stroke_width)[None, :, :]).reshape(-1, 2)
    xs, ys = brush[:, 0], brush[:, 1]
    inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    out[ys[inside], xs[inside]] = True
    return out & clip


def _component_scribble(sub, offset, p, class_id, config, rng, trace):
    """Scribble for one component, given in cropped coordinates."""
    background = class_id == BACKGROUND
    style = ScribbleStyle.LINE if background else decide_style(p, rng, config.style_gain, config.style_cap)
    fell_back = False
    if style is ScribbleStyle.BOUNDARY:
        eroded = mk.erode(sub, config.erosion_k)
        if eroded.any():
            pts = mk.extract_boundary(eroded, config.boundary_tolerance)
            arc, closed = boundary_arc(pts, config.boundary_arc_min, config.boundary_arc_max, rng)
            moved = random_affine(arc, mk.centroid(eroded), config.erosion_k, rng)
            if closed:
                moved = np.concatenate([moved, moved[:1]])
            control = bezier_smooth(moved, config.bezier_samples_per_segment)
            path = None
        else:
            fell_back = True
            style = ScribbleStyle.LINE
    if style is ScribbleStyle.LINE:
        path = random_depth_search(sub, rng)
        raw = np.asarray(path.points, dtype=np.float64).reshape(-1, 2)
        if background or len(raw) < 2:
            control = raw
        else:
            control = bezier_smooth(raw, config.bezier_samples_per_segment)
    drawn = rasterize(control, config.stroke_width, sub)
    if trace is not None:
        shift = np.array(offset, dtype=np.float64)
        canvas_path = None
        if path is not None:
            canvas_path = SkeletonPath(tuple((x + offset[0], y + offset[1]) for x, y in path.points), path.length)
        trace.append(ComponentTrace(style, control + shift, canvas_path, fell_back))
    return drawn


def simulate_instance(inst: InstanceAnnotation, config: SimulationConfig, rng, trace: list | None = None) -> np.ndarray:
    """Scribble mask for one instance: one stroke per large-enough component.

    Components smaller than ``config.min_component_area`` are skipped; if all
    are, raises :class:`EmptyMaskError`. Pass a list as ``trace`` to collect a
    :class:`ComponentTrace` per component.
    """
    full = mk.as_mask(inst.mask)
    h, w = full.shape
    if not full.any():
        raise EmptyMaskError("instance mask is empty")
    sub, (x0, y0) = mk.bbox_crop(full, pad=1)
    comps = [c for c in mk.connected_components(sub) if c.sum() >= config.min_component_area]
    if not comps:
        raise EmptyMaskError(f"no component reaches {config.min_component_area} pixels")
    drawn = np.zeros_like(sub)
    for comp in comps:
        p = float(comp.sum()) / (h * w)
        if p >= 1.0:
            p = math.nextafter(1.0, 0.0)
        csub, (cx0, cy0) = mk.bbox_crop(comp, pad=1)
        part = _component_scribble(csub, (x0 + cx0, y0 + cy0), p, inst.class_id, config, rng, trace)
        ys, xs = np.nonzero(part)
        drawn[ys + cy0, xs + cx0] = True
    out = np.zeros((h, w), dtype=bool)
    ys, xs = np.nonzero(drawn)
    out[ys + y0, xs + x0] = True
    return out


def instance_seed(global_seed: int, image_seed: int, index: int) -> int:
    return mix(global_seed, image_seed, index)


def _halves(m: np.ndarray):
    top = np.zeros_like(m)
    bottom = np.zeros_like(m)
    mid = m.shape[0] // 2
    top[:mid] = m[:mid]
    bottom[mid:] = m[mid:]
    return [top, bottom]


@dataclass
class ImageSummary:
    styles: dict = field(default_factory=lambda: {s.value: 0 for s in ScribbleStyle})
    skipped_instances: list = field(default_factory=list)
    fallbacks: int = 0


def simulate_image_with_summary(instances, config: SimulationConfig, image_seed: int, shape=None):
    """Like :func:`simulate_image` but also returns an :class:`ImageSummary`."""
    if shape is None:
        if not instances:
            raise ValueError("shape is required when there are no instances")
        shape = np.asarray(instances[0].mask).shape
    h, w = shape
    for idx, inst in enumerate(instances):
        if np.asarray(inst.mask).shape != (h, w):
            raise DimensionMismatchError(
                f"instance {idx} mask is {np.asarray(inst.mask).shape[::-1]}, image is {(w, h)}")
        if not 0 <= inst.class_id < IGNORE:
            raise ValueError(f"instance {idx} has class id {inst.class_id}, expected 0..254")

    label = np.full((h, w), IGNORE, dtype=np.uint8)
    summary = ImageSummary()
    order = [i for i, a in enumerate(instances) if not a.is_background]
    order += [i for i, a in enumerate(instances) if a.is_background]
    for idx in order:
        inst = instances[idx]
        rng = SplitMix64(instance_seed(config.global_seed, image_seed, idx))
        parts = [inst]
        if inst.is_background and config.background_horizontal_split:
            parts = [InstanceAnnotation(inst.class_id, half) for half in _halves(mk.as_mask(inst.mask))]
        trace = []
        drew = False
        for part in parts:
            try:
                drawn = simulate_instance(part, config, rng, trace)
            except EmptyMaskError:
                continue
            label[drawn] = inst.class_id
            drew = True
        if not drew:
            summary.skipped_instances.append(idx)
        for t in trace:
            summary.styles[t.style.value] += 1
            summary.fallbacks += t.fell_back
    return label, summary


def simulate_image(instances, config: SimulationConfig, image_seed: int, shape=None) -> np.ndarray:
    """Integrate every instance's scribble into one label mask (255 = unlabeled).

    Foreground instances are drawn in list order, background instances last;
    later strokes overwrite earlier ones. ``shape`` is ``(height, width)`` and
    is only needed when ``instances`` is empty.
    """
    return simulate_image_with_summary(instances, config, image_seed, shape)[0]
