"""Binary mask primitives used by the simulation pipeline.

Masks are 2-D boolean numpy arrays indexed ``mask[y, x]``. Points are carried
as ``(x, y)`` pairs, and point sequences as float arrays of shape ``(N, 2)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .errors import DegenerateRatioError, EmptyMaskError

# Clockwise ring (image coordinates, y grows downward) starting from west.
RING = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))
_RING_INDEX = {d: i for i, d in enumerate(RING)}

_EIGHT = np.ones((3, 3), dtype=bool)


def as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"mask must be a non-degenerate 2-D array, got shape {m.shape}")
    return m.astype(bool, copy=False)


def erode(mask, k: int) -> np.ndarray:
    """Erode with a square element of side ``2*ceil(k/2) + 1``.

    Pixels outside the canvas count as background, so objects touching the
    border shrink away from it as well.
    """
    m = as_mask(mask)
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return m.copy()
    side = 2 * math.ceil(k / 2) + 1
    out = ndimage.minimum_filter(m.astype(np.uint8), size=side, mode="constant", cval=0)
    return out.astype(bool)


def connected_components(mask) -> list[np.ndarray]:
    """8-connected components as full-canvas masks.

    Ordered by descending area, ties by the raster position of each
    component's first pixel.
    """
    m = as_mask(mask)
    labels, n = ndimage.label(m, structure=_EIGHT)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    # ndimage numbers labels in raster order of first pixel, so a stable sort
    # on area alone gives the required tie-break.
    order = sorted(range(n), key=lambda i: -areas[i])
    return [labels == (i + 1) for i in order]


def centroid(mask) -> tuple[float, float]:
    m = as_mask(mask)
    ys, xs = np.nonzero(m)
    if xs.size == 0:
        raise EmptyMaskError("centroid of an empty mask")
    return float(xs.mean()), float(ys.mean())


def area_ratio(mask) -> float:
    m = as_mask(mask)
    n = int(m.sum())
    if n == 0 or n == m.size:
        raise DegenerateRatioError(f"area ratio must lie strictly in (0, 1); mask has {n} of {m.size} pixels set")
    return n / m.size


def trace_contour(mask) -> list[tuple[int, int]]:
    """Moore-neighbour trace of the outer contour, clockwise.

    Traces the component containing the first set pixel in raster order and
    starts there. Returns the closed pixel loop without repeating the start.
    """
    m = as_mask(mask)
    ys, xs = np.nonzero(m)
    if xs.size == 0:
        raise EmptyMaskError("cannot trace an empty mask")
    h, w = m.shape
    start = (int(xs[0]), int(ys[0]))

    def is_set(x, y):
        return 0 <= x < w and 0 <= y < h and m[y, x]

    contour = [start]
    p = start
    back = 0  # raster-first pixel always has background to its west
    second = None
    while True:
        for i in range(1, 9):
            d = (back + i) % 8
            q = (p[0] + RING[d][0], p[1] + RING[d][1])
            if is_set(*q):
                break
        else:
            return contour  # isolated pixel

        if p == start and second is not None:
            if q == second:
                return contour
            contour.append(start)  # start is a cut vertex, visited twice
        if second is None:
            second = q
        # new backtrack: the ring cell examined just before q, seen from q
        prev = RING[(d - 1) % 8]
        cand = (p[0] + prev[0] - q[0], p[1] + prev[1] - q[1])
        back = _RING_INDEX[cand]
        p = q
        if p != start:
            contour.append(p)


def inflection_points(contour: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Keep only the contour pixels where the chain-code direction changes."""
    n = len(contour)
    if n <= 2:
        return list(contour)
    kept = []
    for i in range(n):
        a, b, c = contour[i - 1], contour[i], contour[(i + 1) % n]
        if (b[0] - a[0], b[1] - a[1]) != (c[0] - b[0], c[1] - b[1]):
            kept.append(b)
    return kept


def _dp_keep(pts: np.ndarray, tol: float) -> list[int]:
    """Douglas-Peucker over an open run; returns kept indices including both ends."""
    keep = [0, len(pts) - 1]
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        a, b = pts[i], pts[j]
        seg = b - a
        rel = pts[i + 1:j] - a
        norm = math.hypot(seg[0], seg[1])
        if norm == 0.0:
            d = np.hypot(rel[:, 0], rel[:, 1])
        else:
            d = np.abs(seg[0] * rel[:, 1] - seg[1] * rel[:, 0]) / norm
        k = int(np.argmax(d))
        if d[k] > tol:
            m = i + 1 + k
            keep.append(m)
            stack.append((i, m))
            stack.append((m, j))
    return sorted(set(keep))


def simplify_closed(points, tolerance: float) -> np.ndarray:
    """Douglas-Peucker on a closed polygon, keeping ``points[0]`` first.

    The loop is split at the vertex farthest from the first one and each half
    simplified separately. ``tolerance <= 0`` returns the input unchanged.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if tolerance <= 0 or len(pts) <= 3:
        return pts
    far = int(np.argmax(np.hypot(*(pts - pts[0]).T)))
    loop = np.concatenate([pts, pts[:1]])
    first = _dp_keep(loop[:far + 1], tolerance)
    second = [far + j for j in _dp_keep(loop[far:], tolerance)]
    idx = sorted(set(first + second))
    return loop[idx[:-1]]


def extract_boundary(mask, tolerance: float = 0.0) -> np.ndarray:
    """Inflection points of the largest component's outer contour.

    The first point is the component's topmost-then-leftmost pixel; the rest
    follow in clockwise order. With ``tolerance > 0`` the inflection points are
    further thinned by Douglas-Peucker so that only dominant corners remain.
    Returns a float ``(N, 2)`` array of ``(x, y)``.
    """
    comps = connected_components(mask)
    if not comps:
        raise EmptyMaskError("cannot extract the boundary of an empty mask")
    pts = np.asarray(inflection_points(trace_contour(comps[0])), dtype=np.float64).reshape(-1, 2)
    return simplify_closed(pts, tolerance)


def bbox_crop(mask, pad: int = 1):
    """Crop to the bounding box plus ``pad`` pixels of zero padding.

    Returns ``(sub, (x0, y0))`` where ``(x0, y0)`` is the canvas coordinate of
    ``sub[0, 0]``; it may be negative when the mask touches the canvas edge.
    """
    m = as_mask(mask)
    ys, xs = np.nonzero(m)
    if xs.size == 0:
        raise EmptyMaskError("cannot crop an empty mask")
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    sub = np.pad(m[y0:y1, x0:x1], pad)
    return sub, (x0 - pad, y0 - pad)
