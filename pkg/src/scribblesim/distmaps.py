"""Distance-perception maps.

Raw storage is the saturated integer ``t = min(floor(sqrt(e**lam * d**2)), 255)``
where ``d`` is the Euclidean distance to the nearest source pixel. Scribble
maps decode to ``1 - t/255`` (confidence near the scribble), pseudo-label
boundary maps to ``t/255`` (confidence away from the boundary).
"""

from __future__ import annotations

import enum
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import MalformedFileError, NoForegroundError, NoForegroundScribbleError, NoSourcesError

IGNORE = 255
SATURATION = 255


class MapKind(str, enum.Enum):
    SCRIBBLE = "scribble"
    PSEUDO = "pseudo"


@dataclass(frozen=True)
class DistanceMap:
    raw: np.ndarray  # uint8, (H, W)
    kind: MapKind
    lam: float

    @property
    def width(self) -> int:
        return self.raw.shape[1]

    @property
    def height(self) -> int:
        return self.raw.shape[0]

    def decode(self) -> np.ndarray:
        t = self.raw.astype(np.float64) / SATURATION
        return 1.0 - t if self.kind is MapKind.SCRIBBLE else t

    def sidecar(self) -> dict:
        return {"kind": self.kind.value, "lambda": self.lam, "width": self.width, "height": self.height}

    def __eq__(self, other):
        if not isinstance(other, DistanceMap):
            return NotImplemented
        return self.kind is other.kind and self.lam == other.lam and np.array_equal(self.raw, other.raw)


def _column_pass(sources: np.ndarray) -> np.ndarray:
    """Squared distance to the nearest source in the same column (inf if none)."""
    h, w = sources.shape
    down = np.full((h, w), np.inf)
    last = np.full(w, -np.inf)
    for y in range(h):
        last = np.where(sources[y], y, last)
        down[y] = y - last
    up = np.full((h, w), np.inf)
    nxt = np.full(w, np.inf)
    for y in range(h - 1, -1, -1):
        nxt = np.where(sources[y], y, nxt)
        up[y] = nxt - y
    d = np.minimum(down, up)
    return d * d


def _row_envelope(f: np.ndarray) -> np.ndarray:
    """Exact 1-D squared-distance transform of every row of ``f`` at once.

    Lower envelope of parabolas (Felzenszwalb & Huttenlocher), advanced in
    lockstep over all rows. Columns where ``f`` is infinite in every row are
    left out of the envelope.
    """
    h, w = f.shape
    cols = [q for q in range(w) if np.isfinite(f[0, q])]
    rows = np.arange(h)
    if not cols:
        return np.full((h, w), np.inf)
    v = np.zeros((h, len(cols) + 1), dtype=np.int64)
    z = np.full((h, len(cols) + 2), np.inf)
    k = np.zeros(h, dtype=np.int64)
    v[:, 0] = cols[0]
    z[:, 0] = -np.inf
    fq_cache = f.astype(np.float64)

    def intersect(q, sel):
        vk = v[sel, k[sel]]
        return ((fq_cache[sel, q] + q * q) - (fq_cache[sel, vk] + vk * vk)) / (2.0 * (q - vk))

    for q in cols[1:]:
        s = intersect(q, rows)
        pop = s <= z[rows, k]
        while pop.any():
            k[pop] -= 1
            idx = np.flatnonzero(pop)
            s[idx] = intersect(q, idx)
            pop[idx] = s[idx] <= z[idx, k[idx]]
        k += 1
        v[rows, k] = q
        z[rows, k] = s
        z[rows, k + 1] = np.inf

    out = np.empty((h, w))
    k[:] = 0
    for q in range(w):
        adv = z[rows, k + 1] < q
        while adv.any():
            k[adv] += 1
            adv = z[rows, k + 1] < q
        vk = v[rows, k]
        out[:, q] = (q - vk) ** 2 + fq_cache[rows, vk]
    return out


def squared_distance_field(sources) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest ``True`` pixel."""
    src = np.asarray(sources, dtype=bool)
    if not src.any():
        raise NoSourcesError("distance field needs at least one source pixel")
    d2 = _row_envelope(_column_pass(src))
    return np.rint(d2)  # integer-valued by construction; strip float dust


def euclidean_distance_field(sources, width: int | None = None, height: int | None = None) -> np.ndarray:
    """Exact Euclidean distance transform.

    ``sources`` is either a boolean ``(H, W)`` mask or an iterable of
    ``(x, y)`` pixel coordinates together with ``width`` and ``height``.
    """
    if width is not None or height is not None:
        grid = np.zeros((height, width), dtype=bool)
        for x, y in sources:
            grid[y, x] = True
        sources = grid
    return np.sqrt(squared_distance_field(sources))


def saturated_raw(d2: np.ndarray, lam: float) -> np.ndarray:
    """``min(floor(sqrt(e**lam * d2)), 255)`` as uint8."""
    scaled = np.floor(np.sqrt(math.exp(lam) * d2))
    return np.minimum(scaled, SATURATION).astype(np.uint8)


def foreground(label) -> np.ndarray:
    lab = np.asarray(label)
    return (lab != 0) & (lab != IGNORE)


def boundary_pixels(fg: np.ndarray) -> np.ndarray:
    """Foreground pixels with at least one in-canvas non-foreground 4-neighbour."""
    pad = np.pad(fg, 1, mode="edge")
    nb_bg = ~pad[:-2, 1:-1] | ~pad[2:, 1:-1] | ~pad[1:-1, :-2] | ~pad[1:-1, 2:]
    return fg & nb_bg


def pseudo_boundary_distance_map(pseudo, lam: float, per_class: bool = False):
    """Distance map from the foreground boundary of a pseudo-label.

    With ``per_class=True`` returns ``{class_id: DistanceMap}``, each built
    from the boundary of that class's own region.
    """
    lab = np.asarray(pseudo)
    if per_class:
        out = {}
        for c in sorted(int(c) for c in np.unique(lab) if c not in (0, IGNORE)):
            out[c] = _pseudo_map(lab == c, lam)
        if not out:
            raise NoForegroundError("pseudo-label has no foreground class")
        return out
    return _pseudo_map(foreground(lab), lam)


def _pseudo_map(fg, lam):
    edge = boundary_pixels(fg)
    if not edge.any():
        raise NoForegroundError("pseudo-label has no foreground boundary")
    return DistanceMap(saturated_raw(squared_distance_field(edge), lam), MapKind.PSEUDO, float(lam))


def scribble_distance_map(scribble, lam: float) -> DistanceMap:
    fg = foreground(scribble)
    if not fg.any():
        raise NoForegroundScribbleError("scribble has no foreground pixel")
    return DistanceMap(saturated_raw(squared_distance_field(fg), lam), MapKind.SCRIBBLE, float(lam))


def encode_png(dmap: DistanceMap) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(dmap.raw, dtype=np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes, kind: MapKind | str, lam: float = float("nan")) -> DistanceMap:
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            if img.mode != "L":
                raise MalformedFileError(f"expected 8-bit single-channel PNG, got mode {img.mode}")
            raw = np.array(img, dtype=np.uint8)
    except MalformedFileError:
        raise
    except Exception as exc:
        raise MalformedFileError(f"cannot decode distance map: {exc}") from exc
    return DistanceMap(raw, MapKind(kind), lam)


def write_map(dmap: DistanceMap, png_path, json_path) -> None:
    with open(png_path, "wb") as fh:
        fh.write(encode_png(dmap))
    with open(json_path, "w") as fh:
        json.dump(dmap.sidecar(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_map(png_path, json_path) -> DistanceMap:
    try:
        with open(json_path) as fh:
            meta = json.load(fh)
        kind, lam = meta["kind"], float(meta["lambda"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise MalformedFileError(f"bad sidecar {json_path}: {exc}") from exc
    with open(png_path, "rb") as fh:
        dmap = decode_png(fh.read(), kind, lam)
    if (dmap.width, dmap.height) != (meta.get("width"), meta.get("height")):
        raise MalformedFileError(f"{png_path} does not match its sidecar dimensions")
    return dmap
