"""Synthetic shapes and datasets for tests, demos and population statistics."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import fileio


def random_polyomino(rng: np.random.Generator, cells: int, cell_size: int = 1, pad: int = 0) -> np.ndarray:
    """Grow a random 4-connected polyomino of ``cells`` cells.

    Each cell becomes a ``cell_size`` square; ``pad`` blank pixels surround it.
    """
    occupied = {(0, 0)}
    frontier = [(0, 1), (1, 0), (0, -1), (-1, 0)]
    while len(occupied) < cells:
        x, y = frontier.pop(int(rng.integers(len(frontier))))
        if (x, y) in occupied:
            continue
        occupied.add((x, y))
        for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            if (x + dx, y + dy) not in occupied:
                frontier.append((x + dx, y + dy))
    xs = [c[0] for c in occupied]
    ys = [c[1] for c in occupied]
    x0, y0 = min(xs), min(ys)
    w, h = max(xs) - x0 + 1, max(ys) - y0 + 1
    grid = np.zeros((h, w), dtype=bool)
    for x, y in occupied:
        grid[y - y0, x - x0] = True
    if cell_size > 1:
        grid = np.kron(grid, np.ones((cell_size, cell_size), dtype=bool))
    return np.pad(grid, pad)


def ellipse_mask(height: int, width: int, cx: float, cy: float, a: float, b: float, theta: float) -> np.ndarray:
    yy, xx = np.mgrid[:height, :width]
    c, s = math.cos(theta), math.sin(theta)
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1


def random_ellipse(rng: np.random.Generator, height: int, width: int,
                   min_area: int = 150, max_ratio: float = 0.5) -> np.ndarray:
    """Ellipse whose image-area ratio is log-uniform in ``[min_area/(h*w), max_ratio]``."""
    lo, hi = math.log(min_area / (height * width)), math.log(max_ratio)
    while True:
        ratio = math.exp(rng.uniform(lo, hi))
        ecc = rng.uniform(0.35, 1.0)
        area = ratio * height * width
        b = math.sqrt(area / (math.pi * ecc)) * ecc
        a = b / ecc
        if 2 * a > 0.98 * width or 2 * b > 0.98 * height:
            continue
        ext = max(a, b)
        cx = rng.uniform(min(ext, width / 2), max(width - ext, width / 2))
        cy = rng.uniform(min(ext, height / 2), max(height - ext, height / 2))
        m = ellipse_mask(height, width, cx, cy, a, b, rng.uniform(0, math.pi))
        if m.sum() >= 100:
            return m


def _blob(rng, height, width):
    kind = rng.integers(3)
    if kind == 0:
        a = rng.uniform(6, width / 4)
        b = rng.uniform(6, height / 4)
        return ellipse_mask(height, width, rng.uniform(a, width - a), rng.uniform(b, height - b),
                            a, b, rng.uniform(0, math.pi))
    if kind == 1:
        w, h = int(rng.integers(10, width // 2)), int(rng.integers(10, height // 2))
        x, y = int(rng.integers(0, width - w)), int(rng.integers(0, height - h))
        m = np.zeros((height, width), dtype=bool)
        m[y:y + h, x:x + w] = True
        return m
    poly = random_polyomino(rng, int(rng.integers(4, 12)), cell_size=int(rng.integers(5, 9)))
    poly = poly[:height, :width]
    m = np.zeros((height, width), dtype=bool)
    y, x = int(rng.integers(0, height - poly.shape[0] + 1)), int(rng.integers(0, width - poly.shape[1] + 1))
    m[y:y + poly.shape[0], x:x + poly.shape[1]] = poly
    return m


def make_dataset(out_dir, n_images: int = 10, height: int = 96, width: int = 128, seed: int = 0,
                 num_classes: int = 20) -> Path:
    """Write ``n_images`` synthetic images (masks + ``manifest.json``) and return the manifest path.

    Each image gets 1-4 foreground objects (later ones occlude earlier ones)
    and one background instance covering the rest of the canvas.
    """
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_images):
        image_id = f"img_{i:03d}"
        taken = np.zeros((height, width), dtype=bool)
        objs = []
        for _ in range(int(rng.integers(1, 5))):
            m = _blob(rng, height, width) & ~taken
            if m.sum() < 40:
                continue
            taken |= m
            objs.append((int(rng.integers(1, num_classes + 1)), m))
        instances = []
        for j, (cid, m) in enumerate(objs):
            rel = f"masks/{image_id}_{j}.png"
            fileio.write_png(out / rel, m)
            instances.append({"class_id": cid, "mask_path": rel})
        rel = f"masks/{image_id}_bg.png"
        fileio.write_png(out / rel, ~taken)
        instances.append({"class_id": 0, "mask_path": rel})
        entries.append({"image_id": image_id, "width": width, "height": height, "instances": instances})
    path = out / "manifest.json"
    path.write_text(json.dumps({"entries": entries}, indent=2) + "\n")
    return path
