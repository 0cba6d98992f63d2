"""File formats: 8-bit label PNGs, binary mask PNGs and raw f32 tensors."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MalformedFileError


def read_png(path) -> np.ndarray:
    """Read a single-channel PNG as a 2-D uint8 array."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode == "P":
                arr = np.array(img)  # palette index is the label
            elif img.mode in ("L", "1"):
                arr = np.array(img.convert("L"))
            elif img.mode in ("I", "I;16"):
                arr = np.array(img)
                if arr.max(initial=0) > 255:
                    raise MalformedFileError(f"{path}: values exceed 8 bits")
            else:
                raise MalformedFileError(f"{path}: expected a single-channel image, got mode {img.mode}")
    except FileNotFoundError:
        raise
    except MalformedFileError:
        raise
    except Exception as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc
    return arr.astype(np.uint8, copy=False)


def read_mask(path) -> np.ndarray:
    return read_png(path) != 0


def write_png(path, arr) -> None:
    """Write a 2-D uint8 (or bool) array as an 8-bit grayscale PNG."""
    a = np.asarray(arr)
    if a.dtype == bool:
        a = a.astype(np.uint8) * 255
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {a.shape}")
    tmp = Path(str(path) + ".tmp")
    Image.fromarray(np.ascontiguousarray(a, dtype=np.uint8), mode="L").save(tmp, format="PNG")
    os.replace(tmp, path)


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def write_tensor(path, arr) -> None:
    """Little-endian f32 payload at ``path`` plus ``path.json`` with the shape."""
    a = np.asarray(arr, dtype="<f4")
    Path(path).write_bytes(a.tobytes(order="C"))
    with open(_sidecar(path), "w") as fh:
        json.dump({"shape": list(a.shape), "dtype": "f32"}, fh)
        fh.write("\n")


def read_tensor(path) -> np.ndarray:
    meta_path = _sidecar(path)
    try:
        meta = json.loads(meta_path.read_text())
        shape = tuple(int(s) for s in meta["shape"])
        dtype = meta["dtype"]
    except FileNotFoundError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedFileError(f"{meta_path}: {exc}") from exc
    if dtype != "f32":
        raise MalformedFileError(f"{meta_path}: unsupported dtype {dtype!r}")
    data = Path(path).read_bytes()
    n = int(np.prod(shape, dtype=np.int64))
    if len(data) != 4 * n:
        raise MalformedFileError(f"{path}: {len(data)} bytes for shape {shape}")
    arr = np.frombuffer(data, dtype="<f4").reshape(shape)
    if not np.isfinite(arr).all():
        raise MalformedFileError(f"{path}: non-finite values")
    return arr
