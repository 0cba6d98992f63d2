"""Dataset-scale orchestration: manifests, batch simulation, distance maps, stats."""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import distmaps, fileio
from .errors import (DimensionMismatchError, MissingScribbleError, NoForegroundError, ParseError,
                     ScribbleSimError, ValidationError)
from .rng import image_seed
from .synth import BACKGROUND, IGNORE, InstanceAnnotation, SimulationConfig, simulate_image_with_summary

log = logging.getLogger(__name__)

_SAFE_ID = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.\-]*$")


@dataclass(frozen=True)
class InstanceRef:
    class_id: int
    mask_path: Path


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    width: int
    height: int
    instances: tuple = ()


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple = ()
    root: Path = Path(".")

    def __len__(self):
        return len(self.entries)


def _require(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError("missing required key", field=f"{where}.{key}" if where else key)
    val = obj[key]
    ok = isinstance(val, kind) and not (kind is int and isinstance(val, bool))
    if not ok:
        raise ParseError(f"expected {kind.__name__}, got {type(val).__name__}",
                         field=f"{where}.{key}" if where else key)
    return val


def parse_manifest(text: str, root=".") -> DatasetManifest:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict):
        raise ParseError("manifest must be a JSON object", line=1, column=1)
    root = Path(root)
    entries = []
    for i, raw in enumerate(_require(data, "entries", list, "")):
        where = f"entries[{i}]"
        if not isinstance(raw, dict):
            raise ParseError("entry must be an object", field=where)
        insts = []
        for j, inst in enumerate(_require(raw, "instances", list, where)):
            iw = f"{where}.instances[{j}]"
            cid = _require(inst, "class_id", int, iw)
            path = Path(_require(inst, "mask_path", str, iw))
            insts.append(InstanceRef(cid, path if path.is_absolute() else root / path))
        entries.append(ManifestEntry(
            image_id=_require(raw, "image_id", str, where),
            width=_require(raw, "width", int, where),
            height=_require(raw, "height", int, where),
            instances=tuple(insts),
        ))
    manifest = DatasetManifest(tuple(entries), root)
    validate_manifest(manifest)
    return manifest


def validate_manifest(manifest: DatasetManifest) -> None:
    problems = []
    seen = set()
    for i, e in enumerate(manifest.entries):
        tag = f"entries[{i}] ({e.image_id!r})"
        if e.image_id in seen:
            problems.append(f"{tag}: duplicate image_id")
        seen.add(e.image_id)
        if not _SAFE_ID.match(e.image_id):
            problems.append(f"{tag}: image_id must be a plain file stem")
        if e.width < 1 or e.height < 1:
            problems.append(f"{tag}: width and height must be positive")
        n_bg = sum(inst.class_id == BACKGROUND for inst in e.instances)
        if n_bg > 1:
            problems.append(f"{tag}: class 0 appears {n_bg} times")
        for j, inst in enumerate(e.instances):
            if not 0 <= inst.class_id < IGNORE:
                problems.append(f"{tag}.instances[{j}]: class_id {inst.class_id} outside 0..{IGNORE - 1}")
    if problems:
        raise ValidationError(problems)


def load_manifest(path) -> DatasetManifest:
    """Read a JSON manifest; relative mask paths resolve against its directory."""
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), root=path.parent)


def manifest_to_dict(manifest: DatasetManifest, relative_to=None) -> dict:
    base = Path(relative_to) if relative_to is not None else None

    def rel(p):
        if base is None:
            return str(p)
        return os.path.relpath(p, base)

    return {"entries": [
        {"image_id": e.image_id, "width": e.width, "height": e.height,
         "instances": [{"class_id": i.class_id, "mask_path": rel(i.mask_path)} for i in e.instances]}
        for e in manifest.entries
    ]}


def load_instances(entry: ManifestEntry) -> list[InstanceAnnotation]:
    out = []
    for j, ref in enumerate(entry.instances):
        m = fileio.read_mask(ref.mask_path)
        if m.shape != (entry.height, entry.width):
            raise DimensionMismatchError(
                f"instance {j} mask {ref.mask_path.name} is {m.shape[1]}x{m.shape[0]}, "
                f"declared {entry.width}x{entry.height}")
        out.append(InstanceAnnotation(ref.class_id, m))
    return out


# -- simulate ---------------------------------------------------------------

def _simulate_one(args):
    entry, config, out_dir = args
    rec = {"image_id": entry.image_id}
    try:
        instances = load_instances(entry)
        label, summary = simulate_image_with_summary(
            instances, config, image_seed(config.global_seed, entry.image_id),
            shape=(entry.height, entry.width))
    except (ScribbleSimError, FileNotFoundError) as exc:
        rec.update(status="error", reason=f"{type(exc).__name__}: {exc}")
        return rec
    # write failures propagate and abort the batch
    fileio.write_png(Path(out_dir) / f"{entry.image_id}.png", label)
    drew = bool((label != IGNORE).any())
    rec.update(
        status="ok" if drew or not instances else "skipped",
        styles=summary.styles,
        skipped_instances=summary.skipped_instances,
        fallbacks=summary.fallbacks,
    )
    if rec["status"] == "skipped":
        rec["reason"] = "no instance produced a scribble"
    return rec


def _run(fn, tasks, jobs):
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class RunReport:
    images: list
    seed: int | None = None
    config: dict | None = None
    runtime_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def counts(self) -> dict:
        out = {"ok": 0, "skipped": 0, "error": 0}
        for rec in self.images:
            out[rec["status"]] += 1
        return out

    def style_totals(self) -> dict:
        tot = {}
        for rec in self.images:
            for k, v in rec.get("styles", {}).items():
                tot[k] = tot.get(k, 0) + v
        return tot

    @property
    def has_errors(self) -> bool:
        return any(rec["status"] == "error" for rec in self.images)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "config": self.config, "runtime_s": round(self.runtime_s, 3),
                "counts": self.counts(), "styles": self.style_totals(), **self.extra,
                "images": self.images}

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_simulate(manifest: DatasetManifest, config: SimulationConfig, output_dir, jobs=None) -> RunReport:
    """Simulate scribbles for every manifest entry into ``output_dir/<image_id>.png``.

    Per-image failures are recorded in the report; output bytes depend only on
    the manifest and config, never on ``jobs``.
    """
    t0 = time.perf_counter()
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    recs = _run(_simulate_one, [(e, config, out) for e in manifest.entries], jobs)
    for rec in recs:
        if rec["status"] != "ok":
            log.warning("%s: %s (%s)", rec["image_id"], rec["status"], rec.get("reason", ""))
    recs.sort(key=lambda r: r["image_id"])
    return RunReport(recs, seed=config.global_seed, config=config.to_dict(),
                     runtime_s=time.perf_counter() - t0)


# -- distance maps -------------------------------------------------------------

def _distmap_one(args):
    src, lam, kind, out_dir = args
    image_id = src.name[:-len(".png")]
    rec = {"image_id": image_id}
    try:
        label = fileio.read_png(src)
        if kind == distmaps.MapKind.SCRIBBLE:
            dmap = distmaps.scribble_distance_map(label, lam)
        else:
            dmap = distmaps.pseudo_boundary_distance_map(label, lam)
    except NoForegroundError as exc:
        rec.update(status="skipped", reason=str(exc))
        return rec
    except (ScribbleSimError, FileNotFoundError) as exc:
        rec.update(status="error", reason=f"{type(exc).__name__}: {exc}")
        return rec
    out = Path(out_dir)
    distmaps.write_map(dmap, out / f"{image_id}.dist.png", out / f"{image_id}.dist.json")
    rec.update(status="ok", saturated=int((dmap.raw == distmaps.SATURATION).sum()))
    return rec


def label_images(input_dir) -> list[Path]:
    return sorted(p for p in Path(input_dir).glob("*.png") if not p.name.endswith(".dist.png"))


def run_distmaps(input_dir, lam: float, kind, output_dir, jobs=None) -> RunReport:
    """One ``<image_id>.dist.png`` plus JSON sidecar per label PNG in ``input_dir``."""
    t0 = time.perf_counter()
    kind = distmaps.MapKind(kind)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    recs = _run(_distmap_one, [(p, float(lam), kind, out) for p in label_images(input_dir)], jobs)
    recs.sort(key=lambda r: r["image_id"])
    return RunReport(recs, runtime_s=time.perf_counter() - t0,
                     extra={"lambda": float(lam), "kind": kind.value})


# -- statistics ----------------------------------------------------------------

@dataclass
class StatsHeatmap:
    """Mask ratio (% of image, columns) against scribble ratio (% of mask, rows)."""

    x_edges: list
    y_edges: list
    counts: np.ndarray  # (len(y_edges) - 1, len(x_edges) - 1)
    samples: list = field(default_factory=list)  # (image_id, instance, x%, y%, x bin)
    missing: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def column_means(self) -> list:
        """Mean scribble ratio per mask-ratio bin (None where a bin is empty)."""
        sums = [0.0] * (len(self.x_edges) - 1)
        ns = [0] * len(sums)
        for *_, y, b in self.samples:
            sums[b] += y
            ns[b] += 1
        return [s / n if n else None for s, n in zip(sums, ns)]

    def to_csv(self) -> str:
        fmt = lambda v: f"{float(v):g}"
        lines = [
            "mask_ratio_edges_pct," + ",".join(fmt(e) for e in self.x_edges),
            "scribble_ratio_edges_pct," + ",".join(fmt(e) for e in self.y_edges),
        ]
        for i, row in enumerate(self.counts):
            lines.append(f"{fmt(self.y_edges[i])}-{fmt(self.y_edges[i + 1])}," + ",".join(str(int(c)) for c in row))
        return "\n".join(lines) + "\n"


def bin_edges(n: int, upper) -> list:
    upper = Fraction(upper)
    return [upper * i / n for i in range(n + 1)]


def _bin(v: Fraction, edges) -> int:
    """Index of the half-open bin holding ``v``; overflow goes to the last bin."""
    n = len(edges) - 1
    span = edges[-1] - edges[0]
    idx = int((v - edges[0]) * n // span)
    return min(max(idx, 0), n - 1)


def instance_ratios(label, instances):
    """Yield ``(index, mask_ratio, scribble_ratio)`` as exact fractions for foreground instances."""
    lab = np.asarray(label)
    total = lab.size
    for j, inst in enumerate(instances):
        if inst.is_background:
            continue
        m = np.asarray(inst.mask, dtype=bool)
        area = int(m.sum())
        if area == 0:
            continue
        hit = int(((lab == inst.class_id) & m).sum())
        yield j, Fraction(area, total), Fraction(hit, area)


def compute_stats(manifest: DatasetManifest, scribble_dir, x_bins=10, y_bins=10,
                  x_max=100, y_max=20) -> StatsHeatmap:
    xe, ye = bin_edges(x_bins, x_max), bin_edges(y_bins, y_max)
    counts = np.zeros((y_bins, x_bins), dtype=np.int64)
    hm = StatsHeatmap(xe, ye, counts)
    for entry in manifest.entries:
        path = Path(scribble_dir) / f"{entry.image_id}.png"
        try:
            if not path.exists():
                raise MissingScribbleError(f"no scribble file {path.name}")
            label = fileio.read_png(path)
            if label.shape != (entry.height, entry.width):
                raise DimensionMismatchError(f"{path.name} does not match declared dimensions")
            instances = load_instances(entry)
        except (ScribbleSimError, FileNotFoundError) as exc:
            hm.missing.append({"image_id": entry.image_id, "reason": f"{type(exc).__name__}: {exc}"})
            continue
        for j, mr, sr in instance_ratios(label, instances):
            x, y = 100 * mr, 100 * sr
            bx = _bin(x, xe)
            counts[_bin(y, ye), bx] += 1
            hm.samples.append((entry.image_id, j, float(x), float(y), bx))
    return hm
