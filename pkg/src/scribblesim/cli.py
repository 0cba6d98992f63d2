"""Command-line entry point: ``scribblesim <subcommand> ...``.

Exit codes: 0 on full success, 1 when some images failed, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import distmaps, fileio, losses, pipeline, synthetic
from .errors import ParseError, ScribbleSimError, ValidationError
from .rng import MASK64
from .synth import SimulationConfig

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("scribblesim")


class ConfigError(Exception):
    pass


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v <= MASK64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _jobs(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("--jobs must be >= 1")
    return v


def _bins(text):
    parts = text.split(",")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bins must be N or NX,NY, got {text!r}")
    if len(vals) == 1:
        vals *= 2
    if len(vals) != 2 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"bins must be N or NX,NY, got {text!r}")
    return tuple(vals)


def load_config(path, seed=None) -> SimulationConfig:
    data = {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(ParseError(exc.msg, line=exc.lineno, column=exc.colno)))
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {} if seed is None else {"global_seed": seed}
    try:
        return SimulationConfig.from_dict(data, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}")


def _manifest(path):
    try:
        return pipeline.load_manifest(path)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest: {exc}")
    except (ParseError, ValidationError) as exc:
        raise ConfigError(f"bad manifest {path}: {exc}")


def _default_report(out) -> Path:
    out = Path(out)
    return out.parent / f"{out.name}.report.json"


def cmd_simulate(args):
    manifest = _manifest(args.manifest)
    config = load_config(args.config, args.seed)
    report = pipeline.run_simulate(manifest, config, args.out, jobs=args.jobs)
    report.write(args.report or _default_report(args.out))
    c = report.counts()
    print(f"simulated {c['ok']} ok, {c['skipped']} skipped, {c['error']} failed "
          f"of {len(manifest)} images in {report.runtime_s:.2f}s")
    return EXIT_PARTIAL if report.has_errors else EXIT_OK


def cmd_distmap(args):
    if not Path(args.input).is_dir():
        raise ConfigError(f"input directory {args.input} does not exist")
    report = pipeline.run_distmaps(args.input, args.lam, args.kind, args.out, jobs=args.jobs)
    report.write(args.report or _default_report(args.out))
    c = report.counts()
    print(f"distance maps: {c['ok']} ok, {c['skipped']} skipped, {c['error']} failed")
    return EXIT_PARTIAL if report.has_errors else EXIT_OK


def cmd_stats(args):
    manifest = _manifest(args.manifest)
    nx, ny = args.bins
    hm = pipeline.compute_stats(manifest, args.scribbles, nx, ny, args.x_max, args.y_max)
    csv = hm.to_csv()
    if args.out:
        Path(args.out).write_text(csv)
    else:
        sys.stdout.write(csv)
    for m in hm.missing:
        log.warning("%s: %s", m["image_id"], m["reason"])
    print(f"{hm.total} instances measured, {len(hm.missing)} images missing", file=sys.stderr)
    return EXIT_PARTIAL if hm.missing else EXIT_OK


def cmd_losscheck(args):
    try:
        logits = fileio.read_tensor(args.logits).astype(np.float64)
        labels = fileio.read_png(args.labels) if args.labels else None
        dmap = None
        if args.dmap:
            dmap = distmaps.read_map(args.dmap, Path(args.dmap[:-len(".png")] + ".json")
                                     if args.dmap.endswith(".png") else args.dmap + ".json")
    except (OSError, ScribbleSimError) as exc:
        raise ConfigError(str(exc))
    if logits.ndim != 3:
        raise ConfigError(f"logits must be K x H x W, got shape {logits.shape}")
    inputs = {"logits": logits, "labels": labels, "eps": args.eps, "dmap": dmap, "negate": args.negate}
    wanted = args.loss or [n for n, need in (("partial_ce", labels), ("smoothed_ce", labels), ("dp_loss", dmap))
                           if need is not None]
    if not wanted:
        raise ConfigError("nothing to check: pass --labels and/or --dmap")
    probs = losses.softmax(logits)
    out = {}
    for name in wanted:
        if name != "dp_loss" and labels is None or name == "dp_loss" and dmap is None:
            raise ConfigError(f"{name} needs {'--dmap' if name == 'dp_loss' else '--labels'}")
        try:
            value = losses.LOSSES[name][0](probs, inputs)
            err = losses.grad_check(name, inputs)
        except ScribbleSimError as exc:
            out[name] = {"error": f"{type(exc).__name__}: {exc}"}
            continue
        out[name] = {"value": value, "grad_check_max_rel_error": err}
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_PARTIAL if any("error" in v for v in out.values()) else EXIT_OK


def cmd_convert(args):
    """Paired semantic + instance-id PNGs (same file names) to a manifest."""
    sem_dir, inst_dir, out = Path(args.semantic), Path(args.instances), Path(args.out)
    if not sem_dir.is_dir() or not inst_dir.is_dir():
        raise ConfigError("--semantic and --instances must be directories")
    (out / "masks").mkdir(parents=True, exist_ok=True)
    entries, failed = [], 0
    for sem_path in sorted(sem_dir.glob("*.png")):
        image_id = sem_path.stem
        try:
            sem = fileio.read_png(sem_path)
            ids = fileio.read_png(inst_dir / sem_path.name)
            if sem.shape != ids.shape:
                raise ScribbleSimError("semantic and instance maps differ in size")
        except (OSError, ScribbleSimError) as exc:
            log.warning("%s: %s", image_id, exc)
            failed += 1
            continue
        instances = []
        for iid in np.unique(ids):
            if iid == 0 or iid == 255:
                continue
            m = (ids == iid) & (sem != 0) & (sem != 255)
            if not m.any():
                continue
            cls = int(np.bincount(sem[m]).argmax())  # majority class inside the instance
            rel = f"masks/{image_id}_{int(iid)}.png"
            fileio.write_png(out / rel, m)
            instances.append({"class_id": cls, "mask_path": rel})
        bg = sem == 0
        if bg.any():
            rel = f"masks/{image_id}_bg.png"
            fileio.write_png(out / rel, bg)
            instances.append({"class_id": 0, "mask_path": rel})
        entries.append({"image_id": image_id, "width": int(sem.shape[1]), "height": int(sem.shape[0]),
                        "instances": instances})
    (out / "manifest.json").write_text(json.dumps({"entries": entries}, indent=2) + "\n")
    print(f"wrote {len(entries)} entries to {out / 'manifest.json'}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_make_synthetic(args):
    path = synthetic.make_dataset(args.out, args.n, args.height, args.width, args.seed)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scribblesim", description="Simulate scribble annotations from instance masks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("simulate", help="generate scribble label PNGs for a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="output directory for <image_id>.png")
    s.add_argument("--seed", type=_seed, default=None, help="64-bit global seed (overrides config)")
    s.add_argument("--config", help="JSON file overriding simulation defaults")
    s.add_argument("--jobs", type=_jobs, default=None, help="worker processes (default: CPU count)")
    s.add_argument("--report", help="run report path (default: <out>.report.json)")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("distmap", help="distance maps for a directory of label PNGs")
    d.add_argument("--input", required=True, help="directory of scribble or pseudo-label PNGs")
    d.add_argument("--out", required=True)
    d.add_argument("--lambda", dest="lam", type=float, required=True)
    d.add_argument("--kind", choices=[k.value for k in distmaps.MapKind], default="scribble")
    d.add_argument("--jobs", type=_jobs, default=None)
    d.add_argument("--report")
    d.set_defaults(func=cmd_distmap)

    t = sub.add_parser("stats", help="mask-ratio vs scribble-ratio heatmap as CSV")
    t.add_argument("--manifest", required=True)
    t.add_argument("--scribbles", required=True, help="directory holding <image_id>.png scribbles")
    t.add_argument("--bins", type=_bins, default=(10, 10), help="N or NX,NY (default 10,10)")
    t.add_argument("--x-max", type=float, default=100.0, help="upper mask-ratio edge in percent")
    t.add_argument("--y-max", type=float, default=20.0, help="upper scribble-ratio edge in percent")
    t.add_argument("--out", help="CSV path (default: stdout)")
    t.set_defaults(func=cmd_stats)

    lc = sub.add_parser("losscheck", help="evaluate losses and gradient checks on stored tensors")
    lc.add_argument("--logits", required=True, help="f32 tensor K x H x W (with .json sidecar)")
    lc.add_argument("--labels", help="label PNG (255 = unlabeled)")
    lc.add_argument("--dmap", help="distance-map PNG with sidecar")
    lc.add_argument("--loss", action="append", choices=sorted(losses.LOSSES))
    lc.add_argument("--eps", type=float, default=0.2)
    lc.add_argument("--negate", action="store_true")
    lc.set_defaults(func=cmd_losscheck)

    c = sub.add_parser("convert", help="semantic + instance-id PNG pairs to a manifest")
    c.add_argument("--semantic", required=True)
    c.add_argument("--instances", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_convert)

    m = sub.add_parser("make-synthetic", help="write a small synthetic dataset")
    m.add_argument("--out", required=True)
    m.add_argument("--n", type=int, default=10)
    m.add_argument("--height", type=int, default=96)
    m.add_argument("--width", type=int, default=128)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_make_synthetic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
