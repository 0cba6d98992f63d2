import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from scribblesim import fileio, pipeline
from scribblesim.distmaps import read_map
from scribblesim.errors import MalformedFileError, ParseError, ValidationError
from scribblesim.synth import SimulationConfig

DATA = Path(__file__).parent / "data" / "synth"


def write_manifest(tmp_path, entries):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"entries": entries}, indent=1))
    return p


def make_image(tmp_path, image_id, masks, h=40, w=50):
    insts = []
    for j, (cid, m) in enumerate(masks):
        rel = f"{image_id}_{j}.png"
        fileio.write_png(tmp_path / rel, m)
        insts.append({"class_id": cid, "mask_path": rel})
    return {"image_id": image_id, "width": w, "height": h, "instances": insts}


def square(h, w, y0, y1, x0, x1):
    m = np.zeros((h, w), bool)
    m[y0:y1, x0:x1] = True
    return m


def test_empty_manifest(tmp_path):
    m = pipeline.load_manifest(write_manifest(tmp_path, []))
    assert len(m) == 0
    report = pipeline.run_simulate(m, SimulationConfig(), tmp_path / "out", jobs=1)
    assert report.images == [] and list((tmp_path / "out").iterdir()) == []


def test_two_entries_in_order(tmp_path):
    e = [make_image(tmp_path, "b", [(1, square(40, 50, 5, 30, 5, 30))]),
         make_image(tmp_path, "a", [(2, square(40, 50, 5, 30, 5, 30))])]
    m = pipeline.load_manifest(write_manifest(tmp_path, e))
    assert [x.image_id for x in m.entries] == ["b", "a"]
    assert m.entries[0].instances[0].mask_path == tmp_path / "b_0.png"


def test_parse_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"entries": [\n  {"image_id": "x",}\n]}')
    with pytest.raises(ParseError) as info:
        pipeline.load_manifest(p)
    assert info.value.line == 2
    with pytest.raises(ParseError) as info:
        pipeline.parse_manifest('{"entries": [{"image_id": "x", "width": "9", "height": 2, "instances": []}]}')
    assert info.value.field == "entries[0].width"


def test_validation_lists_every_problem():
    text = json.dumps({"entries": [
        {"image_id": "a", "width": 4, "height": 4, "instances": []},
        {"image_id": "a", "width": 4, "height": 4, "instances": []},
        {"image_id": "../x", "width": 0, "height": 4, "instances": [
            {"class_id": 0, "mask_path": "p"}, {"class_id": 0, "mask_path": "q"},
            {"class_id": 300, "mask_path": "r"}]},
    ]})
    with pytest.raises(ValidationError) as info:
        pipeline.parse_manifest(text)
    v = " | ".join(info.value.violations)
    assert len(info.value.violations) == 5
    for needle in ("duplicate", "plain file stem", "positive", "class 0 appears 2", "300"):
        assert needle in v


def test_missing_mask_is_isolated(tmp_path):
    good = make_image(tmp_path, "good", [(1, square(40, 50, 5, 30, 5, 30))])
    bad = {"image_id": "bad", "width": 50, "height": 40, "instances": [{"class_id": 1, "mask_path": "nope.png"}]}
    wrong = make_image(tmp_path, "wrong", [(1, square(30, 50, 5, 25, 5, 30))], h=40)
    m = pipeline.load_manifest(write_manifest(tmp_path, [bad, good, wrong]))
    report = pipeline.run_simulate(m, SimulationConfig(), tmp_path / "out", jobs=1)
    status = {r["image_id"]: r["status"] for r in report.images}
    assert status == {"bad": "error", "good": "ok", "wrong": "error"}
    assert [r["image_id"] for r in report.images] == ["bad", "good", "wrong"]
    assert "DimensionMismatch" in report.images[2]["reason"]
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["good.png"]


def test_simulate_bundled_dataset(tmp_path):
    m = pipeline.load_manifest(DATA / "manifest.json")
    report = pipeline.run_simulate(m, SimulationConfig(global_seed=3), tmp_path / "o", jobs=1)
    assert report.counts()["ok"] == len(m) == 10
    for e in m.entries:
        lab = fileio.read_png(tmp_path / "o" / f"{e.image_id}.png")
        assert lab.shape == (e.height, e.width)
        union = {}
        for inst in pipeline.load_instances(e):
            union[inst.class_id] = union.get(inst.class_id, False) | inst.mask
        for c in np.unique(lab):
            if c != 255:
                assert not ((lab == c) & ~union[int(c)]).any()
    d = report.to_dict()
    assert d["seed"] == 3 and d["config"]["erosion_k"] == 20 and len(d["images"]) == 10


def test_distmaps_run(tmp_path):
    src = tmp_path / "scr"
    src.mkdir()
    lab = np.full((30, 30), 255, np.uint8)
    lab[10:12, 5:20] = 4
    fileio.write_png(src / "one.png", lab)
    fileio.write_png(src / "empty.png", np.full((30, 30), 255, np.uint8))
    fileio.write_png(src / "broken.png", lab)
    (src / "broken.png").write_bytes(b"garbage")
    out = tmp_path / "d"
    r1 = pipeline.run_distmaps(src, 1.0, "scribble", out, jobs=1)
    status = {r["image_id"]: r["status"] for r in r1.images}
    assert status == {"broken": "error", "empty": "skipped", "one": "ok"}
    m1 = read_map(out / "one.dist.png", out / "one.dist.json")
    assert m1.raw[10, 5] == 0
    meta = json.loads((out / "one.dist.json").read_text())
    assert meta == {"kind": "scribble", "lambda": 1.0, "width": 30, "height": 30}
    r7 = pipeline.run_distmaps(src, 7.0, "scribble", tmp_path / "d7", jobs=1)
    m7 = read_map(tmp_path / "d7" / "one.dist.png", tmp_path / "d7" / "one.dist.json")
    assert (m7.raw == 255).sum() >= (m1.raw == 255).sum()
    assert r7.images[2]["saturated"] == int((m7.raw == 255).sum())


def test_stats_single_instance(tmp_path):
    h, w = 20, 20
    inst = square(h, w, 0, 10, 0, 20)  # 50% of the image, 200 pixels
    e = make_image(tmp_path, "x", [(5, inst)], h=h, w=w)
    m = pipeline.load_manifest(write_manifest(tmp_path, [e]))
    scr = tmp_path / "scr"
    scr.mkdir()
    lab = np.full((h, w), 255, np.uint8)
    lab[0, :4] = 5  # 4 / 200 = 2%
    fileio.write_png(scr / "x.png", lab)
    hm = pipeline.compute_stats(m, scr)
    assert hm.total == 1
    assert hm.counts[1, 5] == 1  # x bin [50, 60), y bin [2, 4)
    csv = hm.to_csv().splitlines()
    assert csv[0].startswith("mask_ratio_edges_pct,0,10,20")
    assert csv[1].startswith("scribble_ratio_edges_pct,0,2,4")
    assert len(csv) == 12


def test_stats_zero_instances_and_missing(tmp_path):
    e = make_image(tmp_path, "x", [(0, square(10, 10, 0, 10, 0, 10))], h=10, w=10)
    m = pipeline.load_manifest(write_manifest(tmp_path, [e]))
    (tmp_path / "scr").mkdir()
    hm = pipeline.compute_stats(m, tmp_path / "scr")
    assert hm.total == 0 and not hm.counts.any()
    assert len(hm.missing) == 1 and "MissingScribble" in hm.missing[0]["reason"]


def test_bins_are_exact_and_overflow_clamps():
    edges = pipeline.bin_edges(10, 20)
    assert pipeline._bin(Fraction(2), edges) == 1
    assert pipeline._bin(Fraction(199, 100), edges) == 0
    assert pipeline._bin(Fraction(20), edges) == 9
    assert pipeline._bin(Fraction(55), edges) == 9
    # 0.3 as a float is just below 3/10, the exact fraction is not
    assert pipeline._bin(Fraction(3, 10), pipeline.bin_edges(10, 1)) == 3


def test_tensor_round_trip(tmp_path):
    a = np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 7
    fileio.write_tensor(tmp_path / "t.f32", a)
    assert json.loads((tmp_path / "t.f32.json").read_text()) == {"shape": [2, 3, 4], "dtype": "f32"}
    assert np.array_equal(fileio.read_tensor(tmp_path / "t.f32"), a)
    (tmp_path / "t.f32").write_bytes(b"\0" * 8)
    with pytest.raises(MalformedFileError):
        fileio.read_tensor(tmp_path / "t.f32")
