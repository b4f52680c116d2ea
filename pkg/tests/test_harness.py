"""Physical metrics, SVG rendering, the benchmark loop, and the CLI."""

import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from layoutopt.cli import main
from layoutopt.fixtures import fixture_text, load_fixture
from layoutopt.geometry import FootprintBox, Pose2D, corners
from layoutopt.harness import (
    asset_polygon,
    benchmark_curves_csv,
    convergence_benchmark,
    ema_smooth,
    eval_physical,
    render_svg,
)
from layoutopt.optimizer import OptimizerConfig, solve
from layoutopt.scene_model import Asset, Layout, Room, SceneSpec, Unit, parse_layout, parse_scene
from mc_oracle import mc_outside_area, mc_pair_area, random_scene_with_layout

TAU = 0.0003


def _scene(room, assets, units=()):
    return SceneSpec(room=room, assets=assets, units=units, relations=())


def _layout(entries):
    # entries: id -> (x, y, theta); z filled at an arbitrary constant
    return Layout({aid: (x, y, 0.5, th) for aid, (x, y, th) in entries.items()})


def _boxes(room=(6.0, 6.0), **placed):
    assets = tuple(Asset(aid, "box", (l, w, 1.0)) for aid, (l, w, _, _, _) in placed.items())
    layout = _layout({aid: (x, y, th) for aid, (_, _, x, y, th) in placed.items()})
    return _scene(Room(room[0], room[1], 3.0), assets), layout


# --- physical evaluation ----------------------------------------------------


def test_disjoint_scene_is_clean():
    spec, layout = _boxes(
        a=(1.0, 1.0, 1.0, 1.0, 0.0),
        b=(1.0, 1.0, 4.0, 1.0, 0.3),
        c=(0.8, 0.6, 2.5, 4.5, -1.0),
    )
    rep = eval_physical(spec, layout)
    assert rep.cr_percent == 0.0 and rep.or_percent == 0.0
    assert rep.colliding_ids == () and rep.oob_ids == ()
    assert "0.0%" in rep.to_text()


def test_collision_rate_counts_unique_objects():
    # One overlapping pair among four objects: 2/4 = 50%.
    spec, layout = _boxes(
        a=(1.0, 1.0, 1.0, 1.0, 0.0),
        b=(1.0, 1.0, 1.4, 1.0, 0.0),
        c=(0.5, 0.5, 4.0, 4.0, 0.0),
        d=(0.5, 0.5, 5.0, 2.0, 0.0),
    )
    rep = eval_physical(spec, layout)
    assert rep.cr_percent == pytest.approx(50.0)
    assert rep.colliding_ids == ("a", "b")
    assert rep.or_percent == 0.0


def test_area_tolerance_absorbs_slivers():
    # Overlap strip of 1.0 x 0.0002 m stays under tau; 0.0004 m crosses it.
    for gap, expect in ((2e-4, ()), (4e-4, ("a", "b"))):
        spec, layout = _boxes(
            a=(1.0, 1.0, 1.0, 1.0, 0.0),
            b=(1.0, 1.0, 2.0 - gap, 1.0, 0.0),
        )
        rep = eval_physical(spec, layout)
        assert rep.colliding_ids == expect


def test_rotated_footprints_checked_exactly():
    # The diamond's bounding box reaches the small box, its polygon does not.
    spec, layout = _boxes(
        diamond=(1.0, 1.0, 2.0, 2.0, math.pi / 4),
        corner=(0.2, 0.2, 1.4, 1.4, 0.0),
    )
    assert eval_physical(spec, layout).colliding_ids == ()

    # Same shapes, small box moved inside the diamond.
    spec, layout = _boxes(
        diamond=(1.0, 1.0, 2.0, 2.0, math.pi / 4),
        corner=(0.2, 0.2, 2.0, 1.7, 0.0),
    )
    assert eval_physical(spec, layout).colliding_ids == ("corner", "diamond")


def test_oob_tolerance_mirrors_collision_tolerance():
    for offset, expect in ((2e-4, ()), (4e-4, ("a",))):
        spec, layout = _boxes(a=(1.0, 1.0, 0.5 - offset, 3.0, 0.0))
        rep = eval_physical(spec, layout)
        assert rep.oob_ids == expect
    spec, layout = _boxes(a=(1.0, 1.0, 0.5, 3.0, 0.0))
    assert eval_physical(spec, layout).oob_ids == ()  # flush with the wall


def test_oob_rate_over_all_objects():
    spec, layout = _boxes(
        a=(1.0, 1.0, -0.2, 3.0, 0.0),
        b=(1.0, 1.0, 3.0, 3.0, 0.0),
        c=(1.0, 1.0, 3.0, 6.4, 0.2),
        d=(1.0, 1.0, 4.5, 4.5, 0.0),
    )
    rep = eval_physical(spec, layout)
    assert rep.or_percent == pytest.approx(50.0)
    assert rep.oob_ids == ("a", "c")


def test_missing_pose_raises():
    spec, layout = _boxes(a=(1.0, 1.0, 1.0, 1.0, 0.0))
    spec2 = _scene(spec.room, spec.assets + (Asset("ghost", "box", (1.0, 1.0, 1.0)),))
    with pytest.raises(KeyError):
        eval_physical(spec2, layout)


def test_flags_match_membership_oracle_sample():
    # Small-sample version of the full agreement sweep: per-object flags
    # must match the sampling oracle's, ignoring objects whose areas land
    # within sampling noise of tau.
    rng = np.random.default_rng(11)
    band = 2e-4
    checked = 0
    for _ in range(6):
        spec, layout = random_scene_with_layout(rng)
        rep = eval_physical(spec, layout)
        boxes = {
            a.id: FootprintBox(layout.pose2d(a.id), a.half_l, a.half_w)
            for a in spec.assets
        }
        ids = sorted(boxes)
        mc_colliding, mc_oob, marginal = set(), set(), set()
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                est = mc_pair_area(boxes[a], boxes[b], rng, samples=200_000)
                if abs(est - TAU) < band:
                    marginal.update((a, b))
                elif est > TAU:
                    mc_colliding.update((a, b))
        for aid in ids:
            est = mc_outside_area(boxes[aid], spec.room.length, spec.room.width, rng, samples=200_000)
            if abs(est - TAU) < band:
                marginal.add(aid)
            elif est > TAU:
                mc_oob.add(aid)
        keep = set(ids) - marginal
        assert set(rep.colliding_ids) & keep == mc_colliding & keep
        assert set(rep.oob_ids) & keep == mc_oob & keep
        checked += len(keep)
    assert checked > 25


# --- rendering ---------------------------------------------------------------


def test_svg_is_deterministic_and_wellformed():
    spec, layout = _boxes(
        a=(1.2, 0.8, 2.0, 2.0, 0.4),
        b=(1.0, 1.0, 4.5, 4.0, -0.9),
    )
    svg = render_svg(spec, layout)
    assert svg == render_svg(spec, layout)
    assert svg.startswith(b"<?xml")
    root = ET.fromstring(svg.decode("utf-8"))
    ns = "{http://www.w3.org/2000/svg}"
    assert root.tag == f"{ns}svg"
    polygons = root.findall(f"{ns}polygon")
    assert len(polygons) == len(spec.assets)
    labels = [t.text for t in root.findall(f"{ns}text")]
    assert labels == ["a", "b"]


def test_svg_polygon_matches_footprint_corners():
    room = Room(6.0, 6.0, 3.0)
    asset = Asset("a", "box", (1.2, 0.8, 1.0))
    layout = _layout({"a": (2.0, 1.5, 0.7)})
    svg = render_svg(_scene(room, (asset,)), layout).decode("utf-8")
    box = FootprintBox(Pose2D(2.0, 1.5, 0.7), 0.6, 0.4)
    # 100 px per meter, 30 px border, svg y axis flipped.
    expect = " ".join(
        f"{30.0 + 100.0 * x:.4f},{30.0 + (6.0 - y) * 100.0:.4f}" for x, y in corners(box)
    )
    assert expect in svg


def test_svg_unit_members_share_fill():
    room = Room(6.0, 6.0, 3.0)
    assets = (
        Asset("t", "table", (1.0, 1.0, 1.0)),
        Asset("c", "chair", (0.5, 0.5, 1.0)),
        Asset("lamp", "lamp", (0.3, 0.3, 1.0)),
    )
    unit = Unit("pair", "t", ("c",))
    layout = _layout({"t": (2.0, 2.0, 0.0), "c": (4.0, 2.0, 0.0), "lamp": (2.0, 4.5, 0.0)})
    root = ET.fromstring(render_svg(_scene(room, assets, (unit,)), layout).decode("utf-8"))
    fills = [p.get("fill") for p in root.iter("{http://www.w3.org/2000/svg}polygon")]
    assert fills[0] == fills[1]
    assert fills[2] != fills[0]


def test_svg_empty_scene_renders_room_only():
    svg = render_svg(_scene(Room(4.0, 3.0, 2.5), ()), Layout({}))
    root = ET.fromstring(svg.decode("utf-8"))
    ns = "{http://www.w3.org/2000/svg}"
    assert root.findall(f"{ns}polygon") == []
    rect = root.find(f"{ns}rect")
    assert rect is not None and rect.get("width") == "400.0000"


def test_eval_empty_scene_is_defined():
    rep = eval_physical(_scene(Room(4.0, 3.0, 2.5), ()), Layout({}))
    assert rep.cr_percent == 0.0 and rep.or_percent == 0.0


# --- benchmark ---------------------------------------------------------------


def test_ema_matches_frozen_recurrence():
    rng = np.random.default_rng(3)
    values = rng.uniform(0.0, 5.0, size=40)
    smoothed = ema_smooth(values, alpha=0.85)
    acc = values[0]
    for i, v in enumerate(values):
        acc = 0.85 * acc + 0.15 * v
        assert smoothed[i] == pytest.approx(acc, abs=1e-15)
    assert ema_smooth([2.0, 2.0, 2.0]).tolist() == [2.0, 2.0, 2.0]


def test_benchmark_is_deterministic_and_consistent():
    spec = load_fixture("dining_set")
    cfg = OptimizerConfig(iterations=80)
    first = convergence_benchmark(spec, (0, 1), threshold=0.1, config=cfg)
    second = convergence_benchmark(spec, (0, 1), threshold=0.1, config=cfg)
    assert first == second
    for r, seed in zip(first, (0, 1)):
        assert r.scene == "dining_set" and r.seed == seed and not r.diverged
        assert 0 <= r.reparam_iterations <= 160
        assert 0 <= r.baseline_iterations <= 160
        assert r.speedup == pytest.approx(r.baseline_iterations / max(r.reparam_iterations, 1))


def test_benchmark_caps_unreached_threshold():
    # Two iterations per stage cannot reach a 1e-9 loss ratio; both runs
    # report the full row count and the ratio degenerates to 1.
    spec = load_fixture("dining_set")
    results = convergence_benchmark(spec, (0,), threshold=1e-9, config=OptimizerConfig(iterations=2))
    assert results[0].reparam_iterations == 4
    assert results[0].baseline_iterations == 4
    assert results[0].speedup == pytest.approx(1.0)


def test_benchmark_rejects_bad_threshold():
    spec = load_fixture("dining_set")
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            convergence_benchmark(spec, (0,), threshold=bad)


def test_curves_csv_rows_and_equal_start():
    spec = load_fixture("dining_set")
    csv = benchmark_curves_csv(spec, (0,), config=OptimizerConfig(iterations=10))
    lines = csv.strip().splitlines()
    assert lines[0] == "seed,iteration,reparam,reparam_ema,baseline,baseline_ema"
    assert len(lines) == 1 + 20
    seed, it, re_raw, _, gl_raw, _ = lines[1].split(",")
    assert (seed, it) == ("0", "0")
    # Both parameterizations are transported from the same initial draw.
    assert float(re_raw) == pytest.approx(float(gl_raw), abs=1e-9)


# --- command line ------------------------------------------------------------


def _write_fixture(tmp_path, name):
    path = tmp_path / f"{name}.json"
    path.write_text(fixture_text(name))
    return str(path)


def test_cli_solve_writes_deterministic_artifacts(tmp_path, capsys):
    scene = _write_fixture(tmp_path, "dining_set")
    out, trace, svg = (str(tmp_path / n) for n in ("l.json", "t.csv", "p.svg"))
    args = ["solve", scene, "--seed", "3", "--iterations", "60",
            "--out", out, "--trace", trace, "--svg", svg]
    assert main(args) == 0
    stdout = capsys.readouterr().out
    assert "collision rate" in stdout and "out of bounds" in stdout
    assert "wall" not in stdout
    blobs = [open(p, "rb").read() for p in (out, trace, svg)]
    assert main(args) == 0
    assert [open(p, "rb").read() for p in (out, trace, svg)] == blobs
    layout = parse_layout(open(out).read())
    assert set(layout.poses) == {a.id for a in load_fixture("dining_set").assets}


def test_cli_eval_reads_back_layout(tmp_path, capsys):
    scene = _write_fixture(tmp_path, "dining_set")
    out = str(tmp_path / "l.json")
    main(["solve", scene, "--seed", "0", "--out", out])
    capsys.readouterr()
    assert main(["eval", scene, out]) == 0
    assert "collision rate 0.0%" in capsys.readouterr().out


def test_cli_validate_converges_and_writes_revision(tmp_path, capsys):
    scene = _write_fixture(tmp_path, "conflict_pair")
    out = str(tmp_path / "revised.json")
    assert main(["validate", scene, "--out", out]) == 0
    assert "converged" in capsys.readouterr().out
    revised = parse_scene(open(out).read())
    assert len(revised.relations) == len(load_fixture("conflict_pair").relations) + 1


def test_cli_validate_budget_exhaustion_is_exit_3(tmp_path, capsys):
    scene = _write_fixture(tmp_path, "conflict_pair")
    assert main(["validate", scene, "--budget", "1"]) == 3
    assert "not converged" in capsys.readouterr().out


def test_cli_analyze_writes_cost_table(tmp_path, capsys):
    scene = _write_fixture(tmp_path, "dining_set")
    csv = str(tmp_path / "cost.csv")
    assert main(["analyze", scene, "--csv", csv]) == 0
    assert "saved 4" in capsys.readouterr().out
    assert open(csv).read().splitlines()[0] == "unit,members,depth,delta,valid"


def test_cli_bench_prints_speedups(tmp_path, capsys):
    scene = _write_fixture(tmp_path, "star_unit")
    curves = str(tmp_path / "curves.csv")
    assert main(["bench", scene, "--seeds", "0,1", "--iterations", "60", "--curves", curves]) == 0
    stdout = capsys.readouterr().out
    assert "mean speedup" in stdout
    assert open(curves).read().startswith("seed,iteration,")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"room": [')
    assert main(["solve", str(bad)]) == 3
    assert main(["frobnicate"]) == 1
    tiny = tmp_path / "tiny.json"
    tiny.write_text(json.dumps({
        "room": {"length": 1.0, "width": 1.0, "height": 3.0},
        "assets": [{"id": "huge", "description": "slab", "size": [5.0, 5.0, 1.0]}],
        "units": [],
        "relations": [],
    }))
    assert main(["solve", str(tiny)]) == 2
    # argparse's own usage text shares stderr with the JSON error objects
    errs = [
        json.loads(line)
        for line in capsys.readouterr().err.strip().splitlines()
        if line.startswith("{")
    ]
    assert [e["error"] for e in errs] == [
        "FileNotFoundError", "SceneSyntaxError", "InfeasibleRoomError",
    ]


def test_cli_seed_sources(tmp_path, capsys, monkeypatch):
    scene = _write_fixture(tmp_path, "dining_set")
    a, b, c = (str(tmp_path / n) for n in ("a.json", "b.json", "c.json"))
    main(["solve", scene, "--seed", "7", "--iterations", "40", "--out", a])
    monkeypatch.setenv("LAYOUTOPT_SEED", "7")
    main(["solve", scene, "--iterations", "40", "--out", b])
    main(["solve", scene, "--seed", "8", "--iterations", "40", "--out", c])
    capsys.readouterr()
    assert open(a).read() == open(b).read()  # env var fills in the seed
    assert open(a).read() != open(c).read()  # explicit flag beats it
