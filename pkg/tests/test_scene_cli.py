import io
import json
import math

import numpy as np
import pytest

from artspace import cli
from artspace.errors import SceneValidationError
from artspace.raster import read_image
from artspace.scene import (
    demo_names, demo_path, exit_side, fit_circle, load_demo, load_scene, parse_scene, run_scene,
)
from artspace.domains import Rect

MINIMAL = {
    "field": {"kind": "constant", "value": 1.0},
    "robots": [{"position": [0.0, 0.0], "heading_deg": 0.0}],
    "termination": {"t_max": 1.0},
}


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def demo_results():
    return {name: run_scene(load_demo(name)) for name in ("proportional", "eaton90", "sorter")}


class TestLoadScene:
    def test_minimal_scene(self, tmp_path):
        cfg = load_scene(write_json(tmp_path / "m.json", MINIMAL))
        assert cfg.warnings == []
        assert len(cfg.robots) == 1 and cfg.robots[0].pose.delta == 0.01

    def test_robot_outside_disk_names_index(self):
        data = dict(MINIMAL, domain={"kind": "disk", "center": [0, 0], "radius": 1.0},
                    robots=[{"position": [0.0, 0.0]}, {"position": [5.0, 0.0]}])
        with pytest.raises(SceneValidationError) as info:
            parse_scene(data)
        assert len(info.value.errors) == 1
        assert info.value.errors[0].startswith("robots[1].position")

    def test_all_errors_collected(self):
        data = {"field": {"kind": "eaton", "theta_turn": -1.0}, "bogus": 1,
                "robots": [{"position": [0.0]}], "termination": {"t_max": -2}}
        with pytest.raises(SceneValidationError) as info:
            parse_scene(data)
        text = "\n".join(info.value.errors)
        assert "bogus" in text
        assert "theta_turn" in text
        assert "robots[0].position" in text
        assert "t_max" in text

    def test_unknown_field_kind_located(self):
        data = dict(MINIMAL, field={"kind": "product", "operands": [
            {"kind": "constant", "value": 1.0}, {"kind": "luneburg"}]})
        with pytest.raises(SceneValidationError) as info:
            parse_scene(data)
        assert info.value.errors[0].startswith("field.operands[1]")

    def test_eaton90_summary(self):
        cfg = load_demo("eaton90")
        assert cfg.summary() == {"name": "eaton90", "fields": 1, "robots": 0, "geodesics": 1}

    def test_every_demo_loads(self):
        names = demo_names()
        assert set(names) == {"proportional", "grin", "fisheye", "eaton90", "eaton180",
                              "sorter", "sc-channel"}
        for name in names:
            assert load_demo(name).warnings == []

    def test_non_conformal_pullback(self):
        data = dict(MINIMAL, domain={"kind": "rect", "xmin": -1, "xmax": 1, "ymin": -1, "ymax": 1},
                    field={"kind": "pullback", "map": {"kind": "power", "k": 2.0},
                           "field": {"kind": "proportional"}})
        with pytest.raises(SceneValidationError) as info:
            parse_scene(data)
        assert "not conformal" in info.value.errors[0]
        assert info.value.errors[0].startswith("field.map")

    @pytest.mark.parametrize("cmap, box, bad", [
        ({"kind": "moebius", "a": [1, 0], "b": [0, -1], "c": [1, 0], "d": [0, 1]},
         (-1, 1, -1.5, 0.5), True),
        ({"kind": "moebius", "a": [1, 0], "b": [0, -1], "c": [1, 0], "d": [0, 1]},
         (-1, 1, 0.2, 2.0), False),
        ({"kind": "log"}, (-1, 1, -1, 1), True),
        ({"kind": "power", "k": 0.5}, (0.5, 2.0, -1.0, 1.0), False),
    ])
    def test_conformality_check(self, cmap, box, bad):
        from artspace.conformal import map_from_dict
        from artspace.scene import check_conformal
        found = check_conformal(map_from_dict(cmap), Rect(*box))
        assert (found is not None) == bad

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{\"field\": ")
        with pytest.raises(SceneValidationError) as info:
            load_scene(str(p))
        assert "line 1" in info.value.errors[0]

    def test_unknown_demo(self):
        with pytest.raises(Exception):
            demo_path("nope")


class TestRunScene:
    def test_proportional_rates(self, demo_results):
        rep = demo_results["proportional"].report
        geo = [e for e in rep["trajectories"] if not e["robot"]]
        assert len(geo) == 7
        for e in geo:
            assert e["fitted_rate"] == pytest.approx(e["predicted_rate"], abs=1e-4)
            assert e["fitted_rate"] == pytest.approx(-math.cos(math.radians(e["alpha0_deg"])),
                                                     abs=1e-4)

    def test_eaton90_turns_right_angle(self, demo_results):
        (e,) = demo_results["eaton90"].report["trajectories"]
        assert abs(e["turning_deg"]) == pytest.approx(90.0, abs=2.0)

    def test_sorter_exits_opposite(self, demo_results):
        sides = [e["exit_side"] for e in demo_results["sorter"].report["trajectories"]]
        assert sorted(sides) == ["bottom", "top"]

    def test_outputs_written(self, tmp_path):
        res = run_scene(load_demo("eaton90"), out_dir=str(tmp_path))
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["trajectories"][0]["csv"] == "geodesic_000.csv"
        assert read_image(tmp_path / "eaton90.pgm") == res.raster

    def test_deterministic_csv(self, tmp_path):
        cfg = load_demo("sorter")
        run_scene(cfg, out_dir=str(tmp_path / "a"))
        run_scene(cfg, out_dir=str(tmp_path / "b"), workers=2)
        for name in ("geodesic_000.csv", "geodesic_001.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_fisheye_closes(self):
        rep = run_scene(load_demo("fisheye")).report
        for e in rep["trajectories"]:
            assert e["closure_error"] <= 1e-6
            assert e["circle_residual"] <= 1e-6

    def test_grin_period(self):
        rep = run_scene(load_demo("grin")).report
        for e in rep["trajectories"]:
            assert len(e["axial_periods"]) >= 2
            np.testing.assert_allclose(e["axial_periods"], 2 * math.pi / math.sqrt(0.08),
                                       rtol=1e-3)

    def test_errors_annotated(self):
        data = dict(MINIMAL, domain={"kind": "rect", "xmin": -1, "xmax": 1, "ymin": -1, "ymax": 1},
                    robots=[], geodesics=[{"position": [0.5, 0.5], "label": "g7"}])
        cfg = parse_scene(data)
        agent = cfg.agents[0]
        agent.pose = agent.pose.__class__(3.0, 0.0, 0.0)
        with pytest.raises(Exception) as info:
            run_scene(cfg)
        assert str(info.value).startswith("g7:")
        assert info.value.scene_element == "g7"


class TestHelpers:
    def test_exit_side(self):
        box = Rect(-1, 1, -1, 1)
        assert exit_side(box, (1.0, 0.2)) == "right"
        assert exit_side(box, (0.1, -1.0)) == "bottom"

    def test_fit_circle(self):
        t = np.linspace(0, 2 * math.pi, 50)
        cx, cy, r, resid = fit_circle(np.column_stack([1 + 2 * np.cos(t), -1 + 2 * np.sin(t)]))
        assert (cx, cy, r) == pytest.approx((1.0, -1.0, 2.0))
        assert resid < 1e-12


class TestCli:
    def test_demo_list(self):
        code, out, _ = run_cli("demo", "--list")
        assert code == 0
        assert "sc-channel" in json.loads(out)["demos"]

    def test_simulate_writes_csvs(self, tmp_path):
        scene = write_json(tmp_path / "s.json", MINIMAL)
        code, out, _ = run_cli("simulate", "--scene", scene, "--out-dir", str(tmp_path / "o"))
        assert code == 0
        assert (tmp_path / "o" / "robot_000.csv").exists()
        assert json.loads(out)["trajectories"][0]["termination"] == "time-limit"

    def test_validation_error_exit_1(self, tmp_path):
        bad = dict(MINIMAL, domain={"kind": "disk", "center": [0, 0], "radius": 1.0},
                   robots=[{"position": [5.0, 0.0]}])
        code, _, err = run_cli("simulate", "--scene", write_json(tmp_path / "b.json", bad),
                               "--out-dir", str(tmp_path / "o"))
        assert code == 1
        assert "robots[0]" in err

    def test_numerical_failure_exit_2(self, tmp_path):
        poly = write_json(tmp_path / "thin.json", [[0, 0], [60, 0], [60, 1], [0, 1]])
        code, _, err = run_cli("maps", "--polygon", poly, "--cache", str(tmp_path / "c"))
        assert code == 2
        assert "crowding" in err

    def test_maps_caches(self, tmp_path):
        poly = write_json(tmp_path / "L.json",
                          [[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]])
        code, out, _ = run_cli("maps", "--polygon", poly, "--cache", str(tmp_path / "c"))
        assert code == 0
        first = json.loads(out)
        assert first["cached"] is False and first["max_vertex_error"] < 1e-8
        code, out, _ = run_cli("maps", "--polygon", poly, "--cache", str(tmp_path / "c"))
        assert json.loads(out)["cached"] is True

    def test_synth_log_image(self, tmp_path):
        img = str(tmp_path / "e.pgm")
        code, out, _ = run_cli("synth", "--scene", demo_path("eaton90"), "--out", img,
                               "--res", "64x48")
        assert code == 0
        r = read_image(img)
        assert (r.width, r.height, r.mode) == (64, 48, "log")

    def test_synth_degenerate(self, tmp_path):
        scene = write_json(tmp_path / "c.json", dict(
            MINIMAL, domain={"kind": "rect", "xmin": 0, "xmax": 1, "ymin": 0, "ymax": 1},
            field={"kind": "constant", "value": 1.0}))
        img = str(tmp_path / "c.pgm")
        code, _, _ = run_cli("synth", "--scene", scene, "--out", img, "--mode", "log")
        assert code == 1
        code, _, _ = run_cli("synth", "--scene", scene, "--out", img, "--mode", "log",
                             "--allow-degenerate")
        assert code == 0
        assert np.all(read_image(img).levels == 128)

    def test_analyze(self, tmp_path):
        out_dir = tmp_path / "p"
        run_scene(load_demo("proportional"), out_dir=str(out_dir))
        code, out, _ = run_cli("analyze", "--traj", str(out_dir / "geodesic_001.csv"),
                               "--center", "0,0")
        assert code == 0
        rep = json.loads(out)
        assert rep["fitted_rate"] == pytest.approx(rep["predicted_rate"], abs=1e-4)

    def test_analyze_bad_file(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("nonsense\n")
        code, _, _ = run_cli("analyze", "--traj", str(p))
        assert code == 1
