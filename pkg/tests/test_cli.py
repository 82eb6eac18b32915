import json

import numpy as np
import pytest

from conftest import random_plant
from retrofit_control.cli import main
from retrofit_control.lti import plant_to_json_dict
from retrofit_control.network import NetworkSpec


@pytest.fixture
def small_plant_file(tmp_path):
    rng = np.random.default_rng(51)
    plant = random_plant(rng, n=4, m=1, p=2, q=1, wdim=1)
    path = tmp_path / "plant.json"
    path.write_text(json.dumps(plant_to_json_dict(plant)))
    return path


@pytest.fixture
def small_spec_file(tmp_path):
    spec = NetworkSpec(
        N=6, inertia=1.0, damping=0.5,
        edges=((0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (0, 3, 1.0)),
        interest=(0, 1, 2),
    )
    path = tmp_path / "net.json"
    path.write_text(json.dumps(spec.to_json_dict()))
    return path


class TestSynth:
    def test_general_mode_writes_controller(self, small_plant_file, tmp_path):
        out = tmp_path / "ctrl.json"
        rc = main(["synth", str(small_plant_file), "--mode", "general", "-o", str(out)])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["verification"]["output_rectifying"] is True
        assert "K" in payload and "Khat" in payload
        assert payload["invariance_residual"] <= 1e-7

    def test_unstable_plant_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "A": [[1.0]], "L": [[1.0]], "B": [[1.0]],
            "Gamma": [[1.0]], "C": [[1.0]],
        }))
        rc = main(["synth", str(path), "-o", str(tmp_path / "x.json")])
        assert rc == 2

    def test_square_interaction_exits_2(self, tmp_path, capsys):
        path = tmp_path / "sq.json"
        path.write_text(json.dumps({
            "A": [[-1.0]], "L": [[1.0]], "B": [[1.0]],
            "Gamma": [[1.0]], "C": [[1.0]],
        }))
        rc = main(["synth", str(path), "-o", str(tmp_path / "x.json")])
        assert rc == 2
        assert "trivial controller" in capsys.readouterr().err

    def test_malformed_exits_1(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        rc = main(["synth", str(path), "-o", str(tmp_path / "x.json")])
        assert rc == 1


class TestVerify:
    def test_pipeline_roundtrip(self, small_plant_file, tmp_path, capsys):
        out = tmp_path / "ctrl.json"
        assert main(["synth", str(small_plant_file), "-o", str(out)]) == 0
        capsys.readouterr()
        rc = main(["verify", str(small_plant_file), str(out)])
        report = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert report["retrofit"] is True
        assert report["output_rectifying"] is True

    def test_zero_controller_is_retrofit(self, small_plant_file, tmp_path, capsys):
        ctrl = tmp_path / "zero.json"
        zeros = {"rows": 1, "cols": 2, "entries": [[
            {"num": [0.0], "den": [1.0]}, {"num": [0.0], "den": [1.0]},
        ]]}
        ctrl.write_text(json.dumps({"K": zeros}))
        rc = main(["verify", str(small_plant_file), str(ctrl)])
        report = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert report["retrofit"] and report["output_rectifying"]

    def test_naive_gain_not_retrofit(self, small_plant_file, tmp_path, capsys):
        ctrl = tmp_path / "naive.json"
        gain = {"rows": 1, "cols": 2, "entries": [[
            {"num": [0.08], "den": [1.0]}, {"num": [0.03], "den": [1.0]},
        ]]}
        ctrl.write_text(json.dumps({"K": gain}))
        rc = main(["verify", str(small_plant_file), str(ctrl)])
        report = json.loads(capsys.readouterr().out)
        assert rc != 0
        assert report["retrofit"] is False

    def test_missing_entries_exits_1(self, small_plant_file, tmp_path):
        ctrl = tmp_path / "empty.json"
        ctrl.write_text(json.dumps({"mode": "general"}))
        assert main(["verify", str(small_plant_file), str(ctrl)]) == 1


class TestBench:
    def test_custom_spec_csv(self, small_spec_file, tmp_path):
        out = tmp_path / "bench.csv"
        rc = main(["bench", str(small_spec_file), "--graphs", "1", "-o", str(out), "--seed", "7"])
        assert rc == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0].startswith("graph,dim_v,")
        assert len(lines) == 2

    def test_deterministic_output(self, small_spec_file, tmp_path):
        out1 = tmp_path / "b1.csv"
        out2 = tmp_path / "b2.csv"
        assert main(["bench", str(small_spec_file), "--graphs", "2", "-o", str(out1), "--seed", "3"]) == 0
        assert main(["bench", str(small_spec_file), "--graphs", "2", "-o", str(out2), "--seed", "3"]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_no_spec_exits_1(self, tmp_path):
        assert main(["bench", "-o", str(tmp_path / "x.csv")]) == 1


class TestTolerancesFlag:
    def test_tol_override_applies(self, small_plant_file, tmp_path):
        tolfile = tmp_path / "tol.json"
        tolfile.write_text(json.dumps({"residual_tol": 1e-5}))
        out = tmp_path / "ctrl.json"
        rc = main(["synth", str(small_plant_file), "-o", str(out), "--tol", str(tolfile)])
        assert rc == 0
        from retrofit_control import config
        assert config.active().residual_tol == 1e-5
        config.set_active(config.DEFAULT)
