import json

import pytest

from sttube import data_path
from sttube.cli import main


SOLO = {
    "dims": 2,
    "horizon": 2.0,
    "epsilon": 0.01,
    "arena": [[0.0, 6.0], [0.0, 6.0]],
    "agents": [
        {"start": [[0.0, 1.0], [0.0, 1.0]], "goal": [[5.0, 6.0], [5.0, 6.0]],
         "tube_degree": [2, 2], "min_width": [0.4, 0.4]}
    ],
    "obstacles": [],
    "plant": {"kind": "omnidirectional",
              "disturbance": {"bound": 0.01, "kind": "uniform", "seed": 1}},
}


@pytest.fixture()
def solo_scenario(tmp_path):
    path = tmp_path / "solo.scenario"
    path.write_text(json.dumps(SOLO))
    return path


def test_synth_writes_tubes_certificate_manifest(tmp_path, solo_scenario, capsys):
    code = main(["synth", str(solo_scenario), "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "certified=yes" in out
    assert (tmp_path / "solo.tubes").exists()
    cert = json.loads((tmp_path / "solo.cert.json").read_text())
    assert cert["passed"] is True and cert["margin"] <= 0
    manifest = json.loads((tmp_path / "solo.synth.manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["outputs"]["tubes"].endswith("solo.tubes")


def test_synth_degree_zero_exits_2(tmp_path, capsys):
    code = main([
        "synth", str(data_path("robots.scenario")), "--degree", "0",
        "--out", str(tmp_path),
    ])
    assert code == 2
    assert "higher-degree" in capsys.readouterr().err


def test_simulate_end_to_end_and_determinism(tmp_path, solo_scenario, capsys):
    assert main(["synth", str(solo_scenario), "--out", str(tmp_path)]) == 0
    tubes = tmp_path / "solo.tubes"
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    code = main(["simulate", str(solo_scenario), str(tubes),
                 "--seed", "5", "--out", str(out1)])
    assert code == 0
    assert main(["simulate", str(solo_scenario), str(tubes),
                 "--seed", "5", "--out", str(out2)]) == 0
    csv1 = (out1 / "solo.trajectories.csv").read_bytes()
    csv2 = (out2 / "solo.trajectories.csv").read_bytes()
    assert csv1 == csv2
    report = json.loads((out1 / "solo.verify.json").read_text())
    assert report["all_pass"] is True


def test_simulate_requires_certificate(tmp_path, solo_scenario):
    assert main(["synth", str(solo_scenario), "--out", str(tmp_path)]) == 0
    tubes = tmp_path / "solo.tubes"
    (tmp_path / "solo.cert.json").unlink()
    code = main(["simulate", str(solo_scenario), str(tubes), "--out", str(tmp_path)])
    assert code == 1
    # --force bypasses the gate
    code = main(["simulate", str(solo_scenario), str(tubes), "--force",
                 "--out", str(tmp_path)])
    assert code == 0


def test_simulate_weak_gain_fails_verification(tmp_path, solo_scenario, capsys):
    assert main(["synth", str(solo_scenario), "--out", str(tmp_path)]) == 0
    tubes = tmp_path / "solo.tubes"
    code = main(["simulate", str(solo_scenario), str(tubes),
                 "--kappa", "1e-6", "--out", str(tmp_path)])
    assert code == 3


def test_lipschitz_prints_estimates(capsys):
    code = main(["lipschitz", str(data_path("robots_table.tubes")), "--seed", "2"])
    out = capsys.readouterr().out
    assert code == 0
    assert "L_L=" in out and "analytic slope bounds" in out


def test_usage_error_exit_code(capsys):
    assert main(["nonsense"]) == 1
    assert main([]) == 1
