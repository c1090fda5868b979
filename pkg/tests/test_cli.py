import json
import os

import pytest

from unroll.cli import EXIT_CHECKS, EXIT_CONFIG, EXIT_OK, main
from unroll.config import sample_preset, validator
from unroll.presets import CATALOG


def report(out, stem, cmd):
    with open(os.path.join(out, f"{stem}.{cmd}.json"), encoding="utf-8") as fh:
        return json.load(fh)


def test_energy_cylinder(tmp_path, capsys):
    assert main(["energy", "--preset", "cylinder_wrap", "--out", str(tmp_path)]) == EXIT_OK
    rep = report(tmp_path, "cylinder_wrap", "energy")
    assert rep["passed"] and rep["command"] == "energy"
    assert rep["result"]["energy_reduced"] == pytest.approx(4.0, abs=1e-8)
    assert "PASS" in capsys.readouterr().out
    assert not list(validator("report.schema.json").iter_errors(rep))


def test_energy_phi_csv(tmp_path):
    assert main(["energy", "--preset", "cone_sector", "--phi-csv", "--out", str(tmp_path)]) == EXIT_OK
    rep = report(tmp_path, "cone_sector", "energy")
    assert os.path.exists(os.path.join(tmp_path, rep["artifacts"]["phi_csv"]))


def test_reports_are_reproducible(tmp_path):
    runs = []
    for _ in range(2):
        assert main(["energy", "--preset", "disk_roll", "--out", str(tmp_path)]) == EXIT_OK
        runs.append((tmp_path / "disk_roll.energy.json").read_bytes())
    assert runs[0] == runs[1]


def test_validate_rejects_stretch(tmp_path, capsys):
    code = main(["validate", "--preset", "cylinder_rim_stretch", "--out", str(tmp_path)])
    assert code == EXIT_CHECKS
    rep = report(tmp_path, "cylinder_rim_stretch", "validate")
    assert not rep["passed"]
    assert rep["checks"]["ruling_closure"] is False
    assert "ruling_closure" in capsys.readouterr().out


def test_validate_exhaustive_alias(tmp_path):
    for flag in ("--exhaustive-m2", "--exhaustive-crossing"):
        out = tmp_path / flag.strip("-")
        assert main(["validate", "--preset", "ramp_roll", flag, "--n-alpha", "512", "--out", str(out)]) == EXIT_OK
        assert report(out, "ramp_roll", "validate")["config"]["options"]["validate"]["exhaustive_crossing"] is True


def test_bad_param_is_config_error(tmp_path, capsys):
    code = main(["energy", "--preset", "cylinder_wrap", "--param", "R=-1", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "unroll: config error at /input" in capsys.readouterr().err


def test_missing_input_is_config_error(capsys):
    assert main(["energy"]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_tolerance_override_recorded(tmp_path):
    assert main(["validate", "--preset", "cone_sector", "--tol", "angle_tol=1e-5", "--out", str(tmp_path)]) == EXIT_OK
    assert report(tmp_path, "cone_sector", "validate")["tolerances"]["angle_tol"] == 1e-5


def test_build_writes_obj(tmp_path):
    assert main(["build", "--preset", "ramp_roll", "--out", str(tmp_path)]) == EXIT_OK
    rep = report(tmp_path, "ramp_roll", "build")
    obj = os.path.join(tmp_path, rep["artifacts"]["mesh_obj"])
    with open(obj, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    assert any(ln.startswith("v ") for ln in lines) and any(ln.startswith("f ") for ln in lines)


def test_verify_two_cylinder(tmp_path):
    assert main(["verify", "--preset", "two_cylinder", "--out", str(tmp_path)]) == EXIT_OK
    rep = report(tmp_path, "two_cylinder", "verify")
    flagged = [j for j in rep["result"]["mean_curvature_jumps"] if j["flagged"]]
    assert flagged
    assert not list(validator("report.schema.json").iter_errors(rep))


def test_verify_rejects_defect(tmp_path):
    assert main(["verify", "--preset", "cylinder_rim_stretch", "--out", str(tmp_path)]) == EXIT_CHECKS
    assert report(tmp_path, "cylinder_rim_stretch", "verify")["checks"] == {"admissible": False}


def test_sweep_grid(tmp_path):
    code = main(["sweep", "--preset", "cylinder_wrap", "--grid", "R=0.5,1.0", "--out", str(tmp_path)])
    assert code == EXIT_OK
    rep = report(tmp_path, "cylinder_wrap", "sweep")
    energies = [r["energy_reduced"] for r in rep["result"]["rows"]]
    assert energies == pytest.approx([4.0, 1.0], rel=1e-8)
    csv_lines = (tmp_path / rep["artifacts"]["sweep_csv"]).read_text().splitlines()
    assert csv_lines[0].startswith("R,") and len(csv_lines) == 3


def test_sweep_bad_grid(tmp_path, capsys):
    assert main(["sweep", "--preset", "cylinder_wrap", "--grid", "R", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "/options/sweep" in capsys.readouterr().err


def test_minimize_flat_family(tmp_path):
    assert main(["minimize", "--preset", "plane_identity", "--out", str(tmp_path)]) == EXIT_OK
    rep = report(tmp_path, "plane_identity", "minimize")
    assert rep["result"]["termination"] == "gradient"
    assert os.path.exists(os.path.join(tmp_path, rep["artifacts"]["trace_csv"]))


def test_minimize_without_family(tmp_path, capsys):
    assert main(["minimize", "--preset", "cone_sector", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "/options/minimize/family" in capsys.readouterr().err


def test_sampled_config_file(tmp_path):
    data = sample_preset(CATALOG["disk_roll"](), 512)
    (tmp_path / "disk.json").write_text(json.dumps(data))
    cfg = {"input": {"sampled": {"path": "disk.json"}}, "outputs": {"dir": str(tmp_path / "out")}}
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    assert main(["energy", "--config", str(tmp_path / "run.json")]) == EXIT_OK
    rep = report(tmp_path / "out", "sampled", "energy")
    assert rep["result"]["energy_reduced"] == pytest.approx(0.39269908169872414, rel=1e-3)
    assert rep["input_sha256"] != "0" * 64


def test_threads_env_must_be_integer(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("UNROLL_THREADS", "many")
    assert main(["sweep", "--preset", "cylinder_wrap", "--grid", "R=1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "UNROLL_THREADS" in capsys.readouterr().err
