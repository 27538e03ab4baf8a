import json
import math
import os

import pytest

from weyllab.cli import main

TORUS_CFG = {"kind": "flat_torus",
             "periods": [2 * math.pi, 2 * math.pi]}
PERT_CFG = {"kind": "perturbed_sphere", "epsilon": 0.01, "a": 0.5, "b": 1.0}


@pytest.fixture
def configs(tmp_path):
    torus = tmp_path / "torus.json"
    torus.write_text(json.dumps(TORUS_CFG))
    pert = tmp_path / "pert.json"
    pert.write_text(json.dumps(PERT_CFG))
    return {"torus": str(torus), "pert": str(pert), "dir": str(tmp_path)}


def test_spectrum_csv(configs):
    rc = main(["--out-dir", configs["dir"], "spectrum",
               "--manifold", configs["torus"], "--lambda-max", "5"])
    assert rc == 0
    lines = open(os.path.join(configs["dir"], "spectrum.csv")).read().split("\n")
    assert lines[0].startswith("# weyllab")
    assert lines[1].startswith("# config-hash")
    assert lines[2] == "lambda,multiplicity,m,k"
    assert lines[3].startswith("0.0,1")


def test_count_and_remainder_fit(configs):
    rc = main(["--out-dir", configs["dir"], "count",
               "--manifold", configs["torus"], "--lambda-max", "60",
               "--window", "20", "50"])
    assert rc == 0
    rc = main(["--out-dir", configs["dir"], "remainder-fit",
               "--manifold", configs["torus"], "--lambda-max", "120",
               "--window", "20", "100", "--model", "power"])
    assert rc == 0
    verdict = json.load(open(os.path.join(configs["dir"],
                                          "remainder-fit.json")))
    assert verdict["gamma"] < 1.0
    assert "config_hash" in verdict["provenance"]


def test_rotation_and_classify(configs):
    rc = main(["--out-dir", configs["dir"], "rotation-number",
               "--profile", configs["pert"], "--grid", "0.2:1.4:4"])
    assert rc == 0
    rc = main(["--out-dir", configs["dir"], "classify",
               "--profile", configs["pert"], "--grid", "0.2:1.4:4",
               "--qmax", "50"])
    assert rc == 0
    body = open(os.path.join(configs["dir"], "classify.csv")).read()
    assert "periodic" in body


def test_nonperiodic_measure_and_determinism(configs):
    args = ["--out-dir", configs["dir"], "--seed", "5",
            "nonperiodic-measure", "--manifold", configs["torus"],
            "--radii", "0.02", "--samples", "2000",
            "--resolution", "const:8.0"]
    assert main(args) == 0
    first = open(os.path.join(configs["dir"],
                              "nonperiodic-measure.csv")).read()
    assert main(args) == 0
    second = open(os.path.join(configs["dir"],
                               "nonperiodic-measure.csv")).read()
    assert first == second


def test_kernel_subcommand(configs):
    rc = main(["--out-dir", configs["dir"], "kernel",
               "--manifold", configs["torus"], "--lambda-max", "30",
               "--window", "10", "25", "--n-lambda", "4",
               "--x", "0.0", "0.0", "--y", "0.1", "0.0"])
    assert rc == 0


def test_cover_audit(configs):
    rc = main(["--out-dir", configs["dir"], "--seed", "1", "cover-audit",
               "--manifold", configs["torus"], "--r", "0.05"])
    assert rc == 0
    audit = json.load(open(os.path.join(configs["dir"],
                                        "cover-audit.json")))
    assert audit["coverage"]["pass"]


def test_scenario_list_and_run(configs, capsys):
    assert main(["scenario", "list"]) == 0
    out = capsys.readouterr().out
    assert "sphere-sharpness" in out
    assert "pendulum-rotation" in out
    assert "band-classification" in out
    rc = main(["--out-dir", configs["dir"], "scenario", "sphere-sharpness"])
    assert rc == 0
    verdict = json.load(open(os.path.join(
        configs["dir"], "verdict-sphere-sharpness.json")))
    assert verdict["passed"]
    assert all("tag" in c for c in verdict["claims"])


def test_config_error_exit_code(configs, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "bogus"}))
    rc = main(["--out-dir", configs["dir"], "spectrum",
               "--manifold", str(bad), "--lambda-max", "5"])
    assert rc == 3


def test_ci_mode_requires_seed(configs):
    rc = main(["--ci", "--out-dir", configs["dir"], "nonperiodic-measure",
               "--manifold", configs["torus"], "--radii", "0.02",
               "--samples", "2000"])
    assert rc == 3


def test_spectrum_json_format(configs):
    rc = main(["--out-dir", configs["dir"], "spectrum",
               "--manifold", configs["torus"], "--lambda-max", "5",
               "--format", "json"])
    assert rc == 0
    payload = json.load(open(os.path.join(configs["dir"], "spectrum.json")))
    assert payload["entries"][0] == {"lambda": 0.0, "multiplicity": 1}


def test_scenario_experiment_config(configs, tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"task": {"lambda_max": 120.0}}))
    rc = main(["--out-dir", configs["dir"], "scenario", "sphere-sharpness",
               "--config", str(cfg)])
    assert rc == 0
    verdict = json.load(open(os.path.join(
        configs["dir"], "verdict-sphere-sharpness.json")))
    assert verdict["passed"]


def test_experiment_config_rejects_unknown_fields(tmp_path, configs):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"bogus_field": 1}))
    rc = main(["--out-dir", configs["dir"], "scenario", "sphere-sharpness",
               "--config", str(cfg)])
    assert rc == 3


def test_smooth_compare_subcommand(configs):
    rc = main(["--out-dir", configs["dir"], "--seed", "2", "smooth-compare",
               "--manifold", configs["torus"], "--lambda-max", "460",
               "--window", "20", "35", "--n-lambda", "3"])
    assert rc == 0
    lines = open(os.path.join(configs["dir"],
                              "smooth-compare.csv")).read().splitlines()
    assert lines[2] == "lambda,table,direct,difference"
    for row in lines[3:]:
        assert float(row.split(",")[3]) < 1e-3
