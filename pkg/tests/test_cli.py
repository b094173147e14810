import json

import numpy as np
import pytest

from platecont import cli
from platecont import elasticity as el


def write_cfg(tmp_path, name, cfg):
    path = tmp_path / name
    with open(path, "w") as fh:
        json.dump(cfg, fh)
    return str(path)


def iso_tensor_json():
    return el.isotropic_spec(0.0, 0.5).to_json()


def ortho_tensor_json():
    return el.orthotropic_spec(1.0, 0.25, 0.5, 0.0).to_json()


def run(args):
    return cli.main([str(a) for a in args])


def test_classify_isotropic_exit_zero(tmp_path):
    cfg = write_cfg(
        tmp_path, "c.json",
        {"tensor": iso_tensor_json(), "region": ["rect", -1, 1, -1, 1], "sample_step": 0.5},
    )
    out = tmp_path / "out"
    assert run(["classify", "--config", cfg, "--out", out]) == 0
    doc = json.loads((out / "classify.json").read_text())
    assert doc["report"]["verdict"] == "Zero"
    assert doc["command"] == "classify"


def test_classify_orthotropic_positive(tmp_path):
    cfg = write_cfg(
        tmp_path, "c.json",
        {"tensor": ortho_tensor_json(), "region": ["disk", 0, 0, 1.0], "sample_step": 0.25},
    )
    out = tmp_path / "out"
    assert run(["classify", "--config", cfg, "--out", out]) == 0
    doc = json.loads((out / "classify.json").read_text())
    assert doc["report"]["verdict"] == "Positive"


def test_classify_mixed_exit_two(tmp_path):
    from test_elasticity import _mixed_field_spec

    cfg = write_cfg(
        tmp_path, "c.json",
        {"tensor": _mixed_field_spec().to_json(), "region": ["rect", -1, 1, -1, 1],
         "sample_step": 0.5},
    )
    assert run(["classify", "--config", cfg, "--out", tmp_path / "out"]) == 2


def test_missing_input_exit_one(tmp_path):
    cfg = write_cfg(tmp_path, "c.json", {"solution": str(tmp_path / "nope"), "radii": {}})
    assert run(["threesphere", "--config", cfg, "--out", tmp_path / "out"]) == 1


def test_constants_values(tmp_path):
    cfg = write_cfg(tmp_path, "c.json", {"gamma": 1.0, "M": 1.0})
    out = tmp_path / "out"
    assert run(["constants", "--config", cfg, "--out", out]) == 0
    doc = json.loads((out / "constants.json").read_text())
    c = doc["constants"]
    assert c["gamma1"] == pytest.approx(1.0 / 16.0)
    assert c["gamma2"] == pytest.approx(5.0**-6 * 16.0**-15)


def test_factor_writes_field(tmp_path):
    cfg = write_cfg(tmp_path, "c.json", {"tensor": ortho_tensor_json(), "grid": 9})
    out = tmp_path / "out"
    assert run(["factor", "--config", cfg, "--out", out]) == 0
    assert (out / "factor_field.json").exists()
    assert (out / "factor_field.csv").exists()


def test_carleman_csv_rows(tmp_path):
    cfg = write_cfg(
        tmp_path, "c.json",
        {"order": 2, "beta": 0.5, "taus": [5, 10, 20], "grid": 129,
         "test_function": {"r_in": 0.2, "r_out": 0.5, "m": 0, "smoothness": 5}},
    )
    out = tmp_path / "out"
    assert run(["carleman", "--config", cfg, "--out", out]) == 0
    lines = (out / "carleman.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 3


def test_solve_then_threesphere(tmp_path):
    cfg_solve = write_cfg(
        tmp_path, "s.json",
        {"tensor": iso_tensor_json(), "domain": {"kind": "disk", "R": 1.0},
         "bc": {"kind": "polynomial", "coeffs": [[0, 0, -1], [0, 0, 0], [1, 0, 0]]},
         "grid": 65},
    )
    out = tmp_path / "out"
    assert run(["solve", "--config", cfg_solve, "--out", out]) == 0
    assert (out / "solution.bin").exists()
    assert (out / "solution.csv").exists()

    cfg_ts = write_cfg(
        tmp_path, "t.json",
        {"solution": str(out / "solution"), "version": "v3",
         "radii": {"r": 0.1, "rho": 0.2, "rho1": 0.45, "R": 1.0},
         "constants": {"beta": 1.0, "gamma2": 1.0, "s_pract": 0.5}},
    )
    assert run(["threesphere", "--config", cfg_ts, "--out", out]) == 0
    doc = json.loads((out / "threesphere.json").read_text())
    cert = doc["certificate"]
    assert cert["theta"] == pytest.approx(cert["theta1"] / 4.0)


def test_threesphere_inadmissible_exit_two(tmp_path):
    cfg_solve = write_cfg(
        tmp_path, "s.json",
        {"tensor": iso_tensor_json(), "domain": {"kind": "disk", "R": 1.0},
         "bc": {"kind": "polynomial", "coeffs": [[0, 0, -1], [0, 0, 0], [1, 0, 0]]},
         "grid": 65},
    )
    out = tmp_path / "out"
    run(["solve", "--config", cfg_solve, "--out", out])
    cfg_ts = write_cfg(
        tmp_path, "t.json",
        {"solution": str(out / "solution"), "version": "v3",
         "radii": {"r": 0.1, "rho": 0.4, "rho1": 0.45, "R": 1.0}},
    )
    assert run(["threesphere", "--config", cfg_ts, "--out", out]) == 2
    doc = json.loads((out / "threesphere.json").read_text())
    assert doc["certificate"]["admissible"] is False


def test_propagate_smoke(tmp_path):
    cfg_solve = write_cfg(
        tmp_path, "s.json",
        {"tensor": iso_tensor_json(), "domain": {"kind": "rect", "a": 1.0, "b": 1.0},
         "bc": {"kind": "bump_pair", "amplitude": 1.0, "center_angle": 0.0, "width": 0.4},
         "grid": 129},
    )
    out = tmp_path / "out"
    assert run(["solve", "--config", cfg_solve, "--out", out]) == 0
    cfg_prop = write_cfg(
        tmp_path, "p.json",
        {"solution": str(out / "solution"),
         "omega": [-0.5, 0.5, -0.5, 0.5], "G": [-0.25, 0.25, -0.04, 0.04],
         "start": [-0.2, 0.0, 0.08], "r": 0.04,
         "constants": {"beta": 0.5}},
    )
    assert run(["propagate", "--config", cfg_prop, "--out", out]) == 0
    doc = json.loads((out / "propagate.json").read_text())
    assert doc["report"]["N"] >= 8
    assert (out / "chain.csv").exists()


def test_rerun_byte_identical_modulo_timestamp(tmp_path):
    cfg = write_cfg(tmp_path, "c.json", {"gamma": 0.5, "M": 2.0})
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    run(["constants", "--config", cfg, "--out", out1, "--seed", "7"])
    run(["constants", "--config", cfg, "--out", out2, "--seed", "7"])
    d1 = json.loads((out1 / "constants.json").read_text())
    d2 = json.loads((out2 / "constants.json").read_text())
    d1.pop("timestamp")
    d2.pop("timestamp")
    assert d1 == d2


def test_config_hash_changes_with_config(tmp_path):
    cfg1 = write_cfg(tmp_path, "a.json", {"gamma": 0.5, "M": 2.0})
    cfg2 = write_cfg(tmp_path, "b.json", {"gamma": 0.6, "M": 2.0})
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    run(["constants", "--config", cfg1, "--out", out1])
    run(["constants", "--config", cfg2, "--out", out2])
    h1 = json.loads((out1 / "constants.json").read_text())["config_hash"]
    h2 = json.loads((out2 / "constants.json").read_text())["config_hash"]
    assert h1 != h2
