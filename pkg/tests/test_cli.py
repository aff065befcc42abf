import json
import math
import os

import numpy as np
import pytest

from foxli.cli import main
from foxli.errors import StrictConfigError, ValidationError
from foxli.optics import confocal_unstable_strip
from foxli.pipeline import read_matrix_csv, run_pipeline, write_matrix_csv
from foxli.scenario import emit_resolved, load_scenario, scenario_from_dict


def reference_config(out_dir, nx=128, count=4):
    spec, grid = confocal_unstable_strip(magnification=2.0, n_eq=5.0, nx=nx)
    return {
        "resonator": {
            "cavity_length": spec.cavity_length,
            "wavenumber": spec.wavenumber,
            "mirror_right": {
                "curvature_radius": spec.mirror_right.curvature_radius,
                "aperture_halfwidth": spec.mirror_right.aperture_halfwidth,
            },
            "mirror_left": {"curvature_radius": spec.mirror_left.curvature_radius},
        },
        "grid": {"nx": grid.nx, "dx": grid.dx, "guard_fraction": grid.guard_fraction},
        "solve": {"count": count, "seed": 7, "tol": 1e-11},
        "fock": {"n_true": 2, "N_max": 3, "gamma_source": "random"},
        "decay": {"N_modes": 41},
        "output": {"directory": str(out_dir)},
    }


@pytest.fixture
def config_path(tmp_path):
    cfg = reference_config(tmp_path / "out")
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg))
    return path


def test_minimal_config_fills_defaults(tmp_path):
    cfg = {
        "resonator": {"cavity_length": 1.0, "wavenumber": 6.0e6,
                      "mirror_right": {"curvature_radius": -2.0, "aperture_halfwidth": 0.003},
                      "mirror_left": {"curvature_radius": 4.0}},
        "grid": {"nx": 64, "dx": 5.0e-4},
    }
    path = tmp_path / "min.json"
    path.write_text(json.dumps(cfg))
    s = load_scenario(path)
    assert s.solve["count"] == 8
    assert s.solve["method"] == "arnoldi"
    assert s.grid.guard_fraction == 0.125
    assert s.external_modes["family"] == "hermite_gaussian"
    assert s.fock["N_max"] == 4
    assert s.output["formats"] == ["json", "csv"]
    assert math.isinf(s.resonator.mirror_left.aperture_halfwidth)


def test_negative_cavity_length_names_key(tmp_path):
    cfg = {"resonator": {"cavity_length": -1.0, "wavenumber": 1.0},
           "grid": {"nx": 8, "dx": 0.1}}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    with pytest.raises(ValidationError, match="cavity_length"):
        load_scenario(path)


def test_unknown_key_is_strict_error():
    with pytest.raises(StrictConfigError, match="grid.dz"):
        scenario_from_dict({
            "resonator": {"cavity_length": 1.0, "wavenumber": 1.0},
            "grid": {"nx": 8, "dx": 0.1, "dz": 0.2},
        })
    with pytest.raises(StrictConfigError, match="resonatorz"):
        scenario_from_dict({
            "resonatorz": {},
            "resonator": {"cavity_length": 1.0, "wavenumber": 1.0},
            "grid": {"nx": 8, "dx": 0.1},
        })


def test_resolved_config_roundtrip(tmp_path, config_path):
    s1 = load_scenario(config_path)
    resolved = tmp_path / "resolved.json"
    emit_resolved(s1, resolved)
    s2 = load_scenario(resolved)
    assert s1 == s2
    resolved2 = tmp_path / "resolved2.json"
    emit_resolved(s2, resolved2)
    assert resolved.read_text() == resolved2.read_text()


def test_modes_stage_artifacts_only(tmp_path, config_path):
    s = load_scenario(config_path)
    report = run_pipeline(s, stages=["modes"])
    assert report.ok
    out = report.output_dir
    basis_dir = os.path.join(out, "basis")
    names = sorted(os.listdir(basis_dir))
    assert "manifest.json" in names
    assert all(n == "manifest.json" or n.endswith(".nhmf") for n in names)
    assert not os.path.exists(os.path.join(out, "overlaps.json"))


def test_stage_dependency_enforced(config_path):
    s = load_scenario(config_path)
    with pytest.raises(ValidationError):
        run_pipeline(s, stages=["decay"])


def test_full_pipeline_and_schema(tmp_path, config_path):
    import jsonschema

    s = load_scenario(config_path)
    report = run_pipeline(s)
    assert report.ok, report.hard_failures
    payload = json.load(open(os.path.join(report.output_dir, "runreport.json")))
    schema_path = os.path.join(os.path.dirname(__import__("foxli").__file__),
                               "schemas", "runreport.schema.json")
    schema = json.load(open(schema_path))
    jsonschema.validate(payload, schema)


def test_determinism_byte_identical(tmp_path, config_path):
    s = load_scenario(config_path)
    r1 = run_pipeline(s, out_dir=str(tmp_path / "r1"))
    r2 = run_pipeline(s, out_dir=str(tmp_path / "r2"))
    for name in ("basis/manifest.json", "overlaps.json", "petermann.csv",
                 "decay_series.csv", "decay_summary.json", "fock_report.json"):
        b1 = open(os.path.join(r1.output_dir, name), "rb").read()
        b2 = open(os.path.join(r2.output_dir, name), "rb").read()
        assert b1 == b2, name


def test_petermann_csv_schema(config_path):
    s = load_scenario(config_path)
    report = run_pipeline(s, stages=["modes", "algebra"])
    path = os.path.join(report.output_dir, "petermann.csv")
    lines = open(path).read().strip().split("\n")
    assert lines[0] == "theta,polarization,re_gamma,im_gamma,gamma_sq,petermann"
    assert len(lines) == 1 + s.solve["count"]
    row = lines[1].split(",")
    assert int(row[0]) == 0 and row[1] == "x"
    gamma_sq = float(row[4])
    assert gamma_sq == pytest.approx(float(row[2]) ** 2 + float(row[3]) ** 2)
    assert float(row[5]) >= 1.0 - 1e-9


def test_matrix_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(41)
    mat = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    path = tmp_path / "mat.csv"
    write_matrix_csv(path, mat)
    back = read_matrix_csv(path)
    assert np.max(np.abs(back - mat)) <= 1e-15


def test_overlap_csv_reimport(config_path):
    s = load_scenario(config_path)
    report = run_pipeline(s, stages=["modes", "algebra"])
    path = os.path.join(report.output_dir, "u_gram.csv")
    back = read_matrix_csv(path)
    payload = json.load(open(os.path.join(report.output_dir, "overlaps.json")))
    ref = np.array(payload["u_gram"])
    ref = ref[..., 0] + 1j * ref[..., 1]
    assert np.max(np.abs(back - ref)) <= 1e-15


def test_cli_run_and_export(tmp_path, config_path):
    out = tmp_path / "cli_out"
    rc = main(["run", "--config", str(config_path), "--out", str(out),
               "--stages", "modes,algebra"])
    assert rc == 0
    assert (out / "petermann.csv").exists()
    rc = main(["export", "--config", str(config_path), "--out", str(out),
               "--format", "csv"])
    assert rc == 0
    assert (out / "eigenvalues.csv").exists()


def test_cli_fock_verify_and_decay(tmp_path, config_path):
    out = tmp_path / "fv"
    assert main(["fock-verify", "--config", str(config_path), "--out", str(out)]) == 0
    assert (out / "fock_report.json").exists()
    out2 = tmp_path / "dk"
    assert main(["decay", "--config", str(config_path), "--out", str(out2)]) == 0
    assert (out2 / "decay_summary.json").exists()
    assert (out2 / "decay_series.csv").exists()
    out3 = tmp_path / "sf"
    assert main(["surface", "--config", str(config_path), "--out", str(out3)]) == 0
    assert (out3 / "surface.json").exists()


def test_cli_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"grid": {"nx": 8, "dx": 0.1}}))
    rc = main(["modes", "--config", str(bad)])
    assert rc == 1


def test_cli_seed_override(tmp_path, config_path):
    out1 = tmp_path / "s1"
    out2 = tmp_path / "s2"
    assert main(["modes", "--config", str(config_path), "--out", str(out1),
                 "--seed", "3"]) == 0
    assert main(["modes", "--config", str(config_path), "--out", str(out2),
                 "--seed", "3"]) == 0
    m1 = open(out1 / "basis" / "manifest.json", "rb").read()
    m2 = open(out2 / "basis" / "manifest.json", "rb").read()
    assert m1 == m2


def test_file_external_family(tmp_path):
    # Persist an external family as NHMF dumps, reference it from the
    # scenario, and run the surface stage against it.
    import foxli
    from foxli.fields import write_field

    cfg = reference_config(tmp_path / "out")
    s0 = load_scenario_from(cfg, tmp_path)
    grid = s0.grid
    waist = grid.extent_x / 10.0
    paths = []
    for n in range(2):
        f = foxli.hermite_gaussian(grid, n, 0, waist,
                                   z_label=s0.resonator.cavity_length)
        p = tmp_path / f"ext{n}.nhmf"
        write_field(f, p)
        paths.append(str(p))
    cfg["external_modes"] = {
        "family": "file",
        "parameters": {"entries": [
            {"u": paths[0], "v": paths[0], "wavenumber": s0.resonator.wavenumber,
             "polarization": "x"},
            {"u": paths[1], "v": paths[1], "wavenumber": s0.resonator.wavenumber,
             "polarization": "x"},
        ]},
    }
    s = load_scenario_from(cfg, tmp_path)
    report = run_pipeline(s, stages=["modes", "surface"])
    assert report.ok, report.hard_failures
    payload = json.load(open(os.path.join(report.output_dir, "surface.json")))
    mat = np.array(payload["vu"])
    assert mat.shape == (4, 2, 2)


def load_scenario_from(cfg, tmp_path):
    path = tmp_path / "gen_scenario.json"
    path.write_text(json.dumps(cfg))
    return load_scenario(path)


def test_file_family_missing_file_is_validation_error(tmp_path):
    cfg = reference_config(tmp_path / "out")
    cfg["external_modes"] = {
        "family": "file",
        "parameters": {"entries": [
            {"u": str(tmp_path / "nope.nhmf"), "v": str(tmp_path / "nope.nhmf"),
             "wavenumber": 1.0}]},
    }
    with pytest.raises(ValidationError, match="does not exist"):
        load_scenario_from(cfg, tmp_path)


def test_formats_gating(tmp_path):
    cfg = reference_config(tmp_path / "out")
    cfg["output"]["formats"] = ["json"]
    s = load_scenario_from(cfg, tmp_path)
    report = run_pipeline(s, stages=["modes", "algebra"])
    assert report.ok
    assert os.path.exists(os.path.join(report.output_dir, "overlaps.json"))
    assert not os.path.exists(os.path.join(report.output_dir, "petermann.csv"))
    assert not os.path.exists(os.path.join(report.output_dir, "u_gram.csv"))


def test_reference_scenario_runs_quickly(tmp_path):
    import time

    s = load_scenario("configs/reference_strip.json")
    s.output["directory"] = str(tmp_path / "ref")
    t0 = time.perf_counter()
    report = run_pipeline(s)
    elapsed = time.perf_counter() - t0
    assert report.ok, report.hard_failures
    assert elapsed < 300.0


def test_cli_hard_failure_exit_code(tmp_path):
    # An explicit dipole far into strong coupling leaves no Markov window:
    # the decay stage fails and the CLI signals it.
    cfg = reference_config(tmp_path / "out")
    cfg["decay"] = {"N_modes": 41, "dipole": [1.0, 0.0]}
    path = tmp_path / "strong.json"
    path.write_text(json.dumps(cfg))
    rc = main(["decay", "--config", str(path)])
    assert rc == 2
