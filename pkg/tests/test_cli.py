import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from anthrokit.curation import DEFAULT_BIN_CAP, DEFAULT_BIN_HEIGHT_M, DEFAULT_TAU
from anthrokit.cli import cli
from anthrokit.fitting import DEFAULT_MAX_ITERS, DEFAULT_TOL, DEFAULT_WEIGHTS
from anthrokit.fixture import fixture_metadata, capsule_person, unit_cube
from anthrokit.mappers import DEFAULT_RIDGE
from anthrokit.measurements import MEAN_BODY_DENSITY
from anthrokit.meshio import save_mesh
from anthrokit.metrics import DEFAULT_POINTS
from anthrokit.tables import read_measurements_csv, write_betas_csv


def run_cli(*args, check=True, deterministic=True):
    cmd = [sys.executable, "-m", "anthrokit"]
    if deterministic:
        cmd.append("--deterministic")
    cmd += [str(a) for a in args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"exit {proc.returncode}: {proc.stderr}\n{proc.stdout}")
    return proc


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fx")
    run_cli("fixture", "--out", out, "--subjects", 12, "--seed", 7)
    return out


def test_unknown_flag_exits_2():
    proc = run_cli("measure", "--bogus", check=False)
    assert proc.returncode == 2
    assert "Usage" in proc.stderr or "Usage" in proc.stdout


def test_unknown_subcommand_exits_2():
    proc = run_cli("frobnicate", check=False)
    assert proc.returncode == 2


def test_domain_error_is_json_on_stderr(fixture_dir, tmp_path):
    bad = tmp_path / "bad_betas.csv"
    write_betas_csv(bad, ["x"], np.zeros((1, 7)))
    proc = run_cli("measure", "--model", fixture_dir / "model", "--betas", bad,
                   "--out", tmp_path / "out.csv", check=False)
    assert proc.returncode == 1
    err = json.loads(proc.stderr.strip())
    assert err["code"] == "dimension_mismatch"
    assert "message" in err and "context" in err


def test_measure_fixture_magic_name(tmp_path):
    zeros = tmp_path / "zeros.csv"
    write_betas_csv(zeros, ["z"], np.zeros((1, 4)))
    out = tmp_path / "m.csv"
    run_cli("measure", "--model", "fixture", "--betas", zeros, "--out", out)
    ids, rows = read_measurements_csv(out)
    meta = fixture_metadata(capsule_person())["measurements_at_zero"]
    assert ids == ["z"]
    assert rows[0, 0] == pytest.approx(meta["height_m"], abs=1e-9)
    assert rows[0, 1] == pytest.approx(meta["weight_kg"], abs=1e-9)
    assert rows[0, 2] == pytest.approx(meta["chest_m"], abs=1e-6)


def test_measure_idempotent(fixture_dir, tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    run_cli("measure", "--model", fixture_dir / "model",
            "--betas", fixture_dir / "betas.csv", "--out", out1)
    run_cli("measure", "--model", fixture_dir / "model",
            "--betas", fixture_dir / "betas.csv", "--out", out2)
    assert out1.read_bytes() == out2.read_bytes()


def test_measure_jobs_order_stable(fixture_dir, tmp_path):
    out1 = tmp_path / "serial.csv"
    out4 = tmp_path / "parallel.csv"
    run_cli("measure", "--model", fixture_dir / "model",
            "--betas", fixture_dir / "betas.csv", "--out", out1, "--jobs", 1)
    run_cli("measure", "--model", fixture_dir / "model",
            "--betas", fixture_dir / "betas.csv", "--out", out4, "--jobs", 4)
    assert out1.read_bytes() == out4.read_bytes()


def test_measure_gradients_output(fixture_dir, tmp_path):
    grads = tmp_path / "grads.csv"
    run_cli("measure", "--model", fixture_dir / "model",
            "--betas", fixture_dir / "betas.csv", "--out", tmp_path / "m.csv",
            "--gradients", grads)
    lines = grads.read_text().splitlines()
    assert lines[0].startswith("subject_id,field,non_smooth,d_beta_0")
    assert len(lines) == 1 + 12 * 5


def test_measure_mesh_mode(tmp_path):
    mesh, lm = unit_cube()
    save_mesh(mesh, tmp_path / "cube.obj")
    (tmp_path / "landmarks.json").write_text(json.dumps(lm.as_dict()))
    out = tmp_path / "cube.csv"
    run_cli("measure", "--mesh", tmp_path / "cube.obj",
            "--landmarks", tmp_path / "landmarks.json", "--out", out)
    _, rows = read_measurements_csv(out)
    assert rows[0] == pytest.approx([1.0, 985.0, 4.0, 4.0, 4.0], abs=1e-6)


def test_eval_identical_lists_all_zero(fixture_dir, tmp_path):
    out_json = tmp_path / "eval.json"
    run_cli("eval", "--model", fixture_dir / "model", "--pred", fixture_dir / "betas.csv",
            "--gt", fixture_dir / "betas.csv", "--out-json", out_json)
    rep = json.loads(out_json.read_text())
    assert rep["metrics"]["p2p20k_mm"] == 0.0
    assert rep["metrics"]["v2v_mm"] == 0.0
    assert all(v == 0.0 for v in rep["metrics"]["measurement_mae"].values())


def test_eval_regressor_cache_created(fixture_dir, tmp_path):
    out_json = tmp_path / "eval.json"
    run_cli("eval", "--model", fixture_dir / "model", "--pred", fixture_dir / "betas.csv",
            "--gt", fixture_dir / "betas.csv", "--out-json", out_json, "--points", 500)
    cache = fixture_dir / "model.regcache"
    assert cache.is_dir() and list(cache.glob("reg_*p500*.npz"))
    # second run hits the cache and reproduces the same result
    out2 = tmp_path / "eval2.json"
    run_cli("eval", "--model", fixture_dir / "model", "--pred", fixture_dir / "betas.csv",
            "--gt", fixture_dir / "betas.csv", "--out-json", out2, "--points", 500)
    assert out_json.read_bytes() == out2.read_bytes()


def test_eval_mesh_lists(tmp_path):
    mesh, _ = unit_cube()
    save_mesh(mesh, tmp_path / "a.obj")
    moved = mesh.with_vertices(mesh.vertices + 0.5)
    save_mesh(moved, tmp_path / "b.obj")
    (tmp_path / "pred.txt").write_text(f"{tmp_path}/a.obj\n")
    (tmp_path / "gt.txt").write_text(f"{tmp_path}/b.obj\n")
    out_json = tmp_path / "eval.json"
    run_cli("eval", "--pred-meshes", tmp_path / "pred.txt", "--gt-meshes",
            tmp_path / "gt.txt", "--out-json", out_json, "--points", 1000)
    rep = json.loads(out_json.read_text())
    assert rep["metrics"]["p2p20k_mm"] < 1e-6  # translation corrected


def test_dedup_cli(tmp_path):
    from anthrokit.curation import make_synthetic_sites, save_embeddings

    a, b, expected = make_synthetic_sites(5, 5, seed=8)
    save_embeddings(a, tmp_path / "a")
    save_embeddings(b, tmp_path / "b")
    out = tmp_path / "matches.csv"
    proc = run_cli("dedup", "--site-a", tmp_path / "a", "--site-b", tmp_path / "b",
                   "--out", out)
    summary = json.loads(proc.stdout)
    assert summary["matches"] == 5
    assert len(out.read_text().splitlines()) == 6


def test_curate_cli(tmp_path):
    rows = ["subject_id,gender,height_m,weight_kg,image_count,bmi"]
    rows += [f"s{i},female,1.70,70,{i}," for i in range(10)]
    (tmp_path / "subjects.csv").write_text("\n".join(rows) + "\n")
    out = tmp_path / "sel.csv"
    run_cli("curate", "--subjects", tmp_path / "subjects.csv", "--out", out, "--seed", 3)
    assert len(out.read_text().splitlines()) == 4  # header + cap 3 (single bin)


def test_report_figures_toggle(fixture_dir, tmp_path):
    out_json = tmp_path / "eval.json"
    run_cli("eval", "--model", fixture_dir / "model", "--pred", fixture_dir / "betas.csv",
            "--gt", fixture_dir / "betas.csv", "--out-json", out_json, "--points", 500)
    run_cli("report", "--eval", out_json, "--out", tmp_path / "rep")
    assert (tmp_path / "rep" / "report.md").is_file()
    assert list((tmp_path / "rep" / "figures").glob("*.png"))
    run_cli("report", "--eval", out_json, "--out", tmp_path / "rep2", "--no-figures")
    assert not (tmp_path / "rep2" / "figures").exists()


def test_config_file_and_flag_precedence(tmp_path):
    config = {"fixture": {"subjects": 5, "seed": 9}}
    (tmp_path / "run.json").write_text(json.dumps(config))
    run_cli("--config", tmp_path / "run.json", "fixture", "--out", tmp_path / "f1")
    assert len((tmp_path / "f1" / "betas.csv").read_text().splitlines()) == 6
    # explicit flag beats the config value
    run_cli("--config", tmp_path / "run.json", "fixture", "--out", tmp_path / "f2",
            "--subjects", 3)
    assert len((tmp_path / "f2" / "betas.csv").read_text().splitlines()) == 4


def test_unknown_config_key_rejected(tmp_path):
    (tmp_path / "run.json").write_text(json.dumps({"fixture": {"nope": 1}}))
    proc = run_cli("--config", tmp_path / "run.json", "fixture",
                   "--out", tmp_path / "x", check=False)
    assert proc.returncode == 1
    assert json.loads(proc.stderr)["code"] == "format_error"


def test_cli_defaults_equal_module_defaults():
    by_name = {c.name: c for c in cli.commands.values()}

    def default(cmd, name):
        for param in by_name[cmd].params:
            if param.name == name:
                return param.default
        raise KeyError(name)

    assert default("fit-mapper", "ridge") == DEFAULT_RIDGE
    assert default("measure", "density") == MEAN_BODY_DENSITY
    assert default("fit-shape", "max_iters") == DEFAULT_MAX_ITERS
    assert default("fit-shape", "tol") == DEFAULT_TOL
    assert default("fit-shape", "w_regularizer") == DEFAULT_WEIGHTS["regularizer"]
    assert default("eval", "num_points") == DEFAULT_POINTS
    assert default("dedup", "tau") == DEFAULT_TAU
    assert default("curate", "cap") == DEFAULT_BIN_CAP
    assert default("curate", "bin_height") == DEFAULT_BIN_HEIGHT_M


def test_timestamp_suppression(fixture_dir, tmp_path):
    zeros = tmp_path / "z.csv"
    write_betas_csv(zeros, ["z"], np.zeros((1, 4)))
    det = run_cli("measure", "--model", "fixture", "--betas", zeros,
                  "--out", tmp_path / "o1.csv")
    assert "generated_at" not in json.loads(det.stdout)
    live = run_cli("measure", "--model", "fixture", "--betas", zeros,
                   "--out", tmp_path / "o2.csv", deterministic=False)
    assert "generated_at" in json.loads(live.stdout)
