import json

import pytest

from argsym.cli import main, shipped_configs
from argsym.runner import ConfigError, validate

SMALL = {
    "name": "small",
    "kind": "argmin_distribution",
    "master_seed": 3,
    "n_replicates": 3000,
    "drift": {"kind": "quadratic", "params": {"Q": 1.0}},
    "part": {"class": "I", "preset": "gaussian", "params": {"coef": -2.0}},
    "cone": {"preset": "nonnegative"},
    "grid": {"radius": 6.0, "step": 0.02},
    "checks": {"oracle": {"name": "positive_part_normal"}, "ks_max": 0.05},
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_list_presets(capsys):
    assert main(["list-presets"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert "I:gaussian" in out["stochastic_parts"] and "coverage_hulc" in out["shipped_configs"]


def test_shipped_configs_validate():
    names = shipped_configs()
    assert len(names) >= 12
    for name, path in names.items():
        cfg = validate(json.loads(path.read_text()))
        assert cfg.name == name


def test_missing_seed_is_a_usage_error(tmp_path, capsys):
    cfg = {k: v for k, v in SMALL.items() if k != "master_seed"}
    assert main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "master_seed" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_validation_reports_field_paths():
    bad = dict(SMALL, part={"class": "I", "preset": "nope"}, n_replicates=1)
    with pytest.raises(ConfigError) as info:
        validate(bad)
    paths = {e.split(":")[0] for e in info.value.errors}
    assert {"part", "n_replicates"} <= paths
    asym = dict(SMALL, kind="symmetry_test", grid={"axes": [[-1.0, 0.0, 2.0]]})
    with pytest.raises(ConfigError, match="grid"):
        validate(asym)
    assert main(["frobnicate"]) == 2


def test_run_writes_artifacts_and_is_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert main(["run", cfg, "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    assert main(["run", cfg, "--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["master_seed"] == 3 and manifest["passed"] is True
    assert set(manifest["files"]) == {"results.csv", "verdict.json", "config.json"}
    assert "wall_time_s" in manifest and len(manifest["config_sha256"]) == 64
    # rerun into the same directory replaces it
    assert main(["run", cfg, "--out", str(a)]) == 0
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_failed_check_exits_one(tmp_path):
    cfg = dict(SMALL, checks={"oracle": {"name": "normal"}, "ks_max": 0.05})
    assert main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1
    assert json.loads((tmp_path / "o" / "verdict.json").read_text())["passed"] is False


def test_runtime_failure_leaves_no_partial_output(tmp_path):
    cfg = {"name": "tiny", "kind": "finite_n_bridge", "master_seed": 1, "estimator": "mode",
           "sample_sizes": [3], "n_mc": 5, "limit_replicates": 10}
    assert main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert list(tmp_path.iterdir()) == [tmp_path / "cfg.json"]


def test_refuses_to_overwrite_foreign_directory(tmp_path):
    (tmp_path / "o").mkdir()
    (tmp_path / "o" / "keep.txt").write_text("x")
    assert main(["run", _write(tmp_path, SMALL), "--out", str(tmp_path / "o")]) == 2
    assert (tmp_path / "o" / "keep.txt").exists()


def test_report_pass_tamper_empty_and_corrupt(tmp_path, capsys):
    runs = tmp_path / "runs"
    assert main(["run", _write(tmp_path, SMALL), "--out", str(runs / "small")]) == 0
    assert main(["report", str(runs)]) == 0
    assert (runs / "report.csv").read_text().count("\n") == 2
    csv_path = runs / "small" / "results.csv"
    csv_path.write_text(csv_path.read_text() + "0.0,0.0,1,0\n")
    capsys.readouterr()
    assert main(["report", str(runs)]) == 1
    assert "checksum mismatch" in capsys.readouterr().out
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty)]) == 2
    assert "no runs found" in capsys.readouterr().out
    (runs / "small" / "manifest.json").write_text("{not json")
    assert main(["report", str(runs)]) == 2
