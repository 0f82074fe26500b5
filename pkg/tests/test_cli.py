import json
import subprocess
import sys

import pytest

from monotone_ot import __version__
from monotone_ot.cli import main
from monotone_ot.cli.config import ConfigError, ExperimentConfig, canonical_json
from monotone_ot.cli.report import OUTPUT_DIR_ENV


def _load(path):
    with open(path) as f:
        return json.load(f)


def test_solve_example(tmp_path, capsys):
    out = tmp_path / "r.json"
    argv = ["solve", "--source", "gaussian2d", "--target", "gaussian2d", "--n", "64", "--seed", "1",
            "--tol", "1e-9", "--out", str(out)]
    assert main(argv) == 0
    rep = _load(out)
    assert rep["schema"] == 1 and rep["version"] == __version__
    assert rep["passed"] and rep["result"]["residual"] <= 1e-9
    assert rep["config"]["params"]["seed"] == 1
    assert rep["config_hash"] == ExperimentConfig.from_json(rep["config"]).hash
    for suffix in (".cells.csv", ".polygons.csv", ".meta.json"):
        assert (tmp_path / f"r{suffix}").exists()
    meta = _load(tmp_path / "r.meta.json")
    assert meta["report"] == "r.json" and meta["duration_s"] > 0
    assert "started" not in rep and "PASS" in capsys.readouterr().out

    # append-only: the rerun lands next to the first report, byte for byte equal
    assert main(argv) == 0
    assert (tmp_path / "r-1.json").read_bytes() == out.read_bytes()
    assert (tmp_path / "r-1.cells.csv").read_bytes() == (tmp_path / "r.cells.csv").read_bytes()
    assert main(argv + ["--force"]) == 0
    assert not (tmp_path / "r-2.json").exists()


def test_counterexample_example(tmp_path):
    out = tmp_path / "ce.json"
    assert main(["counterexample", "--dim", "3", "--alpha", "0.166667", "--out", str(out)]) == 0
    res = _load(out)["result"]
    assert res["certificate"]["positive_det"] and len(res["degeneracy"]) == 6
    png = (tmp_path / "ce.degeneracy.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_wedge_inadmissible_exit_one(tmp_path, capsys):
    out = tmp_path / "w.json"
    assert main(["wedge", "--dim", "3", "--lambda", "5", "--out", str(out)]) == 1
    rep = _load(out)
    assert rep["result"]["verdict"] == "BORDERLINE-OR-WORSE"
    assert any(f.startswith("wedge.verdict") for f in rep["failures"])
    assert "FAIL wedge.verdict" in capsys.readouterr().err


def test_default_output_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    assert main(["legendre", "--points", "200"]) == 0
    cfg = ExperimentConfig("legendre", {"points": 200})
    assert (tmp_path / f"legendre-{cfg.hash[:12]}.json").exists()


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "legendre", "params": {"points": 50, "supports": 10}}))
    out = tmp_path / "l.json"
    assert main(["legendre", "--points", "300", "--config", str(cfg), "--out", str(out)]) == 0
    params = _load(out)["config"]["params"]
    assert params["points"] == 50 and params["supports"] == 10


@pytest.mark.parametrize("text, needle", [
    ('{"command": "legendre", "params": {"points": 5,}}', "line 1 column"),
    ('{"command": "legendre", "params": {"bogus": 1}}', "params.bogus"),
    ('{"command": "solve", "params": {}}', "command"),
    ('[1, 2]', "JSON object"),
])
def test_bad_config_exit_two(tmp_path, capsys, text, needle):
    cfg = tmp_path / "bad.json"
    cfg.write_text(text)
    assert main(["legendre", "--config", str(cfg), "--out", str(tmp_path / "x.json")]) == 2
    assert needle in capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


def test_convergence_error_exit_two(tmp_path, capsys):
    assert main(["solve", "--n", "64", "--max-iter", "1", "--out", str(tmp_path / "s.json")]) == 2
    assert "convergence error" in capsys.readouterr().err


def test_bad_preset_exit_two(tmp_path):
    assert main(["solve", "--source", "nowhere", "--out", str(tmp_path / "s.json")]) == 2


def test_verify_small(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "--n", "16", "--samples", "100000", "--out", str(out)]) == 0
    res = _load(out)["result"]
    assert res["alexandrov"]["passed"]


def test_cone_ball(tmp_path):
    out = tmp_path / "c.json"
    assert main(["cone", "--domain", "ball", "--samples", "400000", "--out", str(out)]) == 0
    assert _load(out)["result"]["verdict"] == "LOWER-BOUND-HOLDS"


def test_probe_expectation(tmp_path):
    base = ["probe", "--case", "gaussian2d", "--levels", "64,256"]
    assert main(base + ["--expect", "REGULAR", "--out", str(tmp_path / "p.json")]) == 0
    assert main(base + ["--expect", "DEGENERATE", "--out", str(tmp_path / "q.json")]) == 1
    assert (tmp_path / "p.levels.csv").exists() and (tmp_path / "p.levels.png").exists()


def test_config_round_trip_and_hash():
    a = ExperimentConfig("wedge", {"lambda": 3.0, "seed": 4})
    b = ExperimentConfig.from_json(json.loads(canonical_json(a.to_json())))
    assert a.to_json() == b.to_json() and a.hash == b.hash
    assert ExperimentConfig("wedge", {"lambda": 3.5}).hash != a.hash
    # output locations do not enter the hash
    assert ExperimentConfig("wedge", {"lambda": 3.0, "seed": 4}, out="elsewhere.json", force=True).hash == a.hash


@pytest.mark.parametrize("d", [
    {"command": "nope"},
    {"params": {}},
    {"command": "cone", "params": {"lambda": 2}},
    {"command": "cone", "extra": 1},
])
def test_config_validation(d):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(d)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "monotone_ot.cli", "legendre", "--points", "100", "--out",
                           str(tmp_path / "m.json")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("legendre: PASS")
