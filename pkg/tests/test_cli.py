import csv
import json
import subprocess
import sys

import pytest

from sfcrel.cli import ConfigError, ExperimentConfig, main

from helpers import topology_doc

SMALL = {"topology": "ring10", "generator": {"demand_count": [1, 2], "max_chains": 3}, "f_max": 1, "seed": 1, "time_limit": 60}
STEMS = ("reliability", "servers", "links", "counts", "failure")


def write_config(tmp_path, **over):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**SMALL, **over}))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sweep")
    assert main(["sweep", "--config", write_config(tmp), "--out", str(tmp / "out")]) == 0
    return tmp / "out"


def test_sweep_writes_all_cells(sweep_dir):
    for stem in STEMS:
        assert (sweep_dir / f"{stem}.csv").exists()
    counts = read_csv(sweep_dir / "counts.csv")
    assert counts[0] == ["alpha", "mode", "replicas", "migrations"]
    assert len(counts) == 1 + 12
    assert {tuple(r[:2]) for r in counts[1:]} == {(a, m) for a in ("0.1", "0.5", "0.9", "1") for m in ("no-protection", "rep", "rep-migr")}
    for r in counts[1:]:
        if r[1] == "no-protection":
            assert r[2:] == ["0", "0"]
        if r[1] == "rep":
            assert r[3] == "0"
    rel = read_csv(sweep_dir / "reliability.csv")
    assert len(rel) == 1 + 12 * 3
    keys = [(float(r[0]), r[1], r[2]) for r in rel[1:]]
    assert keys == sorted(keys)
    manifest = json.loads((sweep_dir / "manifest.json").read_text())
    assert len(manifest["cells"]) == 12 and manifest["seed"] == 1
    assert all(c["status"] == "Optimal" for c in manifest["cells"])


def test_rerun_is_byte_identical(sweep_dir, tmp_path):
    assert main(["sweep", "--config", write_config(tmp_path), "--out", str(tmp_path / "again")]) == 0
    for stem in STEMS:
        assert (tmp_path / "again" / f"{stem}.csv").read_bytes() == (sweep_dir / f"{stem}.csv").read_bytes()


def test_config_hash_tracks_content():
    a = ExperimentConfig.from_dict(SMALL)
    assert a.digest() == ExperimentConfig.from_dict(dict(SMALL)).digest()
    assert a.digest() != ExperimentConfig.from_dict({**SMALL, "seed": 2}).digest()


def test_flags_override_config(tmp_path):
    out = tmp_path / "o"
    rc = main(["sweep", "--config", write_config(tmp_path), "--alpha", "0.5", "--mode", "rep", "--seed", "4", "--out", str(out)])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 4
    assert [(c["alpha"], c["mode"]) for c in manifest["cells"]] == [(0.5, "rep")]


@pytest.mark.parametrize(
    "data",
    [{**SMALL, "alphas": [1.5]}, {**SMALL, "modes": ["active-standby"]}, {**SMALL, "bogus": 1}, {**SMALL, "f_max": 0, "ntn": True}],
)
def test_bad_config_exit_code(tmp_path, data, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_missing_files_exit_code(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "none.json")]) == 2
    assert main(["sweep", "--topology", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2


def test_infeasible_exit_code(tmp_path):
    topo = tmp_path / "thin.json"
    topo.write_text(json.dumps(topology_doc("abc", [("a", "b"), ("b", "c"), ("a", "c")], 100.0, 1.0)))
    rc = main(["sweep", "--topology", str(topo), "--f-max", "1", "--alpha", "0.5", "--mode", "rep", "--out", str(tmp_path / "o")])
    assert rc == 3


def test_timeout_exit_code(tmp_path):
    rc = main(["sweep", "--topology", "janos-us", "--f-max", "1", "--time-limit", "0.01",
               "--alpha", "0.5", "--mode", "rep", "--out", str(tmp_path / "o")])
    assert rc == 4


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("solve")
    out = tmp / "s"
    assert main(["solve", "--config", write_config(tmp), "--alpha", "0.9", "--mode", "rep", "--out", str(out)]) == 0
    return out


def test_evaluate_matches_solve_reports(solved, tmp_path):
    out = tmp_path / "ev"
    assert main(["evaluate", "--scenario", str(solved / "scenario.json"), "--solution", str(solved / "solution.json"), "--out", str(out)]) == 0
    for stem in ("reliability", "servers", "links", "counts"):
        assert (out / f"{stem}.csv").read_bytes() == (solved / f"{stem}.csv").read_bytes()


def test_simulate_failure(solved, capsys):
    assert main(["simulate-failure", "--scenario", str(solved / "scenario.json"), "--solution", str(solved / "solution.json"), "--server", "pm-n0"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["server_id"] == "pm-n0" and isinstance(rep["reservation_ok"], bool)
    assert main(["simulate-failure", "--scenario", str(solved / "scenario.json"), "--solution", str(solved / "solution.json"), "--server", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["server_id"] == "pm-n0"
    assert main(["simulate-failure", "--scenario", str(solved / "scenario.json"), "--solution", str(solved / "solution.json"), "--server", "pm-zz"]) == 2


def test_export_lp(solved, tmp_path):
    lp, audit = tmp_path / "m.lp", tmp_path / "audit.json"
    args = ["export-lp", "--scenario", str(solved / "scenario.json"), "--mode", "rep", "--initial", str(solved / "solution.json")]
    assert main(args + ["-o", str(lp), "--audit", str(audit)]) == 0
    text = lp.read_text()
    assert text.startswith("Minimize") or "Minimize" in text.splitlines()[0:3]
    assert "Binaries" in text and text.rstrip().endswith("End")
    rows = json.loads(audit.read_text())
    assert rows["pinning"] > 0 and rows["reliability_cost"] > 0
    assert main(args[:-2]) == 2  # rep without an initial placement


def test_show_penalty(capsys):
    assert main(["show-penalty"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1] == "piece,slope,intercept" and len(lines) == 2 + 5
    assert main(["show-penalty", "--breakpoints", "0,1"]) == 0
    assert capsys.readouterr().out.splitlines()[2] == "0,1.0,0.0"


def test_generate_janos_counts(tmp_path):
    out = tmp_path / "sc.json"
    assert main(["generate", "--seed", "3", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["chains"]) == 650
    assert sum(len(c["vnfs"]) for c in doc["chains"]) == 1950


def test_console_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sfcrel.cli", "show-penalty", "--orientation", "decreasing"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("orientation=decreasing")
