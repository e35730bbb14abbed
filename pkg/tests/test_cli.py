import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest
import tomli

from hypflow import cli

ROOT = Path(__file__).resolve().parents[1]


def _toml(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _run(tmp_path, experiment, text, *extra):
    out = tmp_path / "out"
    code = cli.main([experiment, "--config", _toml(tmp_path, text), "--out", str(out), *extra])
    return code, out


def _read_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    return lines[0], list(csv.reader(lines[1:]))


def test_temporal_run_writes_documented_artifacts(tmp_path):
    code, out = _run(tmp_path, "temporal", "seed = 3\n[params]\nvmax = 0.3\nn = 40\n")
    assert code == 0
    meta, rows = _read_csv(out / "temporal.csv")
    assert rows[0] == ["v", "w", "delta_closed", "delta_geometric", "first_order", "residual"]
    assert len(rows) == 41
    s = json.loads((out / "summary.json").read_text())
    assert s["format_version"] == 1 and s["seed"] == 3 and s["status"] == "pass"
    assert f"config_hash={s['config_hash']}" in meta and "seed=3" in meta
    assert set(s["invariants"]) == {"temporal-closed-form", "katok-burns-slope", "katok-burns-bound"}
    assert "runtime_s" in json.loads((out / "timing.json").read_text())
    assert "runtime" not in json.dumps(s)
    # round-trip decimal formatting
    for r in rows[1:]:
        assert all(repr(float(x)) == x for x in r)
    assert not list(out.glob("*.tmp*"))


def test_same_config_and_seed_is_byte_identical(tmp_path):
    text = "seed = 11\n[params]\nr1 = [0.05]\nkMax = 5\n"
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = _toml(tmp_path, text)
    assert cli.main(["mandens", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["mandens", "--config", cfg, "--out", str(b)]) == 0
    for name in ("mandens.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    # a different seed changes the hash and the data
    assert cli.main(["mandens", "--config", cfg, "--seed", "12", "--out", str(tmp_path / "c")]) == 0
    assert (a / "summary.json").read_bytes() != (tmp_path / "c" / "summary.json").read_bytes()


@pytest.mark.parametrize("experiment,text", [
    ("dolgopyat", "[params]\nrho = 0.5\n"),
    ("temporal", "[params]\nvmax = 0.5\n"),
    ("temporal", "[params]\nspeed = 1\n"),
    ("temporal", "colour = 1\n"),
    ("temporal", "[params]\nn = 'many'\n"),
    ("temporal", "seed = -1\n"),
    ("temporal", "experiment = 'mandens'\n"),
    ("mandens", "[params]\nr1 = [0.5]\n"),
    ("resolvent-scan", "[params]\nchecks = ['everything']\n"),
    ("temporal", "[params\n"),
])
def test_config_errors_exit_2_without_csv(tmp_path, experiment, text):
    code, out = _run(tmp_path, experiment, text)
    assert code == 2
    assert not out.exists()


def test_missing_config_and_thread_cap(tmp_path, monkeypatch):
    assert cli.main(["temporal", "--config", str(tmp_path / "none.toml")]) == 2
    monkeypatch.setenv("HYPFLOW_THREADS", "zero")
    assert cli.main(["temporal", "--out", str(tmp_path / "o")]) == 2
    for name in cli._THREAD_VARS:
        monkeypatch.setenv(name, "4")
    monkeypatch.setenv("HYPFLOW_THREADS", "1")
    code, _ = _run(tmp_path, "contact-check", "[params]\nn = 10\n")
    assert code == 0 and os.environ["OMP_NUM_THREADS"] == "1"


def test_invariant_failure_exits_1(tmp_path):
    code, out = _run(tmp_path, "contact-check", "[params]\nn = 10\ntol = -1.0\n")
    assert code == 1
    s = json.loads((out / "summary.json").read_text())
    assert s["status"] == "fail" and not s["invariants"]["contact-invariance"]["pass"]


def test_internal_error_writes_partial_artifacts(tmp_path, monkeypatch):
    def boom(p, seed, res):
        res.rows.append((1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0))
        raise RuntimeError("interrupted")

    monkeypatch.setitem(cli.EXPERIMENTS, "contact-check", (boom, cli.EXPERIMENTS["contact-check"][1]))
    code, out = _run(tmp_path, "contact-check", "[params]\nn = 10\n")
    assert code == 3
    s = json.loads((out / "summary.json").read_text())
    assert s["status"] == "partial" and "interrupted" in s["error"]
    assert len(_read_csv(out / "contact-check.csv")[1]) == 2


def _summary(tmp_path, name, invariants, status="pass"):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps({"format_version": 1, "experiment": name, "seed": 0, "config_hash": "x",
                             "status": status, "invariants": invariants}))
    return str(p)


def test_report_pass_mixed_and_bad_inputs(tmp_path):
    good = _summary(tmp_path, "temporal", {"temporal-closed-form": {"pass": True, "measured": 1e-12}})
    out = tmp_path / "rep"
    assert cli.main(["report", "--summary", good, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "pass" and rep["table"]["temporal-closed-form"]["status"] == "pass"
    assert not rep["complete"] and "mixing-rate" in rep["missing"]
    bad = _summary(tmp_path, "mandens", {"piece-counting": {"pass": False, "measured": 2.0}}, "fail")
    assert cli.main(["report", "--summary", good, "--summary", bad, "--out", str(out)]) == 1
    rep = json.loads((out / "report.json").read_text())
    assert rep["table"]["piece-counting"] == {**rep["table"]["piece-counting"], "status": "fail", "measured": 2.0}
    assert cli.main(["report", "--out", str(tmp_path / "e")]) == 2
    junk = tmp_path / "junk.json"
    junk.write_text("{not json")
    assert cli.main(["report", "--summary", good, "--summary", str(junk), "--out", str(out)]) == 2


def test_shipped_configs_are_valid_and_cover_every_property():
    produced = set()
    for path in sorted((ROOT / "configs").glob("*.toml")):
        with open(path, "rb") as fh:
            table = tomli.load(fh)
        cfg = cli.build_config(table["experiment"], table)
        if cfg.experiment == "report":
            continue
        produced |= set(cli.expected_keys(cfg.experiment, cfg.params))
    assert produced == set(cli.PROPERTIES)
    # every experiment is shipped with a config
    assert {p.stem for p in (ROOT / "configs").glob("*.toml")} == set(cli.PARAMS)


def test_unregistered_property_is_rejected():
    with pytest.raises(KeyError):
        cli.Result(("a",)).check("made-up", True, 0.0, 0.0)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "hypflow.cli", "temporal", "--config", _toml(tmp_path, "[params]\nvmax = 2.0\n")],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "vmax" in r.stderr
