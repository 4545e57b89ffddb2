from __future__ import annotations

import csv
import io
import json

import pytest

from confound.bench.runners import ExperimentSpec, build_three_node_suite
from confound.bench.fixtures import three_node_scm
from confound.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from confound.contexts import load_suite, save_suite
from confound.measures import I_TO_J, measure_pair
from confound.scm import generate_context_suite, single_target_plan

SMALL = {"n_soft_contexts": 150, "samples": 1500}


@pytest.fixture(scope="module")
def g3_suite(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.json"
    spec.write_text(json.dumps(SMALL))
    out = root / "g3"
    assert main(["simulate", "--graph", "G3", "--spec", str(spec), "--seed", "3", "--out", str(out)]) == EXIT_OK
    return out


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_measure_all_settings_positive(g3_suite, capsys):
    code, out, _ = run(["measure", "--suite", str(g3_suite), "--pair", "0,1", "--setting", "all"], capsys)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert [p["setting"] for p in doc["pairs"]] == [1, 2, 3]
    assert all(p["value"] > 0.05 and p["detected"] for p in doc["pairs"])


def test_simulate_then_measure_matches_in_process(g3_suite, capsys):
    code, out, _ = run(
        ["measure", "--suite", str(g3_suite), "--pair", "Xi,Xj", "--direction", "i_to_j", "--seed", "0"], capsys
    )
    assert code == EXIT_OK
    suite = build_three_node_suite("G3", ExperimentSpec(**SMALL), 3)
    assert load_suite(g3_suite) == suite
    expected = measure_pair(suite, "Xi", "Xj", direction=I_TO_J)
    assert [p["value"] for p in json.loads(out)["pairs"]] == [e["value"] for e in expected.entries]


def test_measure_csv_output(g3_suite, capsys, tmp_path):
    target = tmp_path / "m.csv"
    code, _, _ = run(
        ["measure", "--suite", str(g3_suite), "--pair", "0,1", "--setting", "2", "--format", "csv", "--out", str(target)],
        capsys,
    )
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(target.read_text())))
    assert len(rows) == 1 and rows[0]["measure"] == "cnf2" and rows[0]["variables"] == "Xi Xj"


def test_measure_set(g3_suite, capsys):
    code, out, _ = run(["measure", "--suite", str(g3_suite), "--set", "Xi,Xj", "--setting", "2"], capsys)
    assert code == EXIT_OK
    assert json.loads(out)["pairs"][0]["measure"] == "cnf2_joint"


def test_missing_context_sets_exit_data(tmp_path, capsys):
    scm = three_node_scm("G3")
    suite = generate_context_suite(scm, single_target_plan(scm, targets=[0]), 200, 0)
    save_suite(suite, tmp_path / "s")
    code, _, err = run(["measure", "--suite", str(tmp_path / "s"), "--pair", "Xi,Xj", "--setting", "1"], capsys)
    assert code == EXIT_DATA
    assert "hard-intervenes on {Xj}" in err
    assert "observational context" in err


def test_unknown_column_exit_data(g3_suite, capsys):
    code, _, err = run(["measure", "--suite", str(g3_suite), "--pair", "Xi,Q"], capsys)
    assert code == EXIT_DATA and "Q" in err


def test_missing_suite_dir_exit_data(tmp_path, capsys):
    code, _, err = run(["measure", "--suite", str(tmp_path / "nope"), "--pair", "0,1"], capsys)
    assert code == EXIT_DATA and "suite.json" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["measure", "--suite", "x"],
        ["measure", "--suite", "x", "--pair", "0,1", "--set", "0,1,2"],
        ["measure", "--suite", "x", "--pair", "0,1", "--setting", "4"],
        ["frobnicate"],
        [],
        ["simulate", "--graph", "G9", "--out", "x"],
        ["simulate", "--graph", "G1"],
    ],
)
def test_usage_errors(argv, capsys):
    assert run(argv, capsys)[0] == EXIT_USAGE


def test_condition_with_setting_three_is_usage_error(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SMALL))
    out = tmp_path / "g6"
    assert main(["simulate", "--graph", "G6", "--spec", str(spec), "--out", str(out)]) == EXIT_OK
    capsys.readouterr()
    code, _, _ = run(["measure", "--suite", str(out), "--pair", "Xi,Xj", "--condition", "Z", "--setting", "3"], capsys)
    assert code == EXIT_USAGE
    code, text, _ = run(["measure", "--suite", str(out), "--pair", "Xi,Xj", "--condition", "Z"], capsys)
    assert code == EXIT_OK
    doc = json.loads(text)
    assert [p["setting"] for p in doc["pairs"]] == [1, 2]
    assert doc["pairs"][1]["value"] < 0.05


def test_bad_spec_is_usage_error(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"samples": 10}))
    assert run(["simulate", "--graph", "G1", "--spec", str(spec), "--out", str(tmp_path / "o")], capsys)[0] == EXIT_USAGE


def test_bench_then_report(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"er_nodes": [10], "er_samples": [100], "seeds": [0], "settings": [1]}))
    out = tmp_path / "er.json"
    assert main(["bench", "er", "--spec", str(spec), "--out", str(out)]) == EXIT_OK
    code, text, _ = run(["report", str(out), "--format", "csv"], capsys)
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 1 and rows[0]["n"] == "10" and rows[0]["contexts"] == "21"
    code, text, _ = run(["report", str(out)], capsys)
    assert code == EXIT_OK and "2n + 1" in text


def test_report_on_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code, _, err = run(["report", str(bad)], capsys)
    assert code == EXIT_DATA and "bad.json:1" in err
