from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

import oracles
from confound.bench.fixtures import GRAPHS, XI, XJ, three_node_scm
from confound.bench.runners import (
    ExperimentSpec,
    MetricsRow,
    _er_cell,
    _pair_predictions,
    ate_estimates,
    build_er_instance,
    direction_from_dag,
    precision_recall_f1,
    run_downstream_ate,
    run_er_benchmark,
    run_three_node_suite,
    true_ate,
)
from confound.graph import true_confounded_pairs, violates_confounder_minimality
from confound.measures import DetectionConfig
from confound.scm import generate_context_suite, random_shift_plan

PAIRS = [("a", "b"), ("a", "c"), ("b", "c"), ("c", "d")]


# -- metrics -----------------------------------------------------------------------


def test_perfect_prediction():
    row = precision_recall_f1(PAIRS, PAIRS)
    assert (row.precision, row.recall, row.f1) == (1.0, 1.0, 1.0)


def test_empty_prediction():
    row = precision_recall_f1([], PAIRS)
    assert (row.precision, row.recall, row.f1) == (0.0, 0.0, 0.0)


def test_two_thirds_everywhere():
    row = precision_recall_f1([("a", "b"), ("b", "a"), ("a", "c"), ("x", "y")], [("a", "b"), ("c", "a"), ("c", "d")])
    assert row.precision == pytest.approx(2 / 3)
    assert row.recall == pytest.approx(2 / 3)
    assert row.f1 == pytest.approx(2 / 3)


def test_both_empty_counts_as_perfect():
    assert precision_recall_f1([], []).f1 == 1.0


def test_metrics_carry_labels_and_validate():
    row = precision_recall_f1(PAIRS[:1], PAIRS, n=10, samples=100, setting=1, seed=0)
    assert row.to_dict()["n"] == 10
    with pytest.raises(ValueError):
        MetricsRow(1.5, 0.0, 0.0)


# -- spec --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "bad",
    [{"samples": 50}, {"graphs": ["G7"]}, {"settings": [4]}, {"threshold": 1.0}, {"workers": 0}, {"n_soft_contexts": 4}],
)
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict(bad)


def test_spec_round_trip():
    spec = ExperimentSpec(seeds=(1, 2), er_nodes=(10,))
    assert ExperimentSpec.from_dict(spec.to_dict()) == spec


def test_spec_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown"):
        ExperimentSpec.from_dict({"colour": "red"})


# -- downstream effect estimation ---------------------------------------------------


@pytest.mark.parametrize("graph", ["G2", "G3", "G4"])
def test_true_ate_matches_oracle(graph):
    scm = three_node_scm(graph)
    assert true_ate(scm, XI, XJ) == pytest.approx(oracles.ate(scm, "Xi", "Xj"), abs=1e-12)


def test_backdoor_adjustment_by_hand():
    df = pd.DataFrame(
        {
            "Z": [0, 0, 0, 0, 1, 1, 1, 1],
            "Xi": [0, 0, 1, 1, 0, 1, 1, 1],
            "Xj": [0, 0, 1, 0, 1, 1, 1, 0],
        }
    )
    unadj, adj = ate_estimates(df, "Xi", "Xj", ["Z"])
    assert unadj == pytest.approx(3 / 5 - 1 / 3)
    # stratum Z=0: 0.5 - 0 ; stratum Z=1: 2/3 - 1 ; equal weights
    assert adj == pytest.approx(0.5 * 0.5 + 0.5 * (2 / 3 - 1))


def test_downstream_adjustment_helps_on_confounded_graph():
    spec = ExperimentSpec(graphs=("G2", "G3"), seeds=(0, 1), ate_samples=(5000,))
    report = run_downstream_ate(spec)
    by_graph = {}
    for row in report["rows"]:
        by_graph.setdefault(row["graph"], []).append(row)
    for row in by_graph["G3"]:
        assert row["detected"]
        assert row["error_adjusted"] < row["error_unadjusted"] / 3
    for row in by_graph["G2"]:
        assert not row["detected"]
        assert row["error_adjusted"] == row["error_unadjusted"] < 0.05


# -- three-node suites --------------------------------------------------------------


def test_three_node_report_shape():
    spec = ExperimentSpec(graphs=("G1", "G6"), seeds=(0,), n_soft_contexts=150, samples=300)
    report = run_three_node_suite(spec)
    assert report["kind"] == "three_node"
    measures = {(r["graph"], r["measure"], r["condition"]) for r in report["rows"]}
    assert ("G1", "cnf3", "") in measures
    assert ("G6", "cnf2", "Z") in measures and ("G6", "cnf2_stream", "Z") in measures
    assert all(s["runs"] == 1 for s in report["summary"])


def test_graph_list_is_complete():
    assert GRAPHS == ("G1", "G2", "G3", "G4", "G5", "G6")


# -- ER benchmark -------------------------------------------------------------------

TINY = dict(er_nodes=(10,), er_samples=(100,), seeds=(0,), er_soft_contexts=200)


def test_er_instance_respects_latent_placement():
    spec = ExperimentSpec()
    scm = build_er_instance(12, spec, 3)
    dag = scm.dag
    assert len(dag.latent) == 3
    assert not violates_confounder_minimality(dag)
    kids = [set(dag.children(z)) for z in dag.latent]
    assert all(len(k) == 2 for k in kids)
    assert len(set().union(*kids)) == 6


def test_er_is_deterministic():
    spec = ExperimentSpec(**TINY)
    a, b = run_er_benchmark(spec), run_er_benchmark(spec)
    assert a["rows"] == b["rows"]


def test_er_worker_count_does_not_change_rows():
    spec = ExperimentSpec(**{**TINY, "seeds": (0, 1), "settings": (2, 3)})
    serial = run_er_benchmark(spec)["rows"]
    pooled = run_er_benchmark(ExperimentSpec(**{**spec.to_dict(), "workers": 2}))["rows"]
    assert serial == pooled


def test_er_rows_and_notes():
    report = run_er_benchmark(ExperimentSpec(**TINY))
    assert [(r["setting"], r["contexts"]) for r in report["rows"]] == [(1, 21), (2, 201), (3, 201)]
    assert any("2n + 1" in note for note in report["notes"])
    assert {s["metric"] for s in report["summary"]} == {"precision", "recall", "f1"}


@pytest.mark.parametrize("seed", range(3))
def test_zero_latent_graph_has_no_detections(seed):
    spec = ExperimentSpec(**{**TINY, "n_latents": 0, "er_samples": (300,)})
    assert not true_confounded_pairs(build_er_instance(10, spec, seed).dag)
    rows = _er_cell(10, seed, spec)
    assert [(r.precision, r.recall, r.f1) for r in rows] == [(1.0, 1.0, 1.0)] * 3


def test_null_calibration_false_positive_rate_on_zero_latent_graphs():
    spec = ExperimentSpec(n_latents=0, edge_prob=0.0)
    cfg = DetectionConfig(calibration="null_quantile", trials=100)
    flagged = tested = 0
    for seed in range(3):
        scm = build_er_instance(10, spec, seed)
        plan = random_shift_plan(scm, 600, 0.2, seed)
        suite = generate_context_suite(scm, plan, 100, seed)
        flagged += len(_pair_predictions(suite, 2, scm.dag, cfg))
        tested += 45
    # 135 null pairs at q = 0.95: mean 6.75, sd about 2.5
    assert tested == 135
    assert flagged <= 6.75 + 3 * np.sqrt(135 * 0.05 * 0.95)


def test_direction_from_dag():
    dag = three_node_scm("G4").dag
    assert direction_from_dag(dag, "Xi", "Xj") == "i_to_j"
    assert direction_from_dag(dag, "Xj", "Xi") == "j_to_i"
    assert direction_from_dag(three_node_scm("G3").dag, "Xi", "Xj") == "none_known"
